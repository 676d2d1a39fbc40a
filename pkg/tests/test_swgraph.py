"""Graph construction, search, invariants, and serialization."""

import numpy as np
import pytest

from nmknn import (KL, BuildParams, Dataset, DistanceMode, DistanceSpec,
                   EvalContext, EvalCounter, GenSpec, SearchParams, SwGraph,
                   gen_randhist, knn_exact, resolve_splits)
from nmknn.errors import DataFormatError, InvalidArgumentError

KL_SPEC = DistanceSpec(KL)


def _params(nn=5, efc=30, spec=KL_SPEC, seed=0):
    return BuildParams(nn=nn, ef_construction=efc, index_spec=spec, seed=seed)


def _build(ds, n_data=None, **kw):
    n = n_data if n_data is not None else len(ds)
    split = resolve_splits(ds, 1, len(ds) - n, seed=0)[0] if n < len(ds) else None
    if split is None:
        class _AllSplit:
            split_id = 0
            data_indices = np.arange(len(ds))
            queries = ()
        split = _AllSplit()
    return SwGraph.build(ds, split, _params(**kw))


class TestInsertion:
    def test_first_insert_becomes_entry_point(self):
        ds = gen_randhist(GenSpec(n=4, d=4, seed=1))
        g = SwGraph(_params())
        g.insert(2, data=ds)
        assert g.n_nodes == 1
        assert g.entry_point == 0
        assert g.neighbors(0).size == 0

    def test_second_insert_single_undirected_edge(self):
        ds = gen_randhist(GenSpec(n=4, d=4, seed=1))
        g = SwGraph(_params(nn=15))
        g.insert(0, data=ds)
        g.insert(1)
        assert g.neighbors(0).tolist() == [1]
        assert g.neighbors(1).tolist() == [0]

    def test_duplicate_insert_rejected(self):
        ds = gen_randhist(GenSpec(n=4, d=4, seed=1))
        g = SwGraph(_params())
        g.insert(0, data=ds)
        with pytest.raises(InvalidArgumentError):
            g.insert(0)

    def test_out_of_range_insert_rejected(self):
        ds = gen_randhist(GenSpec(n=4, d=4, seed=1))
        g = SwGraph(_params())
        with pytest.raises(InvalidArgumentError):
            g.insert(7, data=ds)

    def test_adjacency_symmetry_after_incremental_build(self):
        ds = gen_randhist(GenSpec(n=100, d=6, seed=3))
        g = SwGraph(_params(nn=5, efc=20))
        for i in range(100):
            g.insert(i, data=ds if i == 0 else None)
        for node in range(g.n_nodes):
            for nb in g.neighbors(node):
                assert node in g.neighbors(nb)

    def test_new_node_degree_at_least_min_nn(self):
        ds = gen_randhist(GenSpec(n=60, d=6, seed=4))
        g = SwGraph(_params(nn=5, efc=20))
        for i in range(60):
            g.insert(i, data=ds if i == 0 else None)
            node = g.n_nodes - 1
            assert g.degree(node) >= min(5, g.n_nodes - 1)


class TestBuild:
    def test_single_point(self):
        ds = gen_randhist(GenSpec(n=1, d=4, seed=1))
        g = _build(ds)
        assert g.n_nodes == 1

    def test_deterministic_adjacency(self):
        ds = gen_randhist(GenSpec(n=120, d=6, seed=5))
        a = _build(ds, nn=5, efc=25, seed=2)
        b = _build(ds, nn=5, efc=25, seed=2)
        assert a.n_nodes == b.n_nodes
        np.testing.assert_array_equal(a.node_to_data, b.node_to_data)
        for node in range(a.n_nodes):
            np.testing.assert_array_equal(a.neighbors(node), b.neighbors(node))

    def test_seed_changes_insertion_order(self):
        ds = gen_randhist(GenSpec(n=120, d=6, seed=5))
        a = _build(ds, seed=2)
        b = _build(ds, seed=3)
        assert not np.array_equal(a.node_to_data, b.node_to_data)

    def test_empty_split_rejected(self):
        ds = gen_randhist(GenSpec(n=4, d=4, seed=1))

        class _Empty:
            split_id = 0
            data_indices = np.array([], dtype=np.int64)
            queries = ()

        with pytest.raises(InvalidArgumentError):
            SwGraph.build(ds, _Empty(), _params())

    def test_build_counts_evals(self):
        ds = gen_randhist(GenSpec(n=50, d=4, seed=6))
        g = _build(ds)
        assert g.build_evals > 0
        assert g.build_time_s > 0


class TestSearch:
    def test_single_node_graph(self):
        ds = gen_randhist(GenSpec(n=1, d=4, seed=1))
        g = _build(ds)
        res = g.knn_search(ds.point(0), 1, SearchParams(4, KL_SPEC))
        assert res.indices == (0,)

    def test_indexed_point_found_at_zero_distance(self):
        ds = gen_randhist(GenSpec(n=200, d=6, seed=7))
        g = _build(ds, nn=10, efc=50)
        res = g.knn_search(ds.point(17), 3, SearchParams(64, KL_SPEC))
        assert res.indices[0] == 17
        assert abs(res.distances[0]) < 1e-12

    def test_exact_when_ef_covers_graph(self):
        ds = gen_randhist(GenSpec(n=50, d=4, seed=8))
        g = _build(ds, nn=5, efc=20)
        ctx = EvalContext(ds)
        for qi in (0, 13, 31):
            q = ds.point(qi)
            want = knn_exact(ds, np.arange(50), q, 10, KL_SPEC, ctx=ctx)
            got = g.knn_search(q, 10, SearchParams(50, KL_SPEC))
            assert got.indices == want.indices
            assert got.distances == pytest.approx(want.distances, rel=1e-12)

    def test_recall_on_randhist(self):
        ds = gen_randhist(GenSpec(n=1000, d=8, seed=9))
        rs = resolve_splits(ds, 1, 50, seed=9)[0]
        g = SwGraph.build(ds, rs, BuildParams(nn=15, ef_construction=100,
                                              index_spec=KL_SPEC, seed=9))
        ctx = EvalContext(ds)
        hits_1024 = hits_4096 = total = 0
        for q in rs.queries:
            truth = set(knn_exact(ds, rs.data_indices, q, 10, KL_SPEC, ctx=ctx).indices)
            got = set(g.knn_search(q, 10, SearchParams(1024, KL_SPEC)).indices)
            hits_1024 += len(truth & got)
            got = set(g.knn_search(q, 10, SearchParams(4096, KL_SPEC)).indices)
            hits_4096 += len(truth & got)
            total += 10
        assert hits_1024 / total >= 0.9
        assert hits_4096 / total >= 0.99

    def test_search_spec_independent_of_index_spec(self):
        ds = gen_randhist(GenSpec(n=80, d=6, seed=10))
        g = _build(ds, nn=8, efc=30,
                   spec=DistanceSpec(KL, DistanceMode.SYM_MIN))
        q = gen_randhist(GenSpec(n=1, d=6, seed=99)).point(0)
        want = knn_exact(ds, np.arange(80), q, 5, KL_SPEC)
        got = g.knn_search(q, 5, SearchParams(80, KL_SPEC))
        assert got.indices == want.indices

    def test_counter_and_result_evals_agree(self):
        ds = gen_randhist(GenSpec(n=100, d=6, seed=11))
        g = _build(ds, nn=5, efc=20)
        c = EvalCounter()
        res = g.knn_search(ds.point(0), 5, SearchParams(16, KL_SPEC), counter=c)
        assert res.evals == c.base_evals > 0

    def test_k_must_be_positive(self):
        ds = gen_randhist(GenSpec(n=10, d=4, seed=1))
        g = _build(ds)
        with pytest.raises(InvalidArgumentError):
            g.knn_search(ds.point(0), 0, SearchParams(4, KL_SPEC))


class TestSerialization:
    def _graph(self, n=90):
        ds = gen_randhist(GenSpec(n=n, d=6, seed=12))
        return ds, _build(ds, nn=6, efc=25)

    def test_round_trip(self, tmp_path):
        ds, g = self._graph()
        path = tmp_path / "g.swg"
        g.save(path)
        back = SwGraph.load(path, ds)
        assert back.n_nodes == g.n_nodes
        assert back.entry_point == g.entry_point
        np.testing.assert_array_equal(back.node_to_data, g.node_to_data)
        for node in range(g.n_nodes):
            np.testing.assert_array_equal(back.neighbors(node), g.neighbors(node))

    def test_loaded_graph_searches_identically(self, tmp_path):
        ds, g = self._graph()
        path = tmp_path / "g.swg"
        g.save(path)
        back = SwGraph.load(path, ds)
        q = gen_randhist(GenSpec(n=1, d=6, seed=50)).point(0)
        a = g.knn_search(q, 5, SearchParams(16, KL_SPEC))
        b = back.knn_search(q, 5, SearchParams(16, KL_SPEC))
        assert a.indices == b.indices

    def test_truncated_file_rejected(self, tmp_path):
        ds, g = self._graph()
        path = tmp_path / "g.swg"
        g.save(path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(DataFormatError):
            SwGraph.load(path, ds)

    def test_trailing_garbage_rejected(self, tmp_path):
        ds, g = self._graph()
        path = tmp_path / "g.swg"
        g.save(path)
        path.write_bytes(path.read_bytes() + b"\x00\x01")
        with pytest.raises(DataFormatError):
            SwGraph.load(path, ds)

    def test_wrong_magic_rejected(self, tmp_path):
        ds, g = self._graph()
        path = tmp_path / "g.swg"
        g.save(path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError):
            SwGraph.load(path, ds)

    def test_dataset_hash_mismatch_rejected(self, tmp_path):
        ds, g = self._graph()
        other = gen_randhist(GenSpec(n=90, d=6, seed=13))
        path = tmp_path / "g.swg"
        g.save(path)
        with pytest.raises(DataFormatError):
            SwGraph.load(path, other)

    def test_params_survive_round_trip(self, tmp_path):
        ds, g = self._graph()
        path = tmp_path / "g.swg"
        g.save(path)
        back = SwGraph.load(path, ds)
        assert back.build_params.nn == g.build_params.nn
        assert back.build_params.ef_construction == g.build_params.ef_construction
        assert back.build_params.index_spec == g.build_params.index_spec
        assert back.build_params.seed == g.build_params.seed
