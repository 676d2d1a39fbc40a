"""Navigable small-world proximity graph: incremental construction and
greedy priority-queue search from a single entry point.

The index-time and query-time distances are independent: the graph is
built under build_params.index_spec and searched under whatever spec the
SearchParams carry. Edges are undirected, degrees are unbounded, and
there is no pruning; the entry point is the first inserted node.
"""

from __future__ import annotations

import heapq
import struct
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .bruteforce import KnnResult, Neighbor
from .data import DOMAIN_PERM, keyed_rng
from .distances import (DistanceSpec, EvalContext, EvalCounter, format_kind,
                        format_mode, parse_kind, parse_mode)
from .errors import DataFormatError, InvalidArgumentError

_MAGIC = b"NMKNNIDX"
_VERSION = 1


@dataclass(frozen=True)
class BuildParams:
    nn: int
    ef_construction: int
    index_spec: DistanceSpec
    seed: int = 0

    def __post_init__(self):
        if self.nn < 1:
            raise InvalidArgumentError("nn must be >= 1")
        if self.ef_construction < 1:
            raise InvalidArgumentError("ef_construction must be >= 1")
        if self.ef_construction < self.nn:
            warnings.warn(f"ef_construction = {self.ef_construction} is below nn = {self.nn}; "
                          "construction searches may return fewer candidates than intended")


@dataclass(frozen=True)
class SearchParams:
    ef_search: int
    query_spec: DistanceSpec

    def __post_init__(self):
        if self.ef_search < 1:
            raise InvalidArgumentError("ef_search must be >= 1")


class SwGraph:
    """Undirected adjacency lists over inserted data points.

    Nodes are numbered in insertion order; node_to_data maps them back to
    dataset indices. A built graph is immutable from the searcher's point
    of view and safe to query concurrently.
    """

    def __init__(self, params: BuildParams):
        self.build_params = params
        self.entry_point = None
        self._n = 0
        self._adj = np.full((16, 2 * params.nn), -1, dtype=np.int32)
        self._deg = np.zeros(16, dtype=np.int32)
        self._node_to_data = np.zeros(16, dtype=np.int64)
        self._data_to_node = {}
        self._dataset = None
        self._ctx = None
        self._build_counter = EvalCounter()
        self.build_time_s = 0.0

    # ---- basic accessors

    @property
    def n_nodes(self):
        return self._n

    def __len__(self):
        return self._n

    @property
    def build_evals(self):
        return self._build_counter.base_evals

    @property
    def node_to_data(self):
        return self._node_to_data[:self._n].copy()

    def neighbors(self, node):
        if not 0 <= node < self._n:
            raise InvalidArgumentError(f"node {node} out of range")
        return self._adj[node, :self._deg[node]].copy()

    def degree(self, node):
        if not 0 <= node < self._n:
            raise InvalidArgumentError(f"node {node} out of range")
        return int(self._deg[node])

    # ---- construction

    def _bind(self, data):
        if data is None:
            if self._dataset is None:
                raise InvalidArgumentError("graph is not bound to a dataset")
            return
        if self._dataset is None:
            self._dataset = data
            if self._ctx is None or self._ctx.dataset is not data:
                self._ctx = EvalContext(data)
        elif data is not self._dataset and data.content_hash() != self._dataset.content_hash():
            raise InvalidArgumentError("dataset does not match the one this graph was built on")

    def _grow_nodes(self, n):
        cap = self._adj.shape[0]
        if n <= cap:
            return
        new_cap = max(2 * cap, n)
        self._adj = np.vstack([self._adj,
                               np.full((new_cap - cap, self._adj.shape[1]), -1, np.int32)])
        self._deg = np.concatenate([self._deg, np.zeros(new_cap - cap, np.int32)])
        self._node_to_data = np.concatenate([self._node_to_data,
                                             np.zeros(new_cap - cap, np.int64)])

    def _add_edge(self, a, b):
        adj, deg = self._adj, self._deg
        width = adj.shape[1]
        if deg[a] >= width or deg[b] >= width:
            self._adj = adj = np.hstack([adj, np.full((adj.shape[0], width), -1, np.int32)])
        adj[a, deg[a]] = b
        deg[a] += 1
        adj[b, deg[b]] = a
        deg[b] += 1

    def insert(self, new_point_index, data=None) -> "SwGraph":
        """Insert one data point: search the current graph for its nn nearest
        under the index-time distance (queue depth ef_construction) and
        connect undirected edges to them."""
        self._bind(data)
        new_point_index = int(new_point_index)
        if new_point_index in self._data_to_node:
            raise InvalidArgumentError(f"point {new_point_index} is already in the graph")
        if not 0 <= new_point_index < len(self._dataset):
            raise InvalidArgumentError(f"point index {new_point_index} out of dataset range")
        node = self._n
        self._grow_nodes(node + 1)
        self._node_to_data[node] = new_point_index
        self._data_to_node[new_point_index] = node
        self._n = node + 1
        if node == 0:
            self.entry_point = 0
            return self
        params = self.build_params
        point = self._dataset.point(new_point_index)
        rows_fn = self._ctx.query(params.index_spec, point, self._build_counter)
        res = self._beam(rows_fn, cap=max(params.ef_construction, params.nn), nmax=node)
        node_data = self._node_to_data
        found = [(-nd, int(node_data[-nv]), -nv) for nd, nv in res]
        for _, _, v in heapq.nsmallest(params.nn, found):
            self._add_edge(node, v)
        return self

    @classmethod
    def build(cls, data, split, params: BuildParams, ctx: EvalContext | None = None) -> "SwGraph":
        """Insert all data-side points of the split in a seed-derived random order."""
        order = np.asarray(split.data_indices, dtype=np.int64)
        if order.size == 0:
            raise InvalidArgumentError("split data side is empty")
        order = keyed_rng(params.seed, DOMAIN_PERM).permutation(order)
        g = cls(params)
        if ctx is not None:
            if ctx.dataset is not data:
                raise InvalidArgumentError("ctx was prepared for a different dataset")
            g._ctx = ctx
        g._grow_nodes(order.size)
        t0 = time.perf_counter()
        for idx in order.tolist():
            g.insert(idx, data)
        g.build_time_s = time.perf_counter() - t0
        return g

    # ---- search

    def _beam(self, rows_fn, cap, nmax):
        """Greedy beam from node 0 over the first nmax nodes.

        Returns the result queue as (-distance, -node) pairs, at most cap
        of them. Stops once the closest unexpanded candidate is strictly
        farther than the worst kept result and the queue is full.
        """
        node_data = self._node_to_data
        adj, deg = self._adj, self._deg
        visited = np.zeros(nmax, dtype=bool)
        e = self.entry_point
        d0 = float(rows_fn(node_data[e:e + 1])[0])
        visited[e] = True
        cand = [(d0, e)]
        res = [(-d0, -e)]
        worst = d0
        full = cap <= 1
        push, pop, pushpop = heapq.heappush, heapq.heappop, heapq.heappushpop
        while cand:
            dist, u = pop(cand)
            if full and dist > worst:
                break
            nbrs = adj[u, :deg[u]]
            unv = nbrs[~visited[nbrs]]
            if unv.size == 0:
                continue
            visited[unv] = True
            dd = rows_fn(node_data[unv])
            for dv, v in zip(dd.tolist(), unv.tolist()):
                # nodes already farther than the full queue's worst can
                # neither enter the results nor extend the search
                if full and dv > worst:
                    continue
                push(cand, (dv, v))
                if full:
                    pushpop(res, (-dv, -v))
                else:
                    push(res, (-dv, -v))
                    full = len(res) >= cap
                worst = -res[0][0]
        return res

    def knn_search(self, query, k: int, params: SearchParams, data=None,
                   counter: EvalCounter | None = None) -> KnnResult:
        """k nearest stored points under params.query_spec, data point left.

        The result queue is capped at max(ef_search, k); ties in the final
        ranking break toward the lower data index.
        """
        if self._n == 0:
            raise InvalidArgumentError("cannot search an empty graph")
        if k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if data is not None:
            self._bind(data)
        local = EvalCounter()
        rows_fn = self._ctx.query(params.query_spec, query, local)
        t0 = time.perf_counter()
        res = self._beam(rows_fn, cap=max(params.ef_search, k), nmax=self._n)
        node_data = self._node_to_data
        found = [(-nd, int(node_data[-nv])) for nd, nv in res]
        top = heapq.nsmallest(k, found)
        elapsed = time.perf_counter() - t0
        if counter is not None:
            counter.add(local.base_evals)
        neighbors = tuple(Neighbor(idx, dist) for dist, idx in top)
        return KnnResult(neighbors=neighbors, evals=local.base_evals, elapsed=elapsed)

    # ---- serialization

    def to_bytes(self) -> bytes:
        if self._n == 0 or self._dataset is None:
            raise InvalidArgumentError("cannot serialize an empty graph")
        p = self.build_params
        kind = format_kind(p.index_spec.kind).encode()
        mode = format_mode(p.index_spec.mode).encode()
        out = bytearray()
        out += _MAGIC
        out += struct.pack("<I", _VERSION)
        out += bytes.fromhex(self._dataset.content_hash())
        out += struct.pack("<IIq", p.nn, p.ef_construction, p.seed)
        out += struct.pack("<H", len(kind)) + kind
        out += struct.pack("<H", len(mode)) + mode
        out += struct.pack("<II", self._n, self.entry_point)
        out += self._node_to_data[:self._n].astype("<u4").tobytes()
        for i in range(self._n):
            d = int(self._deg[i])
            out += struct.pack("<I", d)
            out += self._adj[i, :d].astype("<u4").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes, data) -> "SwGraph":
        try:
            return cls._parse(blob, data)
        except DataFormatError:
            raise
        except (struct.error, IndexError, ValueError) as e:
            raise DataFormatError(f"truncated or corrupt index: {e}") from e

    @classmethod
    def _parse(cls, blob, data):
        if blob[:8] != _MAGIC:
            raise DataFormatError("not an index file (bad magic)")
        off = 8
        (version,) = struct.unpack_from("<I", blob, off)
        off += 4
        if version != _VERSION:
            raise DataFormatError(f"unsupported index version {version}")
        file_hash = blob[off:off + 32].hex()
        off += 32
        if len(file_hash) != 64:
            raise DataFormatError("truncated index header")
        if file_hash != data.content_hash():
            raise DataFormatError("index was built for a different dataset (hash mismatch)")
        nn, efc, seed = struct.unpack_from("<IIq", blob, off)
        off += 16
        (klen,) = struct.unpack_from("<H", blob, off)
        off += 2
        kind_text = blob[off:off + klen].decode()
        off += klen
        (mlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        mode_text = blob[off:off + mlen].decode()
        off += mlen
        try:
            spec = DistanceSpec(parse_kind(kind_text), parse_mode(mode_text))
        except InvalidArgumentError as e:
            raise DataFormatError(f"bad distance spec in index: {e}") from e
        n, entry = struct.unpack_from("<II", blob, off)
        off += 8
        if n < 1 or entry >= n:
            raise DataFormatError("bad node count or entry point")
        node_map = np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int64)
        off += 4 * n
        if node_map.size < n or (node_map >= len(data)).any():
            raise DataFormatError("node map references points outside the dataset")
        degs = []
        adj_rows = []
        for _ in range(n):
            (d,) = struct.unpack_from("<I", blob, off)
            off += 4
            row = np.frombuffer(blob, dtype="<u4", count=d, offset=off)
            if row.size < d:
                raise DataFormatError("truncated adjacency list")
            off += 4 * d
            degs.append(d)
            adj_rows.append(row.astype(np.int32))
        if off != len(blob):
            raise DataFormatError(f"{len(blob) - off} trailing bytes after adjacency data")

        g = cls(BuildParams(nn=nn, ef_construction=efc, index_spec=spec, seed=seed))
        g._bind(data)
        width = max(max(degs), 2 * nn)
        g._adj = np.full((n, width), -1, dtype=np.int32)
        g._deg = np.array(degs, dtype=np.int32)
        for i, row in enumerate(adj_rows):
            if row.size and row.max() >= n:
                raise DataFormatError("adjacency references an unknown node")
            g._adj[i, :row.size] = row
        g._node_to_data = node_map
        g._data_to_node = {int(v): i for i, v in enumerate(node_map)}
        g._n = n
        g.entry_point = int(entry)
        return g

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path, data) -> "SwGraph":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read(), data)
