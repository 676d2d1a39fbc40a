"""Recall computation, the filter-and-refine pipeline, candidate-budget
sweeps, and the two experiment series.

Series one generates candidates by brute-force scan under a proxy
distance and re-ranks them with the original distance, sweeping the
candidate budget k_c. Series two builds a small-world graph under an
index-time distance and queries it either directly (query mode none) or
through a k_c-NN search under a symmetrized distance followed by
re-ranking. Both emit ExperimentRow records with a fixed CSV schema; one
row per configuration and split plus a split=avg summary row.

Speedups are reported twice: wall time against a measured brute-force
baseline, and the machine-independent ratio of base-distance evaluation
counts (baseline cost is exactly n_data times the original distance's
cost multiplier).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bruteforce import KnnResult, Neighbor, knn_exact, select_smallest
from .data import resolve_splits
from .distances import (DistanceKind, DistanceMode, DistanceSpec, EvalContext,
                        EvalCounter, cost_multiplier, format_kind)
from .errors import ConfigError, InvalidArgumentError
from .swgraph import BuildParams, SearchParams, SwGraph

RECALL_TARGET = 0.99

CSV_COLUMNS = ("dataset", "distance", "index_mode", "query_mode", "k", "kc",
               "ef_search", "split", "recall", "evals_per_query",
               "evals_speedup", "time_speedup", "build_time_s")


@dataclass(frozen=True)
class RecallReport:
    k: int
    recall: float
    per_query: tuple

    @classmethod
    def from_results(cls, found_list, truth_list, k):
        vals = tuple(recall_at_k(f, t, k) for f, t in zip(found_list, truth_list))
        return cls(k=k, recall=float(np.mean(vals)), per_query=vals)


@dataclass(frozen=True)
class ExperimentRow:
    method: str
    dataset_id: str
    distance: str
    index_mode: str
    query_mode: str
    k: int
    kc: int | None
    ef_search: int | None
    split: str
    recall: float
    evals_per_query: float
    evals_speedup: float
    time_speedup: float
    time_per_query_s: float
    build_time_s: float | None


def recall_at_k(found: KnnResult, truth: KnnResult, k: int) -> float:
    """Fraction of the true top-k present in the found top-k (order-free)."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    denom = min(k, len(truth.neighbors))
    if denom == 0:
        return 0.0
    fs = set(found.indices[:k])
    ts = set(truth.indices[:k])
    return len(fs & ts) / denom


def map_queries(fn, items, threads: int = 1):
    """Apply fn to each query, optionally across a thread pool.

    Results come back in input order and each call uses its own counters,
    so the output is independent of the worker count.
    """
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def filter_and_refine(data, split_data, query, k, k_c, proxy: DistanceSpec,
                      original: DistanceSpec, ctx: EvalContext | None = None,
                      graph: SwGraph | None = None, ef_search: int | None = None,
                      counter=None) -> KnnResult:
    """Top-k under the original distance from k_c proxy candidates.

    Candidates come from a brute-force scan (default) or a k_c-NN graph
    search; the reported cost is the candidate stage plus the k_c
    re-ranking evaluations.
    """
    if k_c < k:
        raise InvalidArgumentError(f"k_c = {k_c} must be >= k = {k}")
    if graph is None and ef_search is not None:
        raise InvalidArgumentError("ef_search only applies to the graph candidate source")
    if ctx is None:
        ctx = EvalContext(data)
    idx = np.asarray(split_data, dtype=np.int64)
    kce = min(k_c, idx.size)
    local_evals = 0
    t0 = time.perf_counter()
    if graph is None:
        cand = knn_exact(data, idx, query, kce, proxy, ctx=ctx)
    else:
        ef = k_c if ef_search is None else ef_search
        cand = graph.knn_search(query, kce, SearchParams(ef, proxy))
    local_evals += cand.evals
    cand_idx = np.array(cand.indices, dtype=np.int64)
    refine_counter = EvalCounter()
    rd = ctx.query(original, query, refine_counter)(cand_idx)
    order = select_smallest(rd, cand_idx, k)
    elapsed = time.perf_counter() - t0
    local_evals += refine_counter.base_evals
    if counter is not None:
        counter.add(local_evals)
    neighbors = tuple(Neighbor(int(cand_idx[p]), float(rd[p])) for p in order)
    return KnnResult(neighbors=neighbors, evals=local_evals, elapsed=elapsed)


@dataclass(frozen=True)
class SweepPoint:
    kc: int
    recall: float
    evals_per_query: float
    time_per_query: float


@dataclass(frozen=True)
class SweepSummary:
    """First k_c reaching the 0.99 recall target, or (None, best recall)."""
    kc: int | None
    recall: float


def _summarize(points):
    for pt in points:
        if pt.recall >= RECALL_TARGET:
            return SweepSummary(kc=pt.kc, recall=pt.recall)
    return SweepSummary(kc=None, recall=max(pt.recall for pt in points))


def kc_sweep(data, split_data, queries, truths, k, max_exp, proxy: DistanceSpec,
             original: DistanceSpec, ctx: EvalContext | None = None,
             graph: SwGraph | None = None, ef_search: int | None = None,
             threads: int = 1):
    """Sweep k_c = k * 2^i for i = 0..max_exp; mean recall per budget.

    With brute-force candidates the sweep exploits nested candidate
    prefixes: one scan at the largest budget yields every smaller budget
    exactly (the tie-break is deterministic), and eval costs are charged
    as an independent run would: scan + k_c re-rankings. Returns the
    per-budget points and the first budget reaching the recall target.
    """
    if max_exp < 0:
        raise InvalidArgumentError("max_exp must be >= 0")
    if ctx is None:
        ctx = EvalContext(data)
    idx = np.asarray(split_data, dtype=np.int64)
    n = idx.size
    kcs = [k * 2 ** i for i in range(max_exp + 1)]
    truth_sets = [frozenset(t.indices[:k]) for t in truths]
    denoms = [min(k, len(t.neighbors)) for t in truths]

    if graph is not None:
        def one(args):
            qi, q = args
            recs, evs, tms = [], [], []
            for kc in kcs:
                res = filter_and_refine(data, idx, q, k, kc, proxy, original,
                                        ctx=ctx, graph=graph, ef_search=ef_search)
                recs.append(len(truth_sets[qi].intersection(res.indices)) / denoms[qi])
                evs.append(res.evals)
                tms.append(res.elapsed)
            return recs, evs, tms

        per_q = map_queries(one, list(enumerate(queries)), threads)
        points = []
        for j, kc in enumerate(kcs):
            points.append(SweepPoint(
                kc=kc,
                recall=float(np.mean([r[0][j] for r in per_q])),
                evals_per_query=float(np.mean([r[1][j] for r in per_q])),
                time_per_query=float(np.mean([r[2][j] for r in per_q])),
            ))
        return points, _summarize(points)

    # brute-force candidates: one scan at the largest budget covers all
    kc_cap = min(kcs[-1], n)
    mult_p, mult_o = cost_multiplier(proxy), cost_multiplier(original)

    def one(args):
        qi, q = args
        cand = knn_exact(data, idx, q, kc_cap, proxy, ctx=ctx)
        cand_idx = np.array(cand.indices, dtype=np.int64)
        t0 = time.perf_counter()
        rd = ctx.query(original, q)(cand_idx)
        t_refine = time.perf_counter() - t0
        recs, tms = [], []
        for kc in kcs:
            kce = min(kc, n)
            t0 = time.perf_counter()
            order = select_smallest(rd[:kce], cand_idx[:kce], k)
            t_sel = time.perf_counter() - t0
            found = cand_idx[:kce][order]
            recs.append(len(truth_sets[qi].intersection(found.tolist())) / denoms[qi])
            # wall-time estimate for an independent run at this budget:
            # full scan + the kce portion of the re-ranking pass
            tms.append(cand.elapsed + t_refine * (kce / kc_cap) + t_sel)
        return recs, tms

    per_q = map_queries(one, list(enumerate(queries)), threads)
    points = []
    for j, kc in enumerate(kcs):
        kce = min(kc, n)
        points.append(SweepPoint(
            kc=kc,
            recall=float(np.mean([r[0][j] for r in per_q])),
            evals_per_query=float(n * mult_p + kce * mult_o),
            time_per_query=float(np.mean([r[1][j] for r in per_q])),
        ))
    return points, _summarize(points)


@dataclass(frozen=True)
class SeriesOneConfig:
    dataset: object
    dataset_id: str
    kind: DistanceKind
    proxy_modes: tuple
    k: int = 10
    max_exp: int = 7
    num_splits: int = 3
    queries_per_split: int = 1000
    seed: int = 0
    query_dataset: object = None
    truths: tuple | None = None
    threads: int = 1


@dataclass(frozen=True)
class SeriesTwoConfig:
    dataset: object
    dataset_id: str
    kind: DistanceKind
    index_mode: DistanceMode
    query_mode: DistanceMode
    k: int = 10
    ef_max_exp: int = 12
    kc_max_exp: int = 7
    nn: int = 15
    ef_construction: int = 100
    num_splits: int = 3
    queries_per_split: int = 1000
    seed: int = 0
    query_dataset: object = None
    truths: tuple | None = None
    graph_provider: object = None
    threads: int = 1


def _check_kind_data(kind: DistanceKind, dataset):
    if kind.is_sparse != (dataset.kind == "sparse"):
        raise ConfigError(
            f"distance {format_kind(kind)} is incompatible with a {dataset.kind} dataset")


def _make_spec(kind, mode, dataset) -> DistanceSpec:
    try:
        spec = DistanceSpec(kind, mode)
    except InvalidArgumentError as e:
        raise ConfigError(str(e)) from e
    if mode is DistanceMode.L2_PROXY and dataset.kind != "dense":
        raise ConfigError("l2 proxy mode requires dense data")
    return spec


def _truths_and_baseline(cfg, rs, original, ctx):
    """Exact top-k per query plus the measured brute-force time baseline."""
    if cfg.truths is not None:
        truths = cfg.truths[rs.split_id]
        if len(truths) != len(rs.queries):
            raise ConfigError(f"cached truth for split {rs.split_id} has {len(truths)} "
                              f"queries, expected {len(rs.queries)}")
        sample = rs.queries[:min(64, len(rs.queries))]
        times = [knn_exact(cfg.dataset, rs.data_indices, q, cfg.k, original, ctx=ctx).elapsed
                 for q in sample]
        return truths, float(np.mean(times))
    results = map_queries(
        lambda q: knn_exact(cfg.dataset, rs.data_indices, q, cfg.k, original, ctx=ctx),
        rs.queries, cfg.threads)
    return results, float(np.mean([r.elapsed for r in results]))


def _avg_row(split_rows):
    r0 = split_rows[0]
    builds = [r.build_time_s for r in split_rows if r.build_time_s is not None]
    return ExperimentRow(
        method=r0.method, dataset_id=r0.dataset_id, distance=r0.distance,
        index_mode=r0.index_mode, query_mode=r0.query_mode, k=r0.k, kc=r0.kc,
        ef_search=r0.ef_search, split="avg",
        recall=float(np.mean([r.recall for r in split_rows])),
        evals_per_query=float(np.mean([r.evals_per_query for r in split_rows])),
        evals_speedup=float(np.mean([r.evals_speedup for r in split_rows])),
        time_speedup=float(np.mean([r.time_speedup for r in split_rows])),
        time_per_query_s=float(np.mean([r.time_per_query_s for r in split_rows])),
        build_time_s=float(np.mean(builds)) if builds else None,
    )


def run_series_one(cfg: SeriesOneConfig):
    """Brute-force proxy study: kc_sweep per proxy mode, split-averaged.

    Returns (rows, summaries) where summaries maps each proxy mode to the
    first split-averaged k_c reaching the recall target.
    """
    _check_kind_data(cfg.kind, cfg.dataset)
    original = DistanceSpec(cfg.kind)
    proxies = [(m, _make_spec(cfg.kind, m, cfg.dataset)) for m in cfg.proxy_modes]
    resolved = resolve_splits(cfg.dataset, cfg.num_splits, cfg.queries_per_split,
                              cfg.seed, cfg.query_dataset)
    if cfg.truths is not None and len(cfg.truths) != len(resolved):
        raise ConfigError(f"truth cache has {len(cfg.truths)} splits, "
                          f"expected {len(resolved)}")
    ctx = EvalContext(cfg.dataset)
    cells = {}
    for rs in resolved:
        truths, baseline_time = _truths_and_baseline(cfg, rs, original, ctx)
        baseline_evals = rs.data_indices.size * cost_multiplier(original)
        for mi, (mode, proxy) in enumerate(proxies):
            points, _ = kc_sweep(cfg.dataset, rs.data_indices, rs.queries, truths,
                                 cfg.k, cfg.max_exp, proxy, original, ctx=ctx,
                                 threads=cfg.threads)
            for pt in points:
                row = ExperimentRow(
                    method=f"bruteforce({mode.value})", dataset_id=cfg.dataset_id,
                    distance=format_kind(cfg.kind), index_mode=mode.value,
                    query_mode="none", k=cfg.k, kc=pt.kc, ef_search=None,
                    split=str(rs.split_id), recall=pt.recall,
                    evals_per_query=pt.evals_per_query,
                    evals_speedup=baseline_evals / pt.evals_per_query,
                    time_speedup=baseline_time / pt.time_per_query,
                    time_per_query_s=pt.time_per_query, build_time_s=None)
                cells.setdefault((mi, pt.kc), []).append(row)
    rows = []
    summaries = {}
    for mi, (mode, _) in enumerate(proxies):
        avg_points = []
        for kc in [cfg.k * 2 ** i for i in range(cfg.max_exp + 1)]:
            split_rows = cells[(mi, kc)]
            avg = _avg_row(split_rows)
            rows.extend(split_rows)
            rows.append(avg)
            avg_points.append(SweepPoint(kc=kc, recall=avg.recall,
                                         evals_per_query=avg.evals_per_query,
                                         time_per_query=avg.time_per_query_s))
        summaries[mode] = _summarize(avg_points)
    return rows, summaries


def run_series_two(cfg: SeriesTwoConfig):
    """Graph study: index-time mode a, query-time mode b, swept over
    ef_search (and k_c when b involves re-ranking). Returns rows."""
    _check_kind_data(cfg.kind, cfg.dataset)
    if cfg.query_mode not in (DistanceMode.ORIGINAL, DistanceMode.SYM_AVG,
                              DistanceMode.SYM_MIN, DistanceMode.NATURAL):
        raise ConfigError("query-time mode must be none, avg, min or natural; "
                          "reverse and l2 apply at index time only")
    index_spec = _make_spec(cfg.kind, cfg.index_mode, cfg.dataset)
    original = DistanceSpec(cfg.kind)
    qspec = None
    if cfg.query_mode is not DistanceMode.ORIGINAL:
        qspec = _make_spec(cfg.kind, cfg.query_mode, cfg.dataset)
    resolved = resolve_splits(cfg.dataset, cfg.num_splits, cfg.queries_per_split,
                              cfg.seed, cfg.query_dataset)
    if cfg.truths is not None and len(cfg.truths) != len(resolved):
        raise ConfigError(f"truth cache has {len(cfg.truths)} splits, "
                          f"expected {len(resolved)}")
    ctx = EvalContext(cfg.dataset)
    params = BuildParams(nn=cfg.nn, ef_construction=cfg.ef_construction,
                         index_spec=index_spec, seed=cfg.seed)
    prepared = []
    for rs in resolved:
        if cfg.graph_provider is not None:
            graph = cfg.graph_provider(rs.split_id, rs, params)
        else:
            graph = SwGraph.build(cfg.dataset, rs, params, ctx=ctx)
        truths, baseline_time = _truths_and_baseline(cfg, rs, original, ctx)
        baseline_evals = rs.data_indices.size * cost_multiplier(original)
        prepared.append((rs, graph, truths, baseline_time, baseline_evals))

    label = f"swgraph({cfg.index_mode.value}-{cfg.query_mode.value})"
    efs = [2 ** j for j in range(cfg.ef_max_exp + 1)]
    if cfg.query_mode is DistanceMode.ORIGINAL:
        grid = [(ef, None) for ef in efs]
    else:
        grid = [(ef, kc) for ef in efs
                for kc in (cfg.k * 2 ** i for i in range(cfg.kc_max_exp + 1))]

    rows = []
    for ef, kc in grid:
        split_rows = []
        for rs, graph, truths, baseline_time, baseline_evals in prepared:
            if kc is None:
                sp = SearchParams(ef_search=ef, query_spec=original)
                results = map_queries(lambda q: graph.knn_search(q, cfg.k, sp),
                                      rs.queries, cfg.threads)
            else:
                results = map_queries(
                    lambda q: filter_and_refine(cfg.dataset, rs.data_indices, q,
                                                cfg.k, kc, qspec, original, ctx=ctx,
                                                graph=graph, ef_search=ef),
                    rs.queries, cfg.threads)
            report = RecallReport.from_results(results, truths, cfg.k)
            mean_evals = float(np.mean([r.evals for r in results]))
            mean_time = float(np.mean([r.elapsed for r in results]))
            split_rows.append(ExperimentRow(
                method=label, dataset_id=cfg.dataset_id,
                distance=format_kind(cfg.kind), index_mode=cfg.index_mode.value,
                query_mode=cfg.query_mode.value, k=cfg.k, kc=kc, ef_search=ef,
                split=str(rs.split_id), recall=report.recall,
                evals_per_query=mean_evals,
                evals_speedup=baseline_evals / mean_evals,
                time_speedup=baseline_time / mean_time,
                time_per_query_s=mean_time, build_time_s=graph.build_time_s))
        rows.extend(split_rows)
        rows.append(_avg_row(split_rows))
    return rows


def _fmt_cell(value, spec):
    if value is None:
        return ""
    return format(value, spec)


def rows_to_csv(rows) -> str:
    """Serialize rows with the stable column set; times go through a fixed
    short format, recall and eval counts through deterministic ones."""
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join([
            r.dataset_id, r.distance, r.index_mode, r.query_mode, str(r.k),
            "" if r.kc is None else str(r.kc),
            "" if r.ef_search is None else str(r.ef_search),
            r.split, f"{r.recall:.6f}",
            format(r.evals_per_query, ".10g"),
            format(r.evals_speedup, ".10g"),
            _fmt_cell(r.time_speedup, ".5g"),
            _fmt_cell(r.build_time_s, ".5g"),
        ]))
    return "\n".join(lines) + "\n"
