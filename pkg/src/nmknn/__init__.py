"""Approximate k-NN search for non-symmetric distances.

A small-world proximity graph indexes data under a configurable
index-time distance (the raw distance, its reverse, or a symmetrized
variant) and answers queries under the same or a different one, with a
brute-force filter-and-refine pipeline as the baseline. Ships with a
seeded histogram generator, exact-truth caching, and a benchmark CLI.
"""

from .bruteforce import KnnResult, Neighbor, knn_exact, select_smallest
from .data import (Dataset, DenseHistogram, IdfTable, QuerySplit,
                   ResolvedSplit, SparseTfVector, keyed_rng, make_splits,
                   resolve_splits)
from .datagen import (GenSpec, gen_randhist, read_dense, read_sparse,
                      read_truth, validate_truth, write_dense, write_sparse,
                      write_truth)
from .distances import (ITAKURA_SAITO, KL, L2, NEGBM25, DistanceKind,
                        DistanceMode, DistanceSpec, EvalContext, EvalCounter,
                        cost_multiplier, eval_itakura_saito, eval_kl, eval_l2,
                        eval_natural_bm25, eval_neg_bm25, eval_renyi,
                        evaluate, format_kind, format_mode, parse_kind,
                        parse_mode, renyi)
from .errors import ConfigError, DataFormatError, InvalidArgumentError
from .harness import (CSV_COLUMNS, RECALL_TARGET, ExperimentRow, RecallReport,
                      SeriesOneConfig, SeriesTwoConfig, SweepPoint,
                      SweepSummary, filter_and_refine, kc_sweep, map_queries,
                      recall_at_k, rows_to_csv, run_series_one,
                      run_series_two)
from .swgraph import BuildParams, SearchParams, SwGraph

__version__ = "0.1.0"

__all__ = [
    "BuildParams", "ConfigError", "CSV_COLUMNS", "Dataset", "DataFormatError",
    "DenseHistogram", "DistanceKind", "DistanceMode", "DistanceSpec",
    "EvalContext", "EvalCounter", "ExperimentRow", "GenSpec", "IdfTable",
    "InvalidArgumentError", "ITAKURA_SAITO", "KL", "KnnResult", "L2",
    "NEGBM25", "Neighbor", "QuerySplit", "RecallReport", "RECALL_TARGET",
    "ResolvedSplit", "SearchParams", "SeriesOneConfig", "SeriesTwoConfig",
    "SparseTfVector", "SweepPoint", "SweepSummary", "SwGraph",
    "cost_multiplier", "eval_itakura_saito", "eval_kl", "eval_l2",
    "eval_natural_bm25", "eval_neg_bm25", "eval_renyi", "evaluate",
    "filter_and_refine", "format_kind", "format_mode", "gen_randhist",
    "kc_sweep", "keyed_rng", "knn_exact", "make_splits", "map_queries",
    "parse_kind", "parse_mode", "read_dense", "read_sparse", "read_truth",
    "recall_at_k", "renyi", "resolve_splits", "rows_to_csv", "run_series_one",
    "run_series_two", "select_smallest", "validate_truth", "write_dense",
    "write_sparse", "write_truth",
]
