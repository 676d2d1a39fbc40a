"""Command-line entry point for scripted benchmarking.

Subcommands: gen (synthetic histogram datasets), truth (exact k-NN
caches), build (a single saved graph index), bench (graph search
experiment series), sweep (brute-force proxy candidate-budget series).

CSV goes to stdout unless --csv gives a path; progress and summaries go
to stderr. Exit codes: 0 success, 1 usage or configuration error, 2
input data or I/O error, 3 internal error.

A --config file holds key=value lines (keys are long flag names, dashes
or underscores) that override the subcommand's defaults; explicit flags
still win.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .bruteforce import knn_exact
from .data import resolve_splits
from .datagen import (GenSpec, gen_randhist, read_dense, read_sparse,
                      read_truth, validate_truth, write_dense, write_truth)
from .distances import (DistanceMode, DistanceSpec, EvalContext, format_kind,
                        parse_kind, parse_mode)
from .errors import ConfigError, DataFormatError, InvalidArgumentError
from .harness import (SeriesOneConfig, SeriesTwoConfig, _check_kind_data,
                      _make_spec, map_queries, rows_to_csv, run_series_one,
                      run_series_two)
from .swgraph import BuildParams, SwGraph

_QUERY_MODES = (DistanceMode.ORIGINAL, DistanceMode.SYM_AVG,
                DistanceMode.SYM_MIN, DistanceMode.NATURAL)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports flag problems as exceptions, not sys.exit."""

    def error(self, message):
        raise UsageError(message)


def _log(msg):
    print(msg, file=sys.stderr)


def _resolve_threads(args) -> int:
    if args.threads is not None:
        t = args.threads
    else:
        raw = os.environ.get("NMKNN_THREADS")
        if raw is None:
            t = 1
        else:
            try:
                t = int(raw)
            except ValueError:
                raise ConfigError(f"NMKNN_THREADS must be an integer, got {raw!r}")
    if t < 1:
        raise ConfigError("threads must be >= 1")
    return t


def _load_data(args):
    if args.sparse:
        return read_sparse(args.data)
    return read_dense(args.data)


def _load_queries(args):
    if getattr(args, "queries_file", None) is None:
        return None
    if args.sparse:
        return read_sparse(args.queries_file)
    return read_dense(args.queries_file)


def _dataset_id(args) -> str:
    return Path(args.data).stem


def _emit_csv(args, rows):
    text = rows_to_csv(rows)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(text)
        _log(f"wrote {len(rows)} rows to {args.csv}")
    else:
        sys.stdout.write(text)


def _compute_truths(data, resolved, spec, k, threads, ctx=None):
    if ctx is None:
        ctx = EvalContext(data)
    per_split = []
    for rs in resolved:
        res = map_queries(
            lambda q: knn_exact(data, rs.data_indices, q, k, spec, ctx=ctx),
            rs.queries, threads)
        per_split.append(res)
    return per_split


def _load_or_make_truths(args, data, kind, queries_ds, threads):
    """Read the truth cache when it exists (validating its header), else
    compute the exact neighbors and write the cache for next time."""
    if args.truth is None:
        return None
    spec = DistanceSpec(kind)
    resolved = resolve_splits(data, args.splits, args.queries, args.seed, queries_ds)
    if os.path.exists(args.truth):
        info, per_split = read_truth(args.truth)
        validate_truth(info, data.content_hash(), args.seed, spec, args.k,
                       len(resolved))
        _log(f"loaded truth cache {args.truth}")
        return per_split
    per_split = _compute_truths(data, resolved, spec, args.k, threads)
    write_truth(args.truth, data.content_hash(), args.seed, spec, args.k, per_split)
    _log(f"computed and cached truth at {args.truth}")
    return per_split


def _index_provider(args, data):
    """Per-split graph source backed by a cache directory. Filenames
    encode the dataset hash and build parameters; a cached file whose
    stored hash or node set disagrees with the request is rejected."""
    cache_dir = args.index_cache

    def provider(split_id, rs, params: BuildParams):
        kind_tag = format_kind(params.index_spec.kind).replace(":", "_")
        name = (f"idx-{data.content_hash()[:12]}-{kind_tag}"
                f"-{params.index_spec.mode.value}-nn{params.nn}"
                f"-efc{params.ef_construction}-seed{params.seed}"
                f"-split{split_id}.swg")
        path = os.path.join(cache_dir, name)
        if os.path.exists(path):
            g = SwGraph.load(path, data)
            if not np.array_equal(np.sort(g.node_to_data), rs.data_indices):
                raise DataFormatError(
                    f"cached index {path} does not cover the requested split")
            _log(f"loaded index {path}")
            return g
        g = SwGraph.build(data, rs, params)
        os.makedirs(cache_dir, exist_ok=True)
        g.save(path)
        _log(f"built and cached index {path} "
             f"({g.build_time_s:.3f}s, {g.build_evals} evals)")
        return g

    return provider


def cmd_gen(args) -> int:
    spec = GenSpec(n=args.n, d=args.d, seed=args.seed)
    ds = gen_randhist(spec)
    write_dense(args.out, ds)
    print(f"wrote {len(ds)} points (d={ds.dim}) to {args.out}")
    print(f"dataset hash: {ds.content_hash()}")
    return 0


def cmd_truth(args) -> int:
    data = _load_data(args)
    kind = parse_kind(args.dist)
    _check_kind_data(kind, data)
    spec = DistanceSpec(kind)
    threads = _resolve_threads(args)
    queries_ds = _load_queries(args)
    resolved = resolve_splits(data, args.splits, args.queries, args.seed, queries_ds)
    per_split = _compute_truths(data, resolved, spec, args.k, threads)
    write_truth(args.out, data.content_hash(), args.seed, spec, args.k, per_split)
    total = sum(len(r) for r in per_split)
    print(f"wrote exact {args.k}-NN for {total} queries "
          f"({len(per_split)} splits) to {args.out}")
    return 0


def cmd_build(args) -> int:
    data = _load_data(args)
    kind = parse_kind(args.dist)
    mode = parse_mode(args.index_mode)
    index_spec = _make_spec(kind, mode, data)
    _check_kind_data(kind, data)
    queries_ds = _load_queries(args)
    resolved = resolve_splits(data, args.splits, args.queries, args.split_seed,
                              queries_ds)
    if not 0 <= args.split < len(resolved):
        raise InvalidArgumentError(
            f"--split must be in [0, {len(resolved)}), got {args.split}")
    rs = resolved[args.split]
    params = BuildParams(nn=args.nn, ef_construction=args.ef_construction,
                         index_spec=index_spec, seed=args.split_seed)
    graph = SwGraph.build(data, rs, params)
    graph.save(args.out)
    print(f"built graph over {graph.n_nodes} points in {graph.build_time_s:.3f}s "
          f"({graph.build_evals} distance evals)")
    print(f"saved index to {args.out}")
    return 0


def cmd_bench(args) -> int:
    data = _load_data(args)
    kind = parse_kind(args.dist)
    imode = parse_mode(args.index_mode)
    qmode = parse_mode(args.query_mode)
    _check_kind_data(kind, data)
    if qmode not in _QUERY_MODES:
        raise ConfigError("query-time mode must be none, avg, min or natural; "
                          "reverse and l2 apply at index time only")
    _make_spec(kind, imode, data)
    if qmode is not DistanceMode.ORIGINAL:
        _make_spec(kind, qmode, data)
    threads = _resolve_threads(args)
    queries_ds = _load_queries(args)
    truths = _load_or_make_truths(args, data, kind, queries_ds, threads)
    provider = _index_provider(args, data) if args.index_cache else None
    cfg = SeriesTwoConfig(
        dataset=data, dataset_id=_dataset_id(args), kind=kind,
        index_mode=imode, query_mode=qmode, k=args.k,
        ef_max_exp=args.ef_search_max_exp, kc_max_exp=args.kc_max_exp,
        nn=args.nn, ef_construction=args.ef_construction,
        num_splits=args.splits, queries_per_split=args.queries, seed=args.seed,
        query_dataset=queries_ds, truths=truths, graph_provider=provider,
        threads=threads)
    rows = run_series_two(cfg)
    _emit_csv(args, rows)
    return 0


def cmd_sweep(args) -> int:
    data = _load_data(args)
    kind = parse_kind(args.dist)
    _check_kind_data(kind, data)
    modes = tuple(parse_mode(tok.strip()) for tok in args.proxy_mode.split(","))
    for m in modes:
        _make_spec(kind, m, data)
    threads = _resolve_threads(args)
    queries_ds = _load_queries(args)
    truths = _load_or_make_truths(args, data, kind, queries_ds, threads)
    cfg = SeriesOneConfig(
        dataset=data, dataset_id=_dataset_id(args), kind=kind,
        proxy_modes=modes, k=args.k, max_exp=args.max_exp,
        num_splits=args.splits, queries_per_split=args.queries, seed=args.seed,
        query_dataset=queries_ds, truths=truths, threads=threads)
    rows, summaries = run_series_one(cfg)
    for mode, s in summaries.items():
        if s.kc is None:
            _log(f"summary proxy={mode.value}: recall target not reached "
                 f"(best {s.recall:.4f})")
        else:
            _log(f"summary proxy={mode.value}: recall {s.recall:.4f} at k_c={s.kc}")
    _emit_csv(args, rows)
    return 0


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="query-batch worker count (default: NMKNN_THREADS or 1)")
    common.add_argument("--config", default=None,
                        help="key=value file overriding this subcommand's defaults")

    data_common = argparse.ArgumentParser(add_help=False)
    data_common.add_argument("--data", required=True, help="dataset file")
    data_common.add_argument("--sparse", action="store_true",
                             help="dataset files use the sparse term format")
    data_common.add_argument("--queries-file", default=None,
                             help="separate query file (replaces random splits)")

    split_common = argparse.ArgumentParser(add_help=False)
    split_common.add_argument("--splits", type=int, default=3,
                              help="number of random data/query splits")
    split_common.add_argument("--queries", type=int, default=1000,
                              help="queries held out per split")

    p = _Parser(prog="nmknn",
                description="k-NN search benchmarks for non-symmetric distances")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common],
                       help="generate a random-histogram dataset")
    g.add_argument("--n", type=int, required=True, help="number of points")
    g.add_argument("--d", type=int, required=True, help="histogram dimension (>= 2)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output dataset file")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("truth", parents=[common, data_common, split_common],
                       help="cache exact k-NN under the original distance")
    t.add_argument("--dist", required=True,
                   help="distance kind: kl, itakura-saito, renyi:A, negbm25, l2")
    t.add_argument("--k", type=int, default=10)
    t.add_argument("--seed", type=int, default=0, help="split seed")
    t.add_argument("--out", required=True, help="truth cache file")
    t.set_defaults(func=cmd_truth)

    b = sub.add_parser("build", parents=[common, data_common, split_common],
                       help="build and save one graph index")
    b.add_argument("--dist", required=True, help="distance kind")
    b.add_argument("--index-mode", default="none",
                   help="index-time modification: none, reverse, avg, min, l2, natural")
    b.add_argument("--nn", type=int, default=15,
                   help="neighbors connected per insertion")
    b.add_argument("--ef-construction", type=int, default=100)
    b.add_argument("--split-seed", type=int, default=0,
                   help="seed for splits and insertion order")
    b.add_argument("--split", type=int, default=0, help="which split to build")
    b.add_argument("--out", required=True, help="output index file")
    b.set_defaults(func=cmd_build)

    e = sub.add_parser("bench", parents=[common, data_common, split_common],
                       help="graph search experiment series")
    e.add_argument("--dist", required=True, help="distance kind")
    e.add_argument("--index-mode", default="none")
    e.add_argument("--query-mode", default="none",
                   help="none, avg, min or natural")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--ef-search-max-exp", type=int, default=12,
                   help="sweep ef_search over 2^0..2^this")
    e.add_argument("--kc-max-exp", type=int, default=7,
                   help="sweep k_c over k*2^0..k*2^this (re-ranking modes)")
    e.add_argument("--nn", type=int, default=15)
    e.add_argument("--ef-construction", type=int, default=100)
    e.add_argument("--seed", type=int, default=0,
                   help="seed for splits and insertion order")
    e.add_argument("--truth", default=None,
                   help="truth cache file (read if present, else written)")
    e.add_argument("--index-cache", default=None,
                   help="directory holding reusable index files")
    e.add_argument("--csv", default=None, help="CSV output path (default stdout)")
    e.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", parents=[common, data_common, split_common],
                       help="brute-force proxy candidate-budget series")
    s.add_argument("--dist", required=True, help="distance kind")
    s.add_argument("--proxy-mode", default="none",
                   help="comma-separated candidate modes, e.g. none,avg,min")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--max-exp", type=int, default=7,
                   help="sweep k_c over k*2^0..k*2^this")
    s.add_argument("--seed", type=int, default=0, help="split seed")
    s.add_argument("--truth", default=None,
                   help="truth cache file (read if present, else written)")
    s.add_argument("--csv", default=None, help="CSV output path (default stdout)")
    s.set_defaults(func=cmd_sweep)

    return p, sub


def _read_config_file(path):
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {text!r}")
            key, _, value = text.partition("=")
            overrides[key.strip().replace("-", "_")] = value.strip()
    return overrides


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


def _apply_config(subparser, overrides):
    actions = {a.dest: a for a in subparser._actions}
    for key, raw in overrides.items():
        action = actions.get(key)
        if action is None or key in ("help", "config", "func"):
            raise ConfigError(f"unknown config key: {key}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            word = raw.lower()
            if word not in _BOOL_WORDS:
                raise ConfigError(f"config key {key} expects a boolean, got {raw!r}")
            value = _BOOL_WORDS[word]
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key}: bad value {raw!r}")
        else:
            value = raw
        subparser.set_defaults(**{key: value})
        action.required = False


def _find_config_flag(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse_args(argv):
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    parser, sub = _build_parser()
    # the overlay must land before parsing or required flags fail early
    cfg_path = _find_config_flag(argv)
    if cfg_path is not None and argv and argv[0] in sub.choices:
        _apply_config(sub.choices[argv[0]], _read_config_file(cfg_path))
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse_args(argv)
        return args.func(args)
    except SystemExit as e:  # argparse --help
        return e.code if isinstance(e.code, int) else 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except InvalidArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
