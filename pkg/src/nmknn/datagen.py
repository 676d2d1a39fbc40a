"""Synthetic histogram generation and dataset / ground-truth file I/O.

All files are plain UTF-8 text. Floats are written with 17 significant
digits, enough for exact float64 round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bruteforce import KnnResult, Neighbor
from .data import DOMAIN_GEN, Dataset, IdfTable, SparseTfVector, keyed_rng
from .distances import DistanceSpec, format_kind, format_mode
from .errors import DataFormatError, InvalidArgumentError

_EXP_FLOOR = 1e-12


@dataclass(frozen=True)
class GenSpec:
    n: int
    d: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("n must be >= 1")
        if self.d < 2:
            raise InvalidArgumentError("d must be >= 2")


def gen_randhist(spec: GenSpec) -> Dataset:
    """Histograms drawn uniformly from the (d-1)-simplex (flat Dirichlet).

    Point i draws d standard exponentials by inversion, -log1p(-u), from
    the Philox4x64-10 stream keyed by (seed, generation domain, i), floors
    them at 1e-12 and normalizes. Because every point has its own counter
    key, sharded and serial generation produce identical datasets.
    """
    rows = np.empty((spec.n, spec.d), dtype=np.float64)
    for i in range(spec.n):
        u = keyed_rng(spec.seed, DOMAIN_GEN, i).random(spec.d)
        rows[i] = np.maximum(-np.log1p(-u), _EXP_FLOOR)
    rows /= rows.sum(axis=1, keepdims=True)
    return Dataset.from_dense(rows)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_dense(path, dataset: Dataset):
    if dataset.kind != "dense":
        raise InvalidArgumentError("write_dense requires a dense dataset")
    with open(path, "w", encoding="utf-8") as f:
        for row in dataset.dense_values:
            f.write(" ".join(_fmt(v) for v in row))
            f.write("\n")


def read_dense(path) -> Dataset:
    """Parse a dense dataset file: one whitespace-separated vector per line;
    blank lines and '#' comments are ignored."""
    rows = []
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(tok) for tok in line.split()]
            except ValueError as e:
                raise DataFormatError(f"{path}:{ln}: {e}") from e
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise DataFormatError(
                    f"{path}:{ln}: expected {dim} components, found {len(row)}")
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no data lines")
    try:
        return Dataset.from_dense(np.array(rows, dtype=np.float64))
    except InvalidArgumentError as e:
        raise DataFormatError(f"{path}: {e}") from e


def write_sparse(path, dataset: Dataset):
    if dataset.kind != "sparse":
        raise InvalidArgumentError("write_sparse requires a sparse dataset")
    pairs = sorted(dataset.idf.items())
    with open(path, "w", encoding="utf-8") as f:
        for i in range(0, len(pairs), 16):
            chunk = pairs[i:i + 16]
            f.write("#idf " + " ".join(f"{t}:{_fmt(v)}" for t, v in chunk) + "\n")
        for p in dataset.sparse_points:
            f.write(" ".join(f"{int(t)}:{_fmt(q)}:{_fmt(d)}"
                             for t, q, d in zip(p.terms, p.tf_q, p.tf_d)))
            f.write("\n")


def read_sparse(path) -> Dataset:
    """Parse a sparse dataset file.

    Vector lines hold space-separated term_id:tf_q:tf_d triples, sorted by
    term id. '#idf' header lines supply the IDF table and may repeat;
    entries are merged, and re-stating a term with a different value is an
    error.
    """
    idf = {}
    points = []
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#idf"):
                for tok in line[4:].split():
                    try:
                        t_s, v_s = tok.split(":")
                        t, v = int(t_s), float(v_s)
                    except ValueError as e:
                        raise DataFormatError(f"{path}:{ln}: bad idf entry {tok!r}") from e
                    if t in idf and idf[t] != v:
                        raise DataFormatError(
                            f"{path}:{ln}: conflicting idf for term {t}: {idf[t]} vs {v}")
                    idf[t] = v
                continue
            if line.startswith("#"):
                continue
            terms, tf_q, tf_d = [], [], []
            for tok in line.split():
                parts = tok.split(":")
                if len(parts) != 3:
                    raise DataFormatError(f"{path}:{ln}: bad field {tok!r}, "
                                          "expected term_id:tf_q:tf_d")
                try:
                    terms.append(int(parts[0]))
                    tf_q.append(float(parts[1]))
                    tf_d.append(float(parts[2]))
                except ValueError as e:
                    raise DataFormatError(f"{path}:{ln}: bad field {tok!r}") from e
            try:
                points.append(SparseTfVector(np.array(terms, dtype=np.int64),
                                             np.array(tf_q), np.array(tf_d)))
            except InvalidArgumentError as e:
                raise DataFormatError(f"{path}:{ln}: {e}") from e
    if not points:
        raise DataFormatError(f"{path}: no data lines")
    try:
        return Dataset.from_sparse(points, IdfTable(idf))
    except InvalidArgumentError as e:
        raise DataFormatError(f"{path}: {e}") from e


def write_truth(path, dataset_hash: str, seed: int, spec: DistanceSpec, k: int,
                per_split):
    """Cache exact k-NN results: one '#split' block per split, one
    'q_ord idx:dist ...' line per query."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#truth v1 dataset={dataset_hash} seed={seed} "
                f"dist={format_kind(spec.kind)} mode={format_mode(spec.mode)} "
                f"k={k} splits={len(per_split)}\n")
        for si, results in enumerate(per_split):
            f.write(f"#split {si} queries={len(results)}\n")
            for qi, res in enumerate(results):
                cells = " ".join(f"{nb.index}:{_fmt(nb.distance)}" for nb in res.neighbors)
                f.write(f"{qi} {cells}\n")


def read_truth(path):
    """Read a truth cache; returns (info dict, list of per-split KnnResult lists)."""
    info = None
    splits = []
    declared_queries = []
    cur = None
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#truth"):
                info = {}
                for tok in line.split()[1:]:
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        info[key] = val
                continue
            if line.startswith("#split"):
                toks = line.split()
                try:
                    split_ord = int(toks[1])
                    count = int(toks[2].split("=", 1)[1])
                except (ValueError, IndexError) as e:
                    raise DataFormatError(f"{path}:{ln}: bad split header: {e}") from e
                if split_ord != len(splits):
                    raise DataFormatError(
                        f"{path}:{ln}: split ordinal {split_ord} out of order")
                cur = []
                splits.append(cur)
                declared_queries.append(count)
                continue
            if line.startswith("#"):
                continue
            if info is None or cur is None:
                raise DataFormatError(f"{path}:{ln}: data line before headers")
            toks = line.split()
            try:
                q_ord = int(toks[0])
                nbs = []
                for cell in toks[1:]:
                    idx_s, dist_s = cell.split(":")
                    nbs.append(Neighbor(int(idx_s), float(dist_s)))
            except (ValueError, IndexError) as e:
                raise DataFormatError(f"{path}:{ln}: bad truth line: {e}") from e
            if q_ord != len(cur):
                raise DataFormatError(f"{path}:{ln}: query ordinal {q_ord} out of order")
            cur.append(KnnResult(neighbors=tuple(nbs), evals=0, elapsed=0.0))
    if info is None:
        raise DataFormatError(f"{path}: missing #truth header")
    declared = int(info.get("splits", len(splits)))
    if declared != len(splits):
        raise DataFormatError(f"{path}: header declares {declared} splits, found {len(splits)}")
    for i, (got, want) in enumerate(zip(splits, declared_queries)):
        if len(got) != want:
            raise DataFormatError(
                f"{path}: split {i} declares {want} queries, found {len(got)}")
    return info, splits


def validate_truth(info: dict, dataset_hash: str, seed: int, spec: DistanceSpec, k: int,
                   num_splits: int):
    """Raise DataFormatError if a truth cache was computed for different inputs."""
    expect = {
        "dataset": dataset_hash,
        "seed": str(seed),
        "dist": format_kind(spec.kind),
        "mode": format_mode(spec.mode),
        "k": str(k),
        "splits": str(num_splits),
    }
    for key, want in expect.items():
        got = info.get(key)
        if got != want:
            raise DataFormatError(f"truth cache mismatch on {key}: file has {got}, expected {want}")
