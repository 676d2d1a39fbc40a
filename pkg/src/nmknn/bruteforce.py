"""Exact k-NN by exhaustive scan.

This is both the ground-truth oracle for recall and the measured baseline
that speedups are quoted against. The data point is always the left
argument of the distance; ties are broken toward the lower data index so
results are reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .distances import EvalContext, EvalCounter
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Neighbor:
    index: int
    distance: float


@dataclass(frozen=True)
class KnnResult:
    """Neighbors in ascending distance order plus the cost of finding them."""

    neighbors: tuple
    evals: int
    elapsed: float

    @property
    def indices(self):
        return tuple(nb.index for nb in self.neighbors)

    @property
    def distances(self):
        return tuple(nb.distance for nb in self.neighbors)


def select_smallest(dd: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest entries, ordered by (value, id).

    Exact lowest-id tie-breaking, including ties across the k-th boundary.
    """
    n = dd.size
    if k >= n:
        return np.lexsort((ids, dd))
    part = np.argpartition(dd, k - 1)[:k]
    v = dd[part].max()
    less = np.flatnonzero(dd < v)
    need = k - less.size
    eq = np.flatnonzero(dd == v)
    eq = eq[np.argsort(ids[eq], kind="stable")][:need]
    sel = np.concatenate([less, eq])
    return sel[np.lexsort((ids[sel], dd[sel]))]


def knn_exact(data, split_data, query, k: int, spec, ctx: EvalContext | None = None,
              counter: EvalCounter | None = None) -> KnnResult:
    """Scan every point in split_data and return the k nearest to query.

    split_data holds dataset indices; evaluation cost is exactly
    len(split_data) base distances (doubled for avg/min modes).
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    idx = np.asarray(split_data, dtype=np.int64)
    if idx.size == 0:
        raise InvalidArgumentError("cannot search an empty data set")
    if ctx is None:
        ctx = EvalContext(data)
    local = EvalCounter()
    rows = ctx.query(spec, query, local)
    t0 = time.perf_counter()
    dd = rows(idx)
    order = select_smallest(dd, idx, k)
    elapsed = time.perf_counter() - t0
    if counter is not None:
        counter.add(local.base_evals)
    neighbors = tuple(Neighbor(int(idx[p]), float(dd[p])) for p in order)
    return KnnResult(neighbors=neighbors, evals=local.base_evals, elapsed=elapsed)
