"""Domain types for datasets, points, and query/data splits.

A dataset is either dense (rows are fixed-dimension probability
histograms) or sparse (sorted term/tf triples per point plus a shared
IDF table). Everything here is immutable after construction and safe to
share across concurrent readers.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

SUM_TOL = 1e-6
ZERO_EPS = 1e-7

# Philox key layout: key = [seed mod 2^64, (domain << 48) | index].
# Distinct domain tags keep split selection, insertion-order permutations
# and synthetic data generation on disjoint streams even when the user
# reuses one seed for all of them.
DOMAIN_GEN = 1
DOMAIN_SPLIT = 2
DOMAIN_PERM = 3


def keyed_rng(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox4x64-10) keyed by (seed, domain, index).

    Philox is stateless given its key, so any (seed, domain, index) cell can
    be regenerated independently; parallel and serial producers agree.
    """
    key = np.array([seed % 2**64, (domain << 48) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DenseHistogram:
    """A strictly positive probability vector summing to 1 within 1e-6."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise InvalidArgumentError("histogram must be a nonempty 1-d vector")
        if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
            raise InvalidArgumentError("histogram entries must be finite and strictly positive")
        s = float(v.sum())
        if abs(s - 1.0) > SUM_TOL:
            raise InvalidArgumentError(f"histogram sums to {s}, expected 1 within {SUM_TOL}")
        object.__setattr__(self, "values", _freeze(v))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class SparseTfVector:
    """Sorted (term_id, tf_q, tf_d) triples for BM25-style retrieval data.

    tf_q is the weight the vector carries in the query role (left argument
    of the similarity), tf_d the weight in the document role (right
    argument). Keeping both lets one vector serve either side.
    """

    terms: np.ndarray
    tf_q: np.ndarray
    tf_d: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.terms, dtype=np.int64)
        q = np.ascontiguousarray(self.tf_q, dtype=np.float64)
        d = np.ascontiguousarray(self.tf_d, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise InvalidArgumentError("sparse vector needs at least one term")
        if q.shape != t.shape or d.shape != t.shape:
            raise InvalidArgumentError("terms, tf_q and tf_d must have equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidArgumentError("term ids must be strictly increasing")
        if np.any(t < 0):
            raise InvalidArgumentError("term ids must be non-negative")
        for name, w in (("tf_q", q), ("tf_d", d)):
            if not np.all(np.isfinite(w)) or np.any(w < 0.0):
                raise InvalidArgumentError(f"{name} weights must be finite and >= 0")
        object.__setattr__(self, "terms", _freeze(t))
        object.__setattr__(self, "tf_q", _freeze(q))
        object.__setattr__(self, "tf_d", _freeze(d))

    def __len__(self):
        return self.terms.size


class IdfTable:
    """Mapping from term id to a positive inverse-document-frequency weight."""

    def __init__(self, values: dict):
        table = {}
        for term, idf in values.items():
            term = int(term)
            idf = float(idf)
            if not np.isfinite(idf) or idf <= 0.0:
                raise InvalidArgumentError(f"idf[{term}] = {idf}, must be finite and > 0")
            table[term] = idf
        self._table = table

    def __getitem__(self, term):
        return self._table[term]

    def get(self, term, default=None):
        return self._table.get(term, default)

    def __contains__(self, term):
        return term in self._table

    def __len__(self):
        return len(self._table)

    def items(self):
        return self._table.items()

    def __eq__(self, other):
        return isinstance(other, IdfTable) and self._table == other._table


class _PointSeq:
    """Lazy sequence view over a dataset's points."""

    def __init__(self, dataset):
        self._dataset = dataset

    def __len__(self):
        return len(self._dataset)

    def __getitem__(self, i):
        return self._dataset.point(i)

    def __iter__(self):
        for i in range(len(self._dataset)):
            yield self._dataset.point(i)


class Dataset:
    """An immutable collection of dense histograms or sparse tf vectors.

    Dense ingestion replaces exact-zero components with ZERO_EPS and
    renormalizes the affected rows, so downstream distance code can assume
    strict positivity; the replacement count is kept on `smoothed_zeros`
    and surfaced as a warning.
    """

    def __init__(self, kind, dense_values=None, sparse_points=None, idf=None,
                 labels=None, smoothed_zeros=0):
        self.kind = kind
        self.dense_values = dense_values
        self.sparse_points = sparse_points
        self.idf = idf
        self.labels = list(labels) if labels is not None else None
        self.smoothed_zeros = smoothed_zeros
        self._content_hash = None
        n = len(self)
        if n < 1:
            raise InvalidArgumentError("dataset must contain at least one point")
        if self.labels is not None and len(self.labels) != n:
            raise InvalidArgumentError("labels length must match point count")

    @classmethod
    def from_dense(cls, values, labels=None):
        """Build a dense dataset from an (n, d) array or histogram sequence.

        Rows must already be near-normalized (sum to 1 within 1e-6); exact
        zeros are smoothed, negative or non-finite entries are rejected.
        """
        if isinstance(values, np.ndarray) and values.ndim == 2:
            mat = np.array(values, dtype=np.float64)
        else:
            rows = [v.values if isinstance(v, DenseHistogram) else np.asarray(v, dtype=np.float64)
                    for v in values]
            if not rows:
                raise InvalidArgumentError("dataset must contain at least one point")
            d = rows[0].shape[-1]
            for i, r in enumerate(rows):
                if r.ndim != 1 or r.shape[0] != d:
                    raise InvalidArgumentError(
                        f"point {i} has dimensionality {r.shape}, expected ({d},)")
            mat = np.array(rows, dtype=np.float64)
        if mat.shape[0] < 1 or mat.shape[1] < 1:
            raise InvalidArgumentError("dense dataset must be a nonempty (n, d) matrix")
        if not np.all(np.isfinite(mat)):
            raise InvalidArgumentError("dense dataset contains non-finite entries")
        if np.any(mat < 0.0):
            raise InvalidArgumentError("dense dataset contains negative entries")
        sums = mat.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > SUM_TOL)
        if bad.size:
            raise InvalidArgumentError(
                f"row {bad[0]} sums to {sums[bad[0]]}, expected 1 within {SUM_TOL}")
        zeros = mat == 0.0
        smoothed = int(zeros.sum())
        if smoothed:
            mat[zeros] = ZERO_EPS
            touched = zeros.any(axis=1)
            mat[touched] /= mat[touched].sum(axis=1, keepdims=True)
            warnings.warn(f"replaced {smoothed} zero components with {ZERO_EPS} and renormalized")
        return cls("dense", dense_values=_freeze(mat), labels=labels, smoothed_zeros=smoothed)

    @classmethod
    def from_sparse(cls, points, idf, labels=None):
        """Build a sparse dataset; idf must cover every term used by a point."""
        points = list(points)
        if not points:
            raise InvalidArgumentError("dataset must contain at least one point")
        for i, p in enumerate(points):
            if not isinstance(p, SparseTfVector):
                raise InvalidArgumentError(f"point {i} is not a SparseTfVector")
            for t in p.terms:
                if int(t) not in idf:
                    raise InvalidArgumentError(f"term {int(t)} of point {i} missing from idf table")
        return cls("sparse", sparse_points=points, idf=idf, labels=labels)

    def __len__(self):
        if self.kind == "dense":
            return self.dense_values.shape[0]
        return len(self.sparse_points)

    @property
    def dim(self):
        if self.kind != "dense":
            raise InvalidArgumentError("dim is only defined for dense datasets")
        return self.dense_values.shape[1]

    def point(self, i):
        if self.kind == "dense":
            return DenseHistogram(self.dense_values[i])
        return self.sparse_points[i]

    @property
    def points(self):
        return _PointSeq(self)

    def content_hash(self) -> str:
        """SHA-256 over a canonical binary encoding; stable across platforms.

        Index and ground-truth files bind to this value.
        """
        if self._content_hash is None:
            h = hashlib.sha256()
            if self.kind == "dense":
                h.update(b"dense")
                h.update(np.array(self.dense_values.shape, dtype="<i8").tobytes())
                h.update(self.dense_values.astype("<f8", copy=False).tobytes())
            else:
                h.update(b"sparse")
                h.update(np.array([len(self)], dtype="<i8").tobytes())
                for p in self.sparse_points:
                    h.update(np.array([len(p)], dtype="<i8").tobytes())
                    h.update(p.terms.astype("<i8", copy=False).tobytes())
                    h.update(p.tf_q.astype("<f8", copy=False).tobytes())
                    h.update(p.tf_d.astype("<f8", copy=False).tobytes())
                pairs = sorted(self.idf.items())
                h.update(np.array([t for t, _ in pairs], dtype="<i8").tobytes())
                h.update(np.array([v for _, v in pairs], dtype="<f8").tobytes())
            self._content_hash = h.hexdigest()
        return self._content_hash


@dataclass(frozen=True)
class QuerySplit:
    """Index-based partition of one dataset into query and data sides."""

    seed: int
    data_indices: np.ndarray
    query_indices: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.data_indices, dtype=np.int64)
        q = np.ascontiguousarray(self.query_indices, dtype=np.int64)
        if q.size == 0:
            raise InvalidArgumentError("query side of a split must be nonempty")
        if np.intersect1d(d, q).size:
            raise InvalidArgumentError("data and query indices must be disjoint")
        object.__setattr__(self, "data_indices", _freeze(d))
        object.__setattr__(self, "query_indices", _freeze(q))


def make_splits(dataset: Dataset, num_splits: int, queries_per_split: int, seed: int):
    """Deterministically split a dataset into query/data sides.

    Split i draws queries_per_split indices without replacement from the
    generator keyed by (seed, split domain, i); the rest become data. Both
    index sets are returned in ascending order.
    """
    if num_splits < 1:
        raise InvalidArgumentError("num_splits must be >= 1")
    if queries_per_split < 1:
        raise InvalidArgumentError("queries_per_split must be >= 1")
    n = len(dataset)
    if queries_per_split >= n:
        raise InvalidArgumentError(
            f"queries_per_split = {queries_per_split} must be < point count {n}")
    splits = []
    for i in range(num_splits):
        rng = keyed_rng(seed, DOMAIN_SPLIT, i)
        q = np.sort(rng.choice(n, size=queries_per_split, replace=False))
        d = np.setdiff1d(np.arange(n, dtype=np.int64), q, assume_unique=True)
        splits.append(QuerySplit(seed=seed, data_indices=d, query_indices=q))
    return splits


@dataclass(frozen=True)
class ResolvedSplit:
    """One experiment unit: dataset indices on the data side plus the
    query points themselves (taken from the split or from a separate
    query file for corpora where queries and documents differ)."""

    split_id: int
    data_indices: np.ndarray
    queries: tuple


def resolve_splits(dataset, num_splits, queries_per_split, seed, query_dataset=None):
    """Produce ResolvedSplits either by index splitting or from a query file.

    With query_dataset given, the whole dataset is indexable and the
    external points form a single pseudo-split (id 0).
    """
    if query_dataset is not None:
        if query_dataset.kind != dataset.kind:
            raise InvalidArgumentError("query dataset kind must match data kind")
        if dataset.kind == "dense" and query_dataset.dim != dataset.dim:
            raise InvalidArgumentError("query dimensionality must match data")
        all_idx = np.arange(len(dataset), dtype=np.int64)
        return [ResolvedSplit(0, _freeze(all_idx), tuple(query_dataset.points))]
    out = []
    for i, s in enumerate(make_splits(dataset, num_splits, queries_per_split, seed)):
        queries = tuple(dataset.point(j) for j in s.query_indices)
        out.append(ResolvedSplit(i, s.data_indices, queries))
    return out
