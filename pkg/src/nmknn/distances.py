"""Base distances, argument-order and symmetrization transforms, and
evaluation counting.

Every distance is directional: d(x, y) is not d(y, x) in general. The
convention throughout the package is that the stored data point occupies
the LEFT argument and the query the RIGHT one; DistanceMode then rewrites
that orientation (reverse swaps it, avg/min symmetrize it, l2/natural
substitute a symmetric surrogate).

Scalar entry points (eval_kl and friends, evaluate) work on single point
pairs. EvalContext provides the vectorized row-batch path used by the
brute-force scan and the graph search; both paths count base-distance
evaluations identically: one per call, two for avg/min.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse as sp

from .data import DenseHistogram, SparseTfVector
from .errors import DataFormatError, InvalidArgumentError

_KIND_NAMES = ("kl", "itakura-saito", "renyi", "negbm25", "l2")


@dataclass(frozen=True)
class DistanceKind:
    """One of kl | itakura-saito | renyi (with alpha) | negbm25 | l2."""

    name: str
    alpha: float | None = None

    def __post_init__(self):
        if self.name not in _KIND_NAMES:
            raise InvalidArgumentError(f"unknown distance kind {self.name!r}")
        if self.name == "renyi":
            a = self.alpha
            if a is None or not math.isfinite(a) or a <= 0.0 or a == 1.0:
                raise InvalidArgumentError("renyi alpha must be positive and != 1")
        elif self.alpha is not None:
            raise InvalidArgumentError(f"{self.name} takes no alpha parameter")

    @property
    def is_sparse(self):
        return self.name == "negbm25"


KL = DistanceKind("kl")
ITAKURA_SAITO = DistanceKind("itakura-saito")
NEGBM25 = DistanceKind("negbm25")
L2 = DistanceKind("l2")


def renyi(alpha: float) -> DistanceKind:
    return DistanceKind("renyi", float(alpha))


class DistanceMode(str, Enum):
    """How the base distance is applied at index or query time.

    Text values match the CLI encoding and the a-b experiment labels.
    """

    ORIGINAL = "none"
    REVERSED = "reverse"
    SYM_AVG = "avg"
    SYM_MIN = "min"
    L2_PROXY = "l2"
    NATURAL = "natural"


@dataclass(frozen=True)
class DistanceSpec:
    kind: DistanceKind
    mode: DistanceMode = DistanceMode.ORIGINAL

    def __post_init__(self):
        if self.mode is DistanceMode.NATURAL and self.kind.name != "negbm25":
            raise InvalidArgumentError("natural mode is only defined for negbm25")
        if self.mode is DistanceMode.L2_PROXY and self.kind.is_sparse:
            raise InvalidArgumentError("l2 proxy mode is only defined for dense data")

    @classmethod
    def parse(cls, kind_text: str, mode_text: str = "none") -> "DistanceSpec":
        return cls(parse_kind(kind_text), parse_mode(mode_text))


def parse_kind(text: str) -> DistanceKind:
    text = text.strip()
    if text.startswith("renyi:"):
        try:
            return renyi(float(text[len("renyi:"):]))
        except ValueError as e:
            raise InvalidArgumentError(f"bad renyi parameter in {text!r}") from e
    if text in ("kl", "itakura-saito", "negbm25", "l2"):
        return DistanceKind(text)
    raise InvalidArgumentError(
        f"unknown distance kind {text!r} (expected kl|itakura-saito|renyi:A|negbm25|l2)")


def format_kind(kind: DistanceKind) -> str:
    if kind.name == "renyi":
        return f"renyi:{kind.alpha:g}"
    return kind.name


def parse_mode(text: str) -> DistanceMode:
    try:
        return DistanceMode(text.strip())
    except ValueError as e:
        raise InvalidArgumentError(
            f"unknown mode {text!r} (expected none|avg|min|reverse|l2|natural)") from e


def format_mode(mode: DistanceMode) -> str:
    return mode.value


def cost_multiplier(spec: DistanceSpec) -> int:
    """Base evaluations charged per call: 2 for avg/min, 1 otherwise."""
    return 2 if spec.mode in (DistanceMode.SYM_AVG, DistanceMode.SYM_MIN) else 1


class EvalCounter:
    """Exact count of base-distance evaluations.

    Mutable; per-worker instances should be merged rather than shared when
    queries run concurrently.
    """

    __slots__ = ("base_evals",)

    def __init__(self, base_evals: int = 0):
        self.base_evals = base_evals

    def add(self, n: int = 1):
        self.base_evals += n

    def merge(self, other: "EvalCounter"):
        self.base_evals += other.base_evals

    def __repr__(self):
        return f"EvalCounter(base_evals={self.base_evals})"


def _vals(x, other=None):
    v = x.values if isinstance(x, DenseHistogram) else np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgumentError("expected a 1-d point")
    if other is not None and v.shape != other.shape:
        raise InvalidArgumentError(f"dimension mismatch: {v.shape} vs {other.shape}")
    if np.any(v <= 0.0):
        raise InvalidArgumentError("histogram components must be strictly positive")
    return v


def eval_kl(x, y) -> float:
    """Kullback-Leibler divergence sum(x_i * log(x_i / y_i)), natural log."""
    vx = _vals(x)
    vy = _vals(y, vx)
    return float(np.dot(vx, np.log(vx) - np.log(vy)))


def eval_itakura_saito(x, y) -> float:
    """Itakura-Saito distance sum(x_i/y_i - log(x_i/y_i) - 1)."""
    vx = _vals(x)
    vy = _vals(y, vx)
    r = vx / vy
    return float(np.sum(r - np.log(r) - 1.0))


def eval_renyi(x, y, alpha: float) -> float:
    """Renyi divergence log(sum(x_i^a * y_i^(1-a))) / (a - 1)."""
    if not math.isfinite(alpha) or alpha <= 0.0 or alpha == 1.0:
        raise InvalidArgumentError("renyi alpha must be positive and != 1")
    vx = _vals(x)
    vy = _vals(y, vx)
    return float(np.log(np.dot(vx ** alpha, vy ** (1.0 - alpha))) / (alpha - 1.0))


def eval_l2(x, y) -> float:
    vx = x.values if isinstance(x, DenseHistogram) else np.asarray(x, dtype=np.float64)
    vy = y.values if isinstance(y, DenseHistogram) else np.asarray(y, dtype=np.float64)
    if vx.shape != vy.shape:
        raise InvalidArgumentError(f"dimension mismatch: {vx.shape} vs {vy.shape}")
    return float(np.linalg.norm(vx - vy))


def _matched_idf(common, idf):
    out = np.empty(common.size, dtype=np.float64)
    for i, t in enumerate(common.tolist()):
        v = idf.get(t)
        if v is None:
            raise DataFormatError(f"idf table is missing matched term {t}")
        out[i] = v
    return out


def eval_neg_bm25(x: SparseTfVector, y: SparseTfVector, idf) -> float:
    """Negated BM25 similarity -sum over matching terms of tf_q(x) * tf_d(y) * idf.

    The left argument contributes query-role weights, the right one
    document-role weights; disjoint term sets give 0.
    """
    common, ix, iy = np.intersect1d(x.terms, y.terms, assume_unique=True,
                                    return_indices=True)
    if common.size == 0:
        return 0.0
    w = _matched_idf(common, idf)
    return -float(np.sum(x.tf_q[ix] * y.tf_d[iy] * w))


def eval_natural_bm25(x: SparseTfVector, y: SparseTfVector, idf) -> float:
    """Symmetric pseudo-BM25: both sides contribute tf_d * sqrt(idf)."""
    common, ix, iy = np.intersect1d(x.terms, y.terms, assume_unique=True,
                                    return_indices=True)
    if common.size == 0:
        return 0.0
    w = _matched_idf(common, idf)
    return -float(np.sum(x.tf_d[ix] * y.tf_d[iy] * w))


def _base_scalar(kind: DistanceKind, idf):
    if kind.name == "kl":
        return eval_kl
    if kind.name == "itakura-saito":
        return eval_itakura_saito
    if kind.name == "renyi":
        a = kind.alpha
        return lambda x, y: eval_renyi(x, y, a)
    if kind.name == "l2":
        return eval_l2
    return lambda x, y: eval_neg_bm25(x, y, idf)


def evaluate(spec: DistanceSpec, x, y, idf=None, counter: EvalCounter | None = None) -> float:
    """Evaluate the spec on one ordered pair, counting base evaluations.

    x is the data-side (left) point, y the query-side (right) one for the
    directional modes.
    """
    sparse_pt = isinstance(x, SparseTfVector)
    if sparse_pt != isinstance(y, SparseTfVector):
        raise InvalidArgumentError("cannot mix sparse and dense points")
    if spec.kind.is_sparse != sparse_pt and spec.mode is not DistanceMode.L2_PROXY:
        raise InvalidArgumentError(
            f"distance {format_kind(spec.kind)} is incompatible with "
            f"{'sparse' if sparse_pt else 'dense'} points")
    if spec.mode is DistanceMode.L2_PROXY and sparse_pt:
        raise InvalidArgumentError("l2 proxy mode is only defined for dense data")
    if sparse_pt and idf is None:
        raise InvalidArgumentError("sparse evaluation requires an idf table")

    mode = spec.mode
    if mode is DistanceMode.L2_PROXY:
        value, cost = eval_l2(x, y), 1
    elif mode is DistanceMode.NATURAL:
        value, cost = eval_natural_bm25(x, y, idf), 1
    else:
        f = _base_scalar(spec.kind, idf)
        if mode is DistanceMode.ORIGINAL:
            value, cost = f(x, y), 1
        elif mode is DistanceMode.REVERSED:
            value, cost = f(y, x), 1
        elif mode is DistanceMode.SYM_AVG:
            value, cost = (f(x, y) + f(y, x)) / 2.0, 2
        else:
            value, cost = min(f(x, y), f(y, x)), 2
    if counter is not None:
        counter.add(cost)
    return value


class EvalContext:
    """Vectorized evaluation of d(data_row, query) over one dataset.

    Derived arrays (logs, row sums, powers, CSR term matrices) are built
    lazily on first use and cached, so one context should be shared by all
    searches over a dataset. Immutable once warmed; safe for concurrent
    readers.
    """

    def __init__(self, dataset):
        self.dataset = dataset
        self._cache = {}

    def _get(self, key, build):
        v = self._cache.get(key)
        if v is None:
            v = build()
            self._cache[key] = v
        return v

    # dense derived arrays
    def _X(self):
        return self.dataset.dense_values

    def _logX(self):
        return self._get("logX", lambda: np.log(self._X()))

    def _xlogx(self):
        return self._get("xlogx", lambda: np.einsum("ij,ij->i", self._X(), self._logX()))

    def _sumlogX(self):
        return self._get("sumlogX", lambda: self._logX().sum(axis=1))

    def _invX(self):
        return self._get("invX", lambda: 1.0 / self._X())

    def _sqX(self):
        return self._get("sqX", lambda: np.einsum("ij,ij->i", self._X(), self._X()))

    def _powX(self, p):
        return self._get(("powX", p), lambda: self._X() ** p)

    # sparse derived arrays
    def _vocab(self):
        def build():
            return np.unique(np.concatenate([p.terms for p in self.dataset.sparse_points]))
        return self._get("vocab", build)

    def _idf_vec(self):
        def build():
            vocab = self._vocab()
            idf = self.dataset.idf
            return np.array([idf[int(t)] for t in vocab], dtype=np.float64)
        return self._get("idf_vec", build)

    def _tf_csr(self, role):
        def build():
            vocab = self._vocab()
            pts = self.dataset.sparse_points
            indptr = np.zeros(len(pts) + 1, dtype=np.int64)
            for i, p in enumerate(pts):
                indptr[i + 1] = indptr[i] + len(p)
            indices = np.concatenate([np.searchsorted(vocab, p.terms) for p in pts])
            data = np.concatenate([(p.tf_q if role == "q" else p.tf_d) for p in pts])
            return sp.csr_matrix((data, indices, indptr),
                                 shape=(len(pts), vocab.size))
        return self._get(("tf", role), build)

    def _query_weights(self, q: SparseTfVector, role):
        """Dense weight vector over the data vocabulary: tf * idf for the
        query's terms; terms outside the vocabulary cannot match and drop."""
        vocab = self._vocab()
        pos = np.searchsorted(vocab, q.terms)
        ok = pos < vocab.size
        ok[ok] &= vocab[pos[ok]] == q.terms[ok]
        w = np.zeros(vocab.size, dtype=np.float64)
        tf = q.tf_d if role == "d" else q.tf_q
        w[pos[ok]] = tf[ok] * self._idf_vec()[pos[ok]]
        return w

    def _dense_query(self, kind, q):
        """(fwd, rev) row closures for d(row, q) and d(q, row)."""
        X = self._X()
        if kind.name == "kl":
            logq = np.log(q)
            xlogx, logX = self._xlogx(), self._logX()
            qlogq = float(np.dot(q, logq))

            def fwd(idx):
                if idx is None:
                    return xlogx - X @ logq
                return xlogx[idx] - X[idx] @ logq

            def rev(idx):
                if idx is None:
                    return qlogq - logX @ q
                return qlogq - logX[idx] @ q

            return fwd, rev
        if kind.name == "itakura-saito":
            d = X.shape[1]
            invq = 1.0 / q
            sumlogq = float(np.log(q).sum())
            sumlogX, invX = self._sumlogX(), self._invX()
            cf = sumlogq - d
            cr = -sumlogq - d

            def fwd(idx):
                if idx is None:
                    return X @ invq - sumlogX + cf
                return X[idx] @ invq - sumlogX[idx] + cf

            def rev(idx):
                if idx is None:
                    return invX @ q + sumlogX + cr
                return invX[idx] @ q + sumlogX[idx] + cr

            return fwd, rev
        if kind.name == "renyi":
            a = kind.alpha
            c = 1.0 / (a - 1.0)
            Xa, X1a = self._powX(a), self._powX(1.0 - a)
            qa, q1a = q ** a, q ** (1.0 - a)

            def fwd(idx):
                dot = Xa @ q1a if idx is None else Xa[idx] @ q1a
                return c * np.log(dot)

            def rev(idx):
                dot = X1a @ qa if idx is None else X1a[idx] @ qa
                return c * np.log(dot)

            return fwd, rev
        # l2 is symmetric; fwd doubles as rev
        sqX = self._sqX()
        qq = float(np.dot(q, q))

        def fwd(idx):
            if idx is None:
                cross = X @ q
                return np.sqrt(np.maximum(sqX - 2.0 * cross + qq, 0.0))
            return np.sqrt(np.maximum(sqX[idx] - 2.0 * (X[idx] @ q) + qq, 0.0))

        return fwd, fwd

    def _l2_rows(self, q):
        fwd, _ = self._dense_query(L2, q)
        return fwd

    def _sparse_query(self, q: SparseTfVector, mode):
        if mode is DistanceMode.NATURAL:
            w = self._query_weights(q, "d")
            tfd = self._tf_csr("d")

            def nat(idx):
                m = tfd if idx is None else tfd[idx]
                return -(m @ w)

            return nat, nat
        wf = self._query_weights(q, "d")
        wr = self._query_weights(q, "q")
        tfq, tfd = self._tf_csr("q"), self._tf_csr("d")

        def fwd(idx):
            m = tfq if idx is None else tfq[idx]
            return -(m @ wf)

        def rev(idx):
            m = tfd if idx is None else tfd[idx]
            return -(m @ wr)

        return fwd, rev

    def query(self, spec: DistanceSpec, point, counter: EvalCounter | None = None):
        """Bind a query point; returns rows(idx) computing d(data[idx], point).

        idx is an integer index array into the dataset (None for all rows).
        Base evaluations are charged to the counter per batch element,
        doubled for avg/min.
        """
        ds = self.dataset
        if ds.kind == "dense":
            if isinstance(point, SparseTfVector):
                raise InvalidArgumentError("dense dataset cannot take a sparse query")
            q = point.values if isinstance(point, DenseHistogram) else np.asarray(point, np.float64)
            if q.shape != (ds.dim,):
                raise InvalidArgumentError(
                    f"query has shape {q.shape}, dataset dimensionality is {ds.dim}")
            if spec.kind.is_sparse:
                raise InvalidArgumentError("negbm25 is incompatible with dense data")
            if spec.mode is DistanceMode.L2_PROXY:
                fwd = rev = self._l2_rows(q)
            else:
                fwd, rev = self._dense_query(spec.kind, q)
        else:
            if not isinstance(point, SparseTfVector):
                raise InvalidArgumentError("sparse dataset requires SparseTfVector queries")
            if not spec.kind.is_sparse:
                raise InvalidArgumentError(
                    f"{format_kind(spec.kind)} is incompatible with sparse data")
            fwd, rev = self._sparse_query(point, spec.mode)

        mode = spec.mode
        if mode in (DistanceMode.ORIGINAL, DistanceMode.L2_PROXY, DistanceMode.NATURAL):
            f, m = fwd, 1
        elif mode is DistanceMode.REVERSED:
            f, m = rev, 1
        elif mode is DistanceMode.SYM_AVG:
            def f(idx, _f=fwd, _r=rev):
                return (_f(idx) + _r(idx)) / 2.0
            m = 2
        else:
            def f(idx, _f=fwd, _r=rev):
                return np.minimum(_f(idx), _r(idx))
            m = 2

        if counter is None:
            counter = EvalCounter()

        def rows(idx):
            out = np.asarray(f(idx), dtype=np.float64)
            counter.add(m * out.size)
            return out

        return rows
