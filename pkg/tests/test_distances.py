"""Distance kinds, modes, evaluation contexts, and counters.

Reference values for the worked examples were computed with an
independent 60-digit evaluation of the defining formulas and frozen
here. The acceptance module re-derives them live.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmknn import (ITAKURA_SAITO, KL, L2, NEGBM25, Dataset, DistanceMode,
                   DistanceSpec, EvalContext, EvalCounter, IdfTable,
                   SparseTfVector, cost_multiplier, eval_itakura_saito,
                   eval_kl, eval_l2, eval_natural_bm25, eval_neg_bm25,
                   eval_renyi, evaluate, format_kind, format_mode, parse_kind,
                   parse_mode, renyi)
from nmknn.errors import DataFormatError, InvalidArgumentError

A = np.array([0.5, 0.5])
B = np.array([0.25, 0.75])

# frozen oracle values for the (A, B) pair
KL_AB = 0.14384103622589046
KL_BA = 0.13081203594113696
IS_AB = 0.37898459421488574
IS_BA = 0.28768207245178093   # = ln(4/3)
RENYI2_AB = 0.28768207245178093
RENYI05_AB = 0.06933646419507391
L2_AB = 0.35355339059327376
SYM_AVG_AB = 0.13732653608351371
SYM_MIN_AB = 0.13081203594113696


def close(a, b, rel=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-15)


class TestFrozenExamples:
    def test_kl_forward(self):
        assert close(eval_kl(A, B), KL_AB)

    def test_kl_reverse_differs(self):
        assert close(eval_kl(B, A), KL_BA)
        assert abs(eval_kl(A, B) - eval_kl(B, A)) > 1e-3

    def test_itakura_saito(self):
        assert close(eval_itakura_saito(A, B), IS_AB)
        assert close(eval_itakura_saito(B, A), IS_BA)

    def test_renyi_alpha_2(self):
        assert close(eval_renyi(A, B, 2.0), RENYI2_AB)

    def test_renyi_alpha_half_symmetric(self):
        assert close(eval_renyi(A, B, 0.5), RENYI05_AB)
        assert close(eval_renyi(B, A, 0.5), RENYI05_AB)

    def test_l2(self):
        assert close(eval_l2(A, B), L2_AB)
        assert close(eval_l2(B, A), L2_AB)

    def test_identity_zero(self):
        assert eval_kl(A, A) == 0.0
        assert eval_itakura_saito(B, B) == 0.0
        assert abs(eval_renyi(B, B, 2.0)) < 1e-10
        assert eval_l2(A, A) == 0.0


def _sv(term_tfs):
    terms = np.array(sorted(term_tfs), dtype=np.int64)
    tf_q = np.array([term_tfs[t][0] for t in terms], dtype=float)
    tf_d = np.array([term_tfs[t][1] for t in terms], dtype=float)
    return SparseTfVector(terms=terms, tf_q=tf_q, tf_d=tf_d)


class TestBm25:
    idf = IdfTable({1: 0.5, 2: 1.0, 7: 2.0})

    def test_worked_example(self):
        x = _sv({1: (2.0, 1.0)})
        y = _sv({1: (1.0, 3.0)})
        assert eval_neg_bm25(x, y, self.idf) == -3.0   # -(2 * 3 * 0.5)
        assert eval_neg_bm25(y, x, self.idf) == -0.5   # -(1 * 1 * 0.5)

    def test_natural_symmetric_example(self):
        x = _sv({1: (2.0, 1.0)})
        y = _sv({1: (1.0, 3.0)})
        assert eval_natural_bm25(x, y, self.idf) == -1.5   # -(1 * 3 * 0.5)
        assert eval_natural_bm25(y, x, self.idf) == -1.5

    def test_disjoint_terms_zero(self):
        x = _sv({1: (2.0, 1.0)})
        y = _sv({2: (1.0, 3.0), 7: (1.0, 1.0)})
        assert eval_neg_bm25(x, y, self.idf) == 0.0
        assert eval_natural_bm25(x, y, self.idf) == 0.0

    def test_multi_term_accumulation(self):
        x = _sv({1: (2.0, 1.0), 2: (1.0, 4.0), 7: (3.0, 1.0)})
        y = _sv({2: (5.0, 2.0), 7: (1.0, 2.0)})
        # matches on 2 and 7: -(1*2*1.0 + 3*2*2.0)
        assert eval_neg_bm25(x, y, self.idf) == -14.0

    def test_missing_matched_idf_is_error(self):
        x = _sv({3: (1.0, 1.0)})
        y = _sv({3: (1.0, 2.0)})
        with pytest.raises(DataFormatError):
            eval_neg_bm25(x, y, self.idf)


class TestSpecAndModes:
    def test_mode_composition_on_kl(self):
        x, y = A, B
        assert close(evaluate(DistanceSpec(KL, DistanceMode.SYM_MIN), x, y), SYM_MIN_AB)
        assert close(evaluate(DistanceSpec(KL, DistanceMode.SYM_AVG), x, y), SYM_AVG_AB)
        assert close(evaluate(DistanceSpec(KL, DistanceMode.REVERSED), x, y), KL_BA)
        assert close(evaluate(DistanceSpec(KL, DistanceMode.L2_PROXY), x, y), L2_AB)

    def test_natural_requires_negbm25(self):
        with pytest.raises(InvalidArgumentError):
            DistanceSpec(KL, DistanceMode.NATURAL)
        DistanceSpec(NEGBM25, DistanceMode.NATURAL)

    def test_l2_mode_rejected_for_sparse_kind(self):
        with pytest.raises(InvalidArgumentError):
            DistanceSpec(NEGBM25, DistanceMode.L2_PROXY)

    def test_renyi_alpha_validation(self):
        with pytest.raises(InvalidArgumentError):
            renyi(1.0)
        with pytest.raises(InvalidArgumentError):
            renyi(0.0)
        with pytest.raises(InvalidArgumentError):
            renyi(-2.0)
        assert renyi(0.25).alpha == 0.25

    def test_parse_format_round_trip(self):
        for text in ("kl", "itakura-saito", "negbm25", "l2", "renyi:0.5", "renyi:2"):
            assert format_kind(parse_kind(text)) == text
        for text in ("none", "reverse", "avg", "min", "l2", "natural"):
            assert format_mode(parse_mode(text)) == text

    def test_parse_errors(self):
        with pytest.raises(InvalidArgumentError):
            parse_kind("cosine")
        with pytest.raises(InvalidArgumentError):
            parse_kind("renyi")
        with pytest.raises(InvalidArgumentError):
            parse_kind("renyi:1")
        with pytest.raises(InvalidArgumentError):
            parse_mode("sym")

    def test_cost_multiplier(self):
        assert cost_multiplier(DistanceSpec(KL)) == 1
        assert cost_multiplier(DistanceSpec(KL, DistanceMode.REVERSED)) == 1
        assert cost_multiplier(DistanceSpec(KL, DistanceMode.SYM_AVG)) == 2
        assert cost_multiplier(DistanceSpec(KL, DistanceMode.SYM_MIN)) == 2
        assert cost_multiplier(DistanceSpec(KL, DistanceMode.L2_PROXY)) == 1
        assert cost_multiplier(DistanceSpec(NEGBM25, DistanceMode.NATURAL)) == 1


class TestCounting:
    def test_scalar_evaluate_counts(self):
        c = EvalCounter()
        evaluate(DistanceSpec(KL), A, B, counter=c)
        assert c.base_evals == 1
        evaluate(DistanceSpec(KL, DistanceMode.SYM_MIN), A, B, counter=c)
        assert c.base_evals == 3
        evaluate(DistanceSpec(KL, DistanceMode.SYM_AVG), A, B, counter=c)
        assert c.base_evals == 5

    def test_counter_merge(self):
        a, b = EvalCounter(), EvalCounter()
        a.add(3)
        b.add(4)
        a.merge(b)
        assert a.base_evals == 7

    def test_batch_counts_scale_with_rows(self):
        ds = _dense_dataset(37)
        ctx = EvalContext(ds)
        q = ds.point(0)
        c = EvalCounter()
        ctx.query(DistanceSpec(KL), q, c)(None)
        assert c.base_evals == 37
        c2 = EvalCounter()
        ctx.query(DistanceSpec(KL, DistanceMode.SYM_AVG), q, c2)(None)
        assert c2.base_evals == 74
        c3 = EvalCounter()
        ctx.query(DistanceSpec(KL, DistanceMode.SYM_MIN), q, c3)(np.arange(5))
        assert c3.base_evals == 10


def _dense_dataset(n, d=6, seed=0):
    rng = np.random.default_rng(seed)
    rows = rng.random((n, d)) + 0.05
    rows /= rows.sum(axis=1, keepdims=True)
    return Dataset.from_dense(rows)


def _sparse_dataset(n, vocab=40, seed=0):
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n):
        nt = int(rng.integers(2, 8))
        terms = np.sort(rng.choice(vocab, size=nt, replace=False)).astype(np.int64)
        pts.append(SparseTfVector(terms=terms,
                                  tf_q=rng.random(nt) + 0.1,
                                  tf_d=rng.random(nt) + 0.1))
    idf = {t: 0.1 + t * 0.05 for t in range(vocab)}
    return Dataset.from_sparse(pts, idf)


DENSE_SPECS = [
    DistanceSpec(kind, mode)
    for kind in (KL, ITAKURA_SAITO, renyi(0.25), renyi(0.5), renyi(2.0), L2)
    for mode in (DistanceMode.ORIGINAL, DistanceMode.REVERSED,
                 DistanceMode.SYM_AVG, DistanceMode.SYM_MIN)
] + [DistanceSpec(KL, DistanceMode.L2_PROXY)]

SPARSE_SPECS = [
    DistanceSpec(NEGBM25, mode)
    for mode in (DistanceMode.ORIGINAL, DistanceMode.REVERSED,
                 DistanceMode.SYM_AVG, DistanceMode.SYM_MIN,
                 DistanceMode.NATURAL)
]


class TestBatchAgainstScalar:
    """The batched row evaluators must agree with pointwise evaluation;
    this ties the reduced linear forms back to the defining formulas."""

    @pytest.mark.parametrize("spec", DENSE_SPECS, ids=str)
    def test_dense(self, spec):
        ds = _dense_dataset(23)
        ctx = EvalContext(ds)
        q = _dense_dataset(1, seed=99).point(0)
        got = ctx.query(spec, q)(None)
        want = np.array([evaluate(spec, ds.point(i), q) for i in range(23)])
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("spec", DENSE_SPECS[:8], ids=str)
    def test_dense_subset_rows(self, spec):
        ds = _dense_dataset(23)
        ctx = EvalContext(ds)
        q = _dense_dataset(1, seed=98).point(0)
        idx = np.array([3, 0, 17, 9])
        got = ctx.query(spec, q)(idx)
        want = np.array([evaluate(spec, ds.point(i), q) for i in idx])
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("spec", SPARSE_SPECS, ids=str)
    def test_sparse(self, spec):
        ds = _sparse_dataset(19)
        ctx = EvalContext(ds)
        q = _sparse_dataset(3, seed=77).point(1)
        got = ctx.query(spec, q)(None)
        want = np.array([evaluate(spec, ds.point(i), q, idf=ds.idf)
                         for i in range(19)])
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    def test_query_terms_outside_vocabulary_drop(self):
        ds = _sparse_dataset(5, vocab=10)
        ctx = EvalContext(ds)
        q = SparseTfVector(terms=np.array([2, 500], dtype=np.int64),
                           tf_q=np.array([1.0, 4.0]),
                           tf_d=np.array([1.0, 4.0]))
        got = ctx.query(DistanceSpec(NEGBM25), q)(None)
        assert np.all(np.isfinite(got))


def _hist_pair(draw_floats):
    x = np.array(draw_floats[:6])
    y = np.array(draw_floats[6:])
    return x / x.sum(), y / y.sum()


@st.composite
def hist_pairs(draw):
    vals = draw(st.lists(st.floats(min_value=0.01, max_value=1.0,
                                   allow_nan=False, allow_infinity=False),
                         min_size=12, max_size=12))
    return _hist_pair(vals)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(hist_pairs())
    def test_symmetric_modes(self, pair):
        x, y = pair
        for spec in (DistanceSpec(KL, DistanceMode.SYM_AVG),
                     DistanceSpec(KL, DistanceMode.SYM_MIN),
                     DistanceSpec(renyi(0.5)),
                     DistanceSpec(L2)):
            assert abs(evaluate(spec, x, y) - evaluate(spec, y, x)) < 1e-10

    @settings(max_examples=60, deadline=None)
    @given(hist_pairs())
    def test_reverse_swaps_arguments(self, pair):
        x, y = pair
        rev = DistanceSpec(ITAKURA_SAITO, DistanceMode.REVERSED)
        fwd = DistanceSpec(ITAKURA_SAITO)
        assert evaluate(rev, x, y) == pytest.approx(evaluate(fwd, y, x), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(hist_pairs())
    def test_self_distance_vanishes(self, pair):
        x, _ = pair
        for spec in (DistanceSpec(KL), DistanceSpec(ITAKURA_SAITO),
                     DistanceSpec(renyi(2.0)), DistanceSpec(L2)):
            assert abs(evaluate(spec, x, x)) < 1e-10

    def test_dimension_mismatch_is_error(self):
        with pytest.raises(InvalidArgumentError):
            eval_kl(np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5]))

    def test_nonpositive_input_is_error(self):
        with pytest.raises(InvalidArgumentError):
            eval_kl(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
