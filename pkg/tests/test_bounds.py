"""
Tests for the finite-space inequalities and the two-point trade-off bounds
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.bounds import (
    InequalityReport,
    bias_tradeoff_bound,
    check_cauchy_schwarz_step,
    check_lemma1_variance,
    check_lemma2,
    check_lemma3_first,
    check_mad_below_sd,
    check_proof_chain,
    check_quadratic_chain,
    check_special_case_means,
    mad_tradeoff_bound,
    random_instance,
    variance_tradeoff_bound,
)
from src.core.errors import PreconditionError, UsageError
from src.core.measure import DiscreteMeasure, FiniteRV


@st.composite
def instances(draw):
    size = draw(st.integers(min_value=2, max_value=8))
    weight = st.floats(min_value=0.001, max_value=1.0)
    p = np.asarray(draw(st.lists(weight, min_size=size, max_size=size)))
    q = np.asarray(draw(st.lists(weight, min_size=size, max_size=size)))
    value = st.floats(min_value=-10.0, max_value=10.0)
    x = draw(st.lists(value, min_size=size, max_size=size))
    u, v = draw(value), draw(value)
    return (
        DiscreteMeasure.from_probs(p / p.sum()),
        DiscreteMeasure.from_probs(q / q.sum()),
        FiniteRV(np.asarray(x)),
        u,
        v,
    )


class TestInequalityReport:
    def test_tolerance_scales_with_magnitude(self):
        assert InequalityReport.evaluate("t", 1.0 + 1e-13, 1.0).holds
        assert not InequalityReport.evaluate("t", 1.0 + 1e-9, 1.0).holds
        assert InequalityReport.evaluate("t", 1e6 + 1e-7, 1e6).holds

    def test_nan_never_holds(self):
        assert not InequalityReport.evaluate("t", math.nan, 1.0).holds

    def test_infinite_rhs_holds(self):
        report = InequalityReport.evaluate("t", 5.0, math.inf)
        assert report.holds
        assert report.tol == pytest.approx(5e-12)


class TestMadInequality:
    @pytest.mark.property_based
    @given(instances())
    @settings(max_examples=300, deadline=None)
    def test_holds_on_generated_instances(self, inst):
        P, Q, X, u, v = inst
        assert check_lemma2(P, Q, X, u, v).holds
        assert check_cauchy_schwarz_step(P, Q, X, u, v).holds
        assert check_proof_chain(P, Q, X, u, v).holds

    @pytest.mark.slow
    def test_holds_on_ten_thousand_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            P, Q, X, u, v = random_instance(rng, 2, 20)
            report = check_lemma2(P, Q, X, u, v)
            assert report.holds, report.to_dict()
            chain = check_proof_chain(P, Q, X, u, v)
            assert chain.holds, chain.to_dict()
            assert chain.context["slack_direct"] >= -1e-12 * max(1.0, chain.lhs, chain.rhs)

    def test_equal_measures_constant_variable(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        report = check_lemma2(P, P, FiniteRV.constant(1.0, 2), u=3.0, v=1.0)
        assert report.lhs == pytest.approx(2.0 / 5.0)
        assert report.rhs == pytest.approx(2.0)
        assert report.holds

    def test_context_carries_proof_symbols(self, literal_counterexample):
        P, Q = literal_counterexample
        report = check_lemma2(P, Q, FiniteRV(np.array([0.0, 1.0])), 0.0, 1.0)
        for key in ("hellinger_sq", "d", "a", "b", "mad_p_u", "mad_q_v"):
            assert key in report.context
        assert report.context["b"] == 1.0

    def test_special_case_means(self, literal_counterexample):
        P, Q = literal_counterexample
        X = FiniteRV(np.array([0.0, 1.0]))
        report = check_special_case_means(P, Q, X)
        assert report.context["u"] == pytest.approx(0.3)
        assert report.context["v"] == pytest.approx(0.4)
        assert report.holds

    def test_rejects_misaligned_variable(self, literal_counterexample):
        P, Q = literal_counterexample
        with pytest.raises(UsageError):
            check_lemma2(P, Q, FiniteRV(np.array([0.0, 1.0, 2.0])), 0.0, 1.0)


class TestQuadraticChain:
    def test_root_lower_bound_on_d_grid(self):
        for d in np.linspace(0.0, 1.0, 10_001):
            _, lower = check_quadratic_chain(0.0, 0.0, float(d))
            assert lower.holds, lower.to_dict()

    def test_root_report_follows_premise(self):
        root, _ = check_quadratic_chain(0.0, 1.0, 0.5)
        assert root.context["premise"] is False
        assert not root.holds
        root, _ = check_quadratic_chain(1.0, 1.0, 0.5)
        assert root.context["premise"] is True
        assert root.holds

    def test_rejects_out_of_range(self):
        with pytest.raises(UsageError):
            check_quadratic_chain(-1.0, 1.0, 0.5)
        with pytest.raises(UsageError):
            check_quadratic_chain(1.0, 1.0, 1.5)


class TestVarianceAndRatioInequalities:
    @pytest.mark.slow
    def test_random_suites(self):
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            P, Q, X, _, _ = random_instance(rng, 2, 20)
            assert check_lemma1_variance(P, Q, X).holds
            assert check_lemma3_first(P, Q, X).holds
            assert check_mad_below_sd(P, X).holds

    def test_degenerate_supports_hold_trivially(self):
        P = DiscreteMeasure.from_probs([1.0, 0.0])
        Q = DiscreteMeasure.from_probs([0.0, 1.0])
        X = FiniteRV(np.array([0.0, 5.0]))
        ratio = check_lemma3_first(P, Q, X)
        assert ratio.lhs == 0.0 and ratio.holds
        variance = check_lemma1_variance(P, Q, X)
        assert variance.lhs == 0.0 and variance.holds

    def test_equal_measures_give_zero_lhs(self):
        P = DiscreteMeasure.from_probs([0.2, 0.3, 0.5])
        X = FiniteRV(np.array([1.0, -2.0, 4.0]))
        assert check_lemma1_variance(P, P, X).lhs == 0.0
        assert check_lemma3_first(P, P, X).lhs == 0.0

    def test_mad_below_sd_two_point(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        report = check_mad_below_sd(P, np.array([-1.0, 1.0]))
        assert report.lhs == pytest.approx(1.0)
        assert report.rhs == pytest.approx(1.0)
        assert report.holds


class TestTradeoffBounds:
    def test_mad_bound_value(self):
        assert mad_tradeoff_bound(1.0, 0.0, 0.25) == pytest.approx(0.1)
        assert mad_tradeoff_bound(-1.0, 0.5, 0.1) == pytest.approx(0.025)

    def test_precondition_on_bias_budget(self):
        with pytest.raises(PreconditionError) as excinfo:
            mad_tradeoff_bound(1.0, 0.0, 0.3)
        assert excinfo.value.detail["bias_budget"] == 0.3
        with pytest.raises(PreconditionError):
            variance_tradeoff_bound(1.0, 0.5, 0.3)

    def test_variance_bound_value(self):
        h = 0.5
        expected = 0.25 / (4.0 - 2.0 * h * h) * (1.0 / h - h) ** 2 / 2.0
        assert variance_tradeoff_bound(1.0, h, 0.0) == pytest.approx(expected)

    def test_bias_bound_floors_at_zero(self):
        assert bias_tradeoff_bound(1.0, 0.5, 1e6) == 0.0
        assert bias_tradeoff_bound(1.0, 0.5, 0.0) == pytest.approx(0.5)

    def test_hellinger_range(self):
        with pytest.raises(UsageError):
            variance_tradeoff_bound(1.0, 1.0, 0.0)
        with pytest.raises(UsageError):
            mad_tradeoff_bound(1.0, 1.0, 0.0)


class TestWorkedValues:
    @pytest.fixture
    def pair(self):
        return DiscreteMeasure.from_probs([0.9, 0.1]), DiscreteMeasure.from_probs([0.5, 0.5])

    def test_variance_inequality_lhs(self):
        # H² = 1 - √0.5625 = 0.25 and |ΔE| = 1
        P = DiscreteMeasure.from_probs([1.0, 0.0])
        Q = DiscreteMeasure.from_probs([0.5625, 0.4375])
        report = check_lemma1_variance(P, Q, FiniteRV(np.array([0.0, 1.0 / 0.4375])))
        assert report.context["hellinger_sq"] == pytest.approx(0.25, rel=1e-12)
        assert abs(report.context["mean_gap"]) == pytest.approx(1.0, rel=1e-12)
        assert report.lhs == pytest.approx(0.642857, rel=1e-5)
        assert report.holds

    def test_variance_tradeoff_bound(self):
        assert variance_tradeoff_bound(1.0, 0.5, 0.25) == pytest.approx(0.080357, rel=1e-5)

    def test_ratio_inequality(self, pair):
        report = check_lemma3_first(*pair, FiniteRV(np.array([0.0, 1.0])))
        assert report.context["lr_min_norm"] == pytest.approx(4.0, rel=1e-12)
        assert report.lhs == pytest.approx(0.089443, rel=1e-5)
        assert report.rhs == pytest.approx(0.5, rel=1e-12)
        assert report.holds

    def test_special_case_means(self, pair):
        report = check_special_case_means(*pair, FiniteRV(np.array([0.0, 1.0])))
        assert report.context["u"] == pytest.approx(0.1)
        assert report.context["v"] == pytest.approx(0.5)
        # (1 - H²)² = (4√0.05)² = 0.8, so the left side is 0.064
        assert report.lhs == pytest.approx(0.064, rel=1e-9)
        assert report.rhs == pytest.approx(0.5, rel=1e-12)
        assert report.holds

    def test_mad_lhs_nonincreasing_in_hellinger(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        X = FiniteRV(np.array([-1.0, 2.0]))
        points = []
        for q in np.linspace(0.5, 1.0, 501):
            Q = DiscreteMeasure.from_probs([float(q), 1.0 - float(q)])
            report = check_lemma2(P, Q, X, u=0.3, v=-0.7)
            points.append((report.context["hellinger_sq"], report.lhs))
        points.sort()
        assert points[0][0] == 0.0 and points[-1][0] > 0.29
        lhs = [p[1] for p in points]
        for before, after in zip(lhs, lhs[1:]):
            assert after <= before + 1e-15


def test_random_instance_is_reproducible():
    a = random_instance(np.random.default_rng(3))
    b = random_instance(np.random.default_rng(3))
    assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]
    assert a[3:] == b[3:]


def test_random_instance_with_zeroed_atoms():
    rng = np.random.default_rng(5)
    sizes = set()
    for _ in range(200):
        P, Q, _, _, _ = random_instance(rng, 2, 6, full_support=False)
        assert P.probs.sum() == pytest.approx(1.0)
        sizes.add(int((P.probs == 0).sum()))
    assert max(sizes) > 0
