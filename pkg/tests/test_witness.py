"""
Tests for the indicator witness, the conditional-mean reduction and the search
"""

import numpy as np
import pytest

from src.core.errors import PreconditionError, UsageError
from src.core.measure import DiscreteMeasure, FiniteRV
from src.core.witness import (
    indicator_mean_mad,
    near_tightness_example,
    random_rao_blackwell_instance,
    rao_blackwell_reduce,
    rao_blackwell_report,
    tightness_search,
    tightness_witness,
)
from src.runner import pinned_rao_blackwell_example


def test_indicator_mean_mad():
    mean, mad = indicator_mean_mad(0.3)
    assert mean == 0.3
    assert mad == pytest.approx(0.42)


class TestTightnessWitness:
    def test_literal_bound_fails_on_pinned_pair(self, literal_counterexample):
        report = tightness_witness(*literal_counterexample)
        assert report.selected_atom == 1
        assert report.witness.values.tolist() == [0.0, 1.0]
        assert report.details["mad_q"] == pytest.approx(0.48)
        assert report.details["literal_bound"] == pytest.approx(0.4)
        assert report.details["adjusted_bound"] == pytest.approx(0.8)
        assert not report.literal_bound_holds
        assert report.adjusted_bound_holds

    def test_adjusted_bound_on_two_point_grid(self):
        grid = np.round(np.arange(1, 100) / 100.0, 2)
        for p in grid:
            for q in grid:
                if p == q:
                    continue
                P = DiscreteMeasure.from_probs([p, 1.0 - p])
                Q = DiscreteMeasure.from_probs([q, 1.0 - q])
                assert tightness_witness(P, Q).adjusted_bound_holds, (p, q)

    def test_equal_measures_are_vacuous(self):
        P = DiscreteMeasure.from_probs([0.2, 0.3, 0.5])
        report = tightness_witness(P, P)
        assert report.vacuous
        assert report.witness is None
        assert report.to_dict()["witness"] is None

    def test_ties_pick_lowest_index(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5, 0.0])
        Q = DiscreteMeasure.from_probs([0.0, 0.5, 0.5])
        assert tightness_witness(P, Q).selected_atom == 0


class TestRaoBlackwell:
    def test_pinned_example(self):
        X, A, P, Q = pinned_rao_blackwell_example()
        report = rao_blackwell_report(X, A, P, Q)
        assert report.reduced.values.tolist() == pytest.approx([2.0, 2.0, 2.0])
        assert report.mad_p[0] == pytest.approx(2.0 / 3.0)
        assert report.mad_p[1] == pytest.approx(0.0, abs=1e-15)
        assert report.means_preserved
        assert report.mad_nonincreasing

    def test_zero_mass_event(self):
        P = DiscreteMeasure.from_probs([1.0, 0.0])
        Q = DiscreteMeasure.from_probs([0.5, 0.5])
        with pytest.raises(PreconditionError) as excinfo:
            rao_blackwell_reduce(FiniteRV(np.array([1.0, 2.0])), [2], P, Q)
        assert excinfo.value.detail["p_mass"] == 0.0

    def test_mismatched_conditional_means(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        Q = DiscreteMeasure.from_probs([0.25, 0.75])
        with pytest.raises(PreconditionError):
            rao_blackwell_reduce(FiniteRV(np.array([0.0, 1.0])), [1, 2], P, Q)

    def test_random_instances(self, rng):
        for _ in range(1000):
            size = int(rng.integers(2, 9))
            X, A, P, Q = random_rao_blackwell_instance(rng, size)
            report = rao_blackwell_report(X, A, P, Q, tol=1e-9)
            assert report.means_preserved, report.to_dict()
            assert report.mad_nonincreasing, report.to_dict()

    def test_instance_size_check(self, rng):
        with pytest.raises(UsageError):
            random_rao_blackwell_instance(rng, 1)


class TestNearTightness:
    def test_ratio_matches_prediction(self, literal_counterexample):
        report = near_tightness_example(*literal_counterexample, u=1.0, v=0.0)
        assert report.holds
        assert report.context["ratio"] == pytest.approx(report.context["predicted_ratio"], rel=1e-12)

    def test_disjoint_supports_rejected(self):
        P = DiscreteMeasure.from_probs([1.0, 0.0])
        Q = DiscreteMeasure.from_probs([0.0, 1.0])
        with pytest.raises(PreconditionError):
            near_tightness_example(P, Q, 1.0, 0.0)


class TestTightnessSearch:
    def test_zero_iterations_evaluates_one_start(self):
        result = tightness_search(space_size=3, iterations=0, seed=0)
        assert result.evaluations == 1
        assert len(result.trace) == 1 and len(result.trace[0]) == 1
        assert 0.0 <= result.best_ratio <= 1.0

    def test_ratio_never_exceeds_one(self):
        result = tightness_search(space_size=4, iterations=400, seed=1, restarts=4)
        assert result.max_ratio_seen <= 1.0 + 1e-12
        assert result.evaluations == 404
        assert all(trace == sorted(trace) for trace in result.trace)

    def test_independent_of_thread_count(self):
        serial = tightness_search(space_size=4, iterations=200, seed=9, restarts=4, threads=1)
        parallel = tightness_search(space_size=4, iterations=200, seed=9, restarts=4, threads=4)
        assert serial.to_dict() == parallel.to_dict()

    def test_two_point_search_beats_constant_variable(self):
        result = tightness_search(space_size=2, iterations=20_000, seed=1)
        best = result.best
        P, Q = DiscreteMeasure.from_probs(best["p"]), DiscreteMeasure.from_probs(best["q"])
        reference = near_tightness_example(P, Q, best["u"], best["v"])
        # X ≡ v on the same pair scores (1 - H²)²/5
        reference_ratio = reference.lhs / reference.rhs
        assert reference_ratio == pytest.approx((1.0 - result.best_hellinger_sq) ** 2 / 5.0, rel=1e-12)
        assert result.best_ratio >= reference_ratio
        assert result.best_ratio <= 1.0 + 1e-12

    def test_same_seed_same_result(self):
        first = tightness_search(space_size=2, iterations=500, seed=17, restarts=4)
        second = tightness_search(space_size=2, iterations=500, seed=17, restarts=4)
        other = tightness_search(space_size=2, iterations=500, seed=18, restarts=4)
        assert first.to_dict() == second.to_dict()
        assert first.to_dict() != other.to_dict()

    @pytest.mark.parametrize("size", [1, 51])
    def test_space_size_range(self, size):
        with pytest.raises(UsageError):
            tightness_search(space_size=size, iterations=10, seed=0)
