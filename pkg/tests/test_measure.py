"""
Tests for finite measures, random variables and divergences
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from src.core.errors import UsageError
from src.core.holder import GridFunction
from src.core.measure import (
    DiscreteMeasure,
    FiniteRV,
    hellinger_sq_discrete,
    hellinger_sq_gaussian_location,
    hellinger_sq_gwn,
    hellinger_sq_product_gaussian,
    lr_ratio_norms,
)


weights = st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=8)


def _measure(raw):
    w = np.asarray(raw, dtype=float)
    return DiscreteMeasure.from_probs(w / w.sum())


class TestDiscreteMeasure:
    def test_from_probs_labels_atoms_from_one(self):
        P = DiscreteMeasure.from_probs([0.25, 0.75])
        assert P.atoms == (1, 2)
        assert P.size == 2

    def test_rejects_weights_not_summing_to_one(self):
        with pytest.raises(UsageError):
            DiscreteMeasure.from_probs([0.5, 0.6])

    def test_rejects_negative_weight(self):
        with pytest.raises(UsageError):
            DiscreteMeasure.from_probs([1.5, -0.5])

    def test_rejects_duplicate_atoms(self):
        with pytest.raises(UsageError):
            DiscreteMeasure(atoms=("a", "a"), probs=np.array([0.5, 0.5]))

    def test_probs_are_read_only(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        with pytest.raises(ValueError):
            P.probs[0] = 1.0

    def test_json_form(self):
        P = DiscreteMeasure(atoms=("a", "b", "c"), probs=np.array([0.2, 0.3, 0.5]))
        loaded = DiscreteMeasure.from_json(P.to_json())
        assert loaded.atoms == P.atoms
        assert np.allclose(loaded.probs, P.probs, rtol=0, atol=1e-15)

    def test_from_dict_missing_key(self):
        with pytest.raises(UsageError):
            DiscreteMeasure.from_dict({"atoms": [1, 2]})

    def test_expectation_mad_and_variance(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        X = FiniteRV(np.array([0.0, 2.0]))
        assert P.expect(X) == 1.0
        assert P.mad(X, 1.0) == 1.0
        assert P.mad(X, 0.0) == 1.0
        assert P.variance(X) == 1.0

    def test_index_of_unknown_atom(self):
        with pytest.raises(UsageError):
            DiscreteMeasure.from_probs([1.0]).index_of(7)


class TestFiniteRV:
    def test_indicator(self):
        assert FiniteRV.indicator(1, 3).values.tolist() == [0.0, 1.0, 0.0]

    def test_rejects_non_finite(self):
        with pytest.raises(UsageError):
            FiniteRV(np.array([0.0, math.inf]))

    def test_misaligned_values(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        with pytest.raises(UsageError):
            P.expect(FiniteRV(np.array([1.0, 2.0, 3.0])))


class TestHellinger:
    def test_identical_measures(self):
        P = DiscreteMeasure.from_probs([0.2, 0.8])
        assert hellinger_sq_discrete(P, P) == 0.0

    def test_disjoint_supports(self):
        P = DiscreteMeasure.from_probs([1.0, 0.0])
        Q = DiscreteMeasure.from_probs([0.0, 1.0])
        assert hellinger_sq_discrete(P, Q) == 1.0

    def test_two_point_value(self, literal_counterexample):
        P, Q = literal_counterexample
        expected = 1.0 - math.sqrt(0.7 * 0.6) - math.sqrt(0.3 * 0.4)
        assert hellinger_sq_discrete(P, Q) == pytest.approx(expected, rel=1e-12)

    def test_requires_shared_atoms(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5])
        Q = DiscreteMeasure(atoms=("x", "y"), probs=np.array([0.5, 0.5]))
        with pytest.raises(UsageError):
            hellinger_sq_discrete(P, Q)

    @pytest.mark.property_based
    @given(weights, weights)
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        size = min(len(a), len(b))
        P, Q = _measure(a[:size]), _measure(b[:size])
        h_pq = hellinger_sq_discrete(P, Q)
        assert 0.0 <= h_pq <= 1.0
        assert h_pq == pytest.approx(hellinger_sq_discrete(Q, P), abs=1e-15)

    @pytest.mark.property_based
    @given(weights, weights, weights)
    @settings(max_examples=200, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        size = min(len(a), len(b), len(c))
        P, Q, R = _measure(a[:size]), _measure(b[:size]), _measure(c[:size])
        h_pq = math.sqrt(hellinger_sq_discrete(P, Q))
        h_pr = math.sqrt(hellinger_sq_discrete(P, R))
        h_rq = math.sqrt(hellinger_sq_discrete(R, Q))
        assert h_pq <= h_pr + h_rq + 1e-12

    @pytest.mark.property_based
    @given(weights, weights)
    @settings(max_examples=200, deadline=None)
    def test_zero_only_for_equal_measures(self, a, b):
        size = min(len(a), len(b))
        P, Q = _measure(a[:size]), _measure(b[:size])
        assume(np.max(np.abs(P.probs - Q.probs)) > 1e-9)
        assert hellinger_sq_discrete(P, Q) > 0.0
        assert hellinger_sq_discrete(P, P) == 0.0

    def test_pinned_pair(self):
        P = DiscreteMeasure.from_probs([0.9, 0.1])
        Q = DiscreteMeasure.from_probs([0.5, 0.5])
        expected = 1.0 - (math.sqrt(0.45) + math.sqrt(0.05))
        assert hellinger_sq_discrete(P, Q) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.105573, abs=1e-6)

    def test_gaussian_location_closed_form(self):
        assert hellinger_sq_gaussian_location(0.0) == 0.0
        assert hellinger_sq_gaussian_location(2.0) == pytest.approx(1.0 - math.exp(-0.5), rel=1e-14)

    def test_product_gaussian_reduces_to_location(self):
        sigma = 0.5
        h = hellinger_sq_product_gaussian([1.0], [0.0], sigma * sigma)
        assert h == pytest.approx(hellinger_sq_gaussian_location(1.0 / sigma), rel=1e-14)

    def test_product_gaussian_shape_mismatch(self):
        with pytest.raises(UsageError):
            hellinger_sq_product_gaussian([0.0, 1.0], [0.0], 1.0)

    def test_gwn_uses_squared_l2_distance(self):
        f = GridFunction.constant(0.5, 8)
        g = GridFunction.zero(8)
        n = 16.0
        assert hellinger_sq_gwn(f, g, n) == pytest.approx(1.0 - math.exp(-n * 0.25 / 8.0), rel=1e-14)


class TestLikelihoodRatioNorms:
    def test_two_point(self, literal_counterexample):
        report = lr_ratio_norms(*literal_counterexample)
        assert report.lr_min_norm == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert report.lr_max_norm == pytest.approx(0.25, rel=1e-12)

    def test_pinned_pair(self):
        P = DiscreteMeasure.from_probs([0.9, 0.1])
        Q = DiscreteMeasure.from_probs([0.5, 0.5])
        report = lr_ratio_norms(P, Q)
        assert report.lr_min_norm == pytest.approx(4.0, rel=1e-12)
        assert report.lr_max_norm == pytest.approx(0.8, rel=1e-12)

    def test_point_mass_against_uniform(self):
        report = lr_ratio_norms(DiscreteMeasure.from_probs([1.0, 0.0]), DiscreteMeasure.from_probs([0.5, 0.5]))
        assert report.lr_min_norm == math.inf
        assert report.lr_max_norm == 1.0

    def test_disjoint_supports(self):
        P = DiscreteMeasure.from_probs([1.0, 0.0])
        Q = DiscreteMeasure.from_probs([0.0, 1.0])
        report = lr_ratio_norms(P, Q)
        assert report.lr_min_norm == math.inf
        assert report.lr_max_norm == 1.0

    def test_shared_zero_atom_is_ignored(self):
        P = DiscreteMeasure.from_probs([0.5, 0.5, 0.0])
        report = lr_ratio_norms(P, P)
        assert report.lr_min_norm == 0.0
        assert report.lr_max_norm == 0.0
