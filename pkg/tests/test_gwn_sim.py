"""
Tests for the discretized white-noise simulator and estimator risk
"""

import logging
import math

import numpy as np
import pytest

from src.core.errors import UnsupportedError, UsageError
from src.core.holder import GridFunction, build_family_member
from src.gwn.frontier import build_family
from src.gwn.simulation import (
    GAUSSIAN_MAD_FACTOR,
    EstimatorSpec,
    Observation,
    SimConfig,
    exact_linear_risk,
    linear_estimate,
    mc_risk,
    mc_risk_many,
    replicate_rng,
    simulate,
    worst_case_over_family,
)
from src.runner import gaussian_identity_check


def _wave(m):
    return GridFunction.from_callable(lambda x: np.sin(2.0 * np.pi * x), m)


class TestSimulation:
    def test_noise_variance(self):
        assert SimConfig(n=64.0, m=16).noise_variance == 0.25

    def test_config_validation(self):
        with pytest.raises(UsageError):
            SimConfig(n=0.0)
        with pytest.raises(UsageError):
            SimConfig(n=1.0, m=1)

    def test_replicates_are_reproducible(self):
        cfg = SimConfig(n=64.0, m=16, replicates=5, seed=3)
        f = _wave(16)
        first = [obs.bin_means for obs in simulate(f, cfg)]
        second = [obs.bin_means for obs in simulate(f, cfg)]
        assert all(np.array_equal(a, b) for a, b in zip(first, second))
        expected = f.bin_averages(16) + 0.5 * replicate_rng(3, 2).standard_normal(16)
        assert np.array_equal(first[2], expected)


class TestEstimators:
    def test_kernel_weights_sum_to_one(self, bump):
        est = EstimatorSpec.linear_kernel(0.5, 0.1, bump, 128)
        assert math.fsum(est.weights.tolist()) == pytest.approx(1.0, abs=1e-14)
        assert est.is_linear

    def test_bandwidth_below_bin_width(self, bump):
        with pytest.raises(UsageError):
            EstimatorSpec.linear_kernel(0.5, 1.0 / 256.0, bump, 128)

    def test_linear_estimate_of_constant(self, bump):
        est = EstimatorSpec.linear_kernel(0.5, 0.2, bump, 32)
        assert linear_estimate(Observation(np.full(32, 3.0)), est) == pytest.approx(3.0, abs=1e-14)
        with pytest.raises(UsageError):
            linear_estimate(Observation(np.zeros(16)), est)


class TestRisk:
    def test_exact_risk_at_zero_function(self, bump):
        cfg = SimConfig(n=64.0, m=16)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        risk = exact_linear_risk(est, GridFunction.zero(cfg.m), cfg)
        sd = math.sqrt(cfg.noise_variance * float(est.weights @ est.weights))
        assert risk.bias == 0.0
        assert risk.mad_mean == pytest.approx(GAUSSIAN_MAD_FACTOR * sd, rel=1e-14)
        assert risk.abs_risk == pytest.approx(risk.mad_mean, rel=1e-10)
        assert risk.exact

    def test_exact_risk_requires_linear(self):
        cfg = SimConfig(n=64.0, m=16)
        est = EstimatorSpec.custom(lambda obs: float(np.median(obs.bin_means)), x0=0.5)
        with pytest.raises(UnsupportedError):
            exact_linear_risk(est, GridFunction.zero(cfg.m), cfg)

    def test_monte_carlo_agrees_with_exact(self, bump):
        cfg = SimConfig(n=64.0, m=16, replicates=4000, seed=1)
        f = _wave(cfg.m)
        est = EstimatorSpec.linear_kernel(0.3, 0.25, bump, cfg.m)
        exact = exact_linear_risk(est, f, cfg)
        mc = mc_risk(est, f, cfg)
        assert abs(mc.bias - exact.bias) <= 4.0 * mc.bias_se
        assert abs(mc.mad_mean - exact.mad_mean) <= 4.0 * mc.mad_mean_se
        assert abs(mc.variance - exact.variance) <= 4.0 * mc.variance_se

    def test_median_centred_monte_carlo_agrees_with_exact(self, bump, frontier_spec):
        cfg = SimConfig(n=64.0, m=16, replicates=4000, seed=1)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        for f in [_wave(cfg.m), *build_family(frontier_spec, 4096.0, cfg.m).values()]:
            exact = exact_linear_risk(est, f, cfg)
            mc = mc_risk(est, f, cfg)
            assert exact.mad_median == exact.mad_mean
            assert abs(mc.mad_median - exact.mad_median) <= 4.0 * mc.mad_median_se

    def test_median_centred_mad_below_mean_centred(self, bump):
        cfg = SimConfig(n=64.0, m=16, replicates=1000, seed=6)
        estimators = [
            EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m),
            EstimatorSpec.custom(lambda obs: float(np.median(obs.bin_means)), x0=0.5, name="median"),
        ]
        for f in (GridFunction.zero(cfg.m), _wave(cfg.m)):
            for risk in mc_risk_many(estimators, f, cfg):
                # the sample median minimizes the mean absolute deviation
                assert risk.mad_median <= risk.mad_mean + 1e-12
                assert risk.mad_median <= risk.mad_mean + 2.0 * risk.mad_mean_se

    def test_monte_carlo_independent_of_threads(self, bump):
        cfg = SimConfig(n=64.0, m=16, replicates=1200, seed=5)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        serial = mc_risk(est, _wave(cfg.m), cfg, threads=1)
        parallel = mc_risk(est, _wave(cfg.m), cfg, threads=4)
        assert serial.to_dict() == parallel.to_dict()

    def test_few_replicates_give_nan_errors(self, bump, caplog):
        cfg = SimConfig(n=64.0, m=16, replicates=50)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        with caplog.at_level(logging.WARNING):
            risk = mc_risk(est, GridFunction.zero(cfg.m), cfg)
        assert math.isnan(risk.bias_se) and math.isnan(risk.mad_median_se)
        assert "standard errors" in caplog.text

    def test_custom_estimator_by_monte_carlo(self):
        cfg = SimConfig(n=64.0, m=16, replicates=200, seed=2)
        est = EstimatorSpec.custom(lambda obs: float(np.median(obs.bin_means)), x0=0.5, name="median")
        risk = mc_risk(est, GridFunction.zero(cfg.m), cfg)
        assert not risk.exact
        assert abs(risk.bias) <= 4.0 * risk.bias_se

    def test_shared_replicates(self, bump):
        cfg = SimConfig(n=64.0, m=16, replicates=300, seed=4)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        together = mc_risk_many([est, est], _wave(cfg.m), cfg)
        assert together[0].to_dict() == together[1].to_dict()
        assert together[0].to_dict() == mc_risk(est, _wave(cfg.m), cfg).to_dict()


class TestFamilyRisk:
    def test_sequence_family_is_keyed_by_position(self, bump):
        cfg = SimConfig(n=64.0, m=16)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        result = worst_case_over_family(est, [GridFunction.zero(16), GridFunction.zero(16)], cfg)
        assert set(result.members) == {"f0", "f1"}
        assert result.sup_bias_member == "f0"
        assert result.sup_mad_mean_member == "f0"

    def test_unknown_method(self, bump):
        cfg = SimConfig(n=64.0, m=16)
        est = EstimatorSpec.linear_kernel(0.5, 0.25, bump, cfg.m)
        with pytest.raises(UsageError):
            worst_case_over_family(est, [GridFunction.zero(16)], cfg, method="bootstrap")
        with pytest.raises(UsageError):
            worst_case_over_family(est, [], cfg)

    def test_symmetric_kernel_peaks_at_outer_members(self, frontier_spec):
        cfg = SimConfig(n=4096.0, m=256)
        est = EstimatorSpec.linear_kernel(0.5, frontier_spec.bandwidth(cfg.n, 1.0), frontier_spec.kernel, cfg.m)
        result = worst_case_over_family(est, build_family(frontier_spec, cfg.n, cfg.m), cfg)
        plus, zero, minus = (result.members[key].bias for key in ("f_+1", "f_0", "f_-1"))
        assert zero == 0.0
        assert plus == pytest.approx(-minus, rel=1e-12)
        assert result.sup_bias_member in {"f_-1", "f_+1"}
        assert result.sup_bias == pytest.approx(abs(plus), rel=1e-12)
        assert result.sup_bias > 0.0

    @pytest.mark.parametrize("method", ["exact", "mc"])
    def test_finer_theta_grid_never_lowers_sups(self, frontier_spec, method):
        cfg = SimConfig(n=4096.0, m=64, replicates=300, seed=2)
        est = EstimatorSpec.linear_kernel(0.5, frontier_spec.bandwidth(cfg.n, 2.0), frontier_spec.kernel, cfg.m)
        family = build_family(frontier_spec, cfg.n, cfg.m)
        finer = dict(family)
        for theta in (-0.5, 0.5):
            finer[f"f_{theta:+g}"] = build_family_member(frontier_spec.family_spec(cfg.n, theta), frontier_spec.kernel, cfg.m)
        coarse = worst_case_over_family(est, family, cfg, method=method)
        fine = worst_case_over_family(est, finer, cfg, method=method)
        assert len(fine.members) == 5
        assert fine.sup_bias >= coarse.sup_bias
        assert fine.sup_mad_mean >= coarse.sup_mad_mean
        assert fine.sup_mad_median >= coarse.sup_mad_median
        assert fine.sup_median_bias >= coarse.sup_median_bias
        assert fine.sup_abs_risk >= coarse.sup_abs_risk

    @pytest.mark.slow
    def test_gaussian_mad_identity_over_bandwidths(self, frontier_spec):
        cfg = SimConfig(n=4096.0, m=256, replicates=10_000, seed=0)
        family = build_family(frontier_spec, cfg.n, cfg.m)
        estimators = [
            EstimatorSpec.linear_kernel(frontier_spec.x0, frontier_spec.bandwidth(cfg.n, kappa), frontier_spec.kernel, cfg.m)
            for kappa in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
            if frontier_spec.bandwidth(cfg.n, kappa) >= 1.0 / cfg.m
        ]
        for f in family.values():
            for risk in mc_risk_many(estimators, f, cfg):
                check = gaussian_identity_check(risk.mad_mean, risk.mad_mean_se, risk.variance, risk.variance_se)
                assert check["holds"], check
