"""
Bias/MAD frontier
Constants of the white-noise lower bound, the frontier
(bias budget (C/n)^(β/(2β+1)), MAD floor c·n^(-β/(2β+1))), and the experiment
that measures kernel estimators against it over the three-member family
{f_-1, f_0, f_+1}. All sup values are family-sup values.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.core.bounds import InequalityReport
from src.core.errors import PreconditionError, UsageError
from src.core.holder import FamilySpec, GridFunction, KernelSpec, build_family_member
from src.core.measure import hellinger_sq_gwn, hellinger_sq_product_gaussian
from src.gwn.simulation import (
    EstimatorSpec,
    FamilyRisk,
    RiskEstimate,
    SimConfig,
    worst_case_over_family,
)

logger = logging.getLogger(__name__)

# Strict inequality of the bias hypothesis, made observable in floating point
COMPLIANCE_FACTOR = 1.0 - 1e-9
MC_SE_BAND = 4.0
RATE_TOLERANCE = 0.05
MEMBER_KEYS = {-1.0: "f_-1", 0.0: "f_0", 1.0: "f_+1"}


@dataclass(frozen=True)
class FrontierSpec:
    """Smoothness, radius, bias constant, kernel and estimation point"""

    beta: float
    R: float
    C: float
    kernel: KernelSpec
    x0: float = 0.5

    def __post_init__(self):
        for name in ("beta", "R", "C"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.x0 < 1.0:
            raise UsageError(f"x0 must lie strictly inside (0, 1), got {self.x0}")
        if self.kernel.beta != self.beta:
            raise UsageError(f"kernel constants were computed for beta={self.kernel.beta}, not {self.beta}")

    @property
    def V(self) -> float:
        return self.R / self.kernel.holder_norm

    @property
    def rate_exponent(self) -> float:
        """β/(2β+1)"""
        return self.beta / (2.0 * self.beta + 1.0)

    def family_spec(self, n: float, theta: float) -> FamilySpec:
        return FamilySpec(beta=self.beta, R=self.R, C=self.C, V=self.V, n=n, theta=theta, x0=self.x0)

    def bandwidth(self, n: float, multiplier: float) -> float:
        """h = κ·n^(-1/(2β+1))"""
        return multiplier * n ** (-1.0 / (2.0 * self.beta + 1.0))

    def to_dict(self) -> Dict[str, Any]:
        return {"beta": self.beta, "R": self.R, "C": self.C, "x0": self.x0, "V": self.V, "kernel": self.kernel.to_dict()}


@dataclass(frozen=True)
class Theorem1Constants:
    c: float
    N: float

    def to_dict(self) -> Dict[str, float]:
        return {"c": self.c, "N": self.N}


def theorem1_constants(spec: FrontierSpec) -> Theorem1Constants:
    """
    Explicit constants of the MAD lower bound

    c = (1/5)·exp(-(2/V)^(1/β)·C·‖K‖₂²)·C^(β/(2β+1)), so that
    sup MAD >= c·n^(-β/(2β+1)); N is the smallest n with
    r_n <= min(x0, 1 - x0), which keeps the bump inside [0, 1].

    Args:
        spec: Frontier parameters

    Returns:
        Theorem1Constants(c, N)
    """
    beta, C, V = spec.beta, spec.C, spec.V
    c = 0.2 * math.exp(-((2.0 / V) ** (1.0 / beta)) * C * spec.kernel.l2_norm_sq) * C ** spec.rate_exponent
    half_width = min(spec.x0, 1.0 - spec.x0)
    N = C * (2.0 / V) ** ((2.0 * beta + 1.0) / beta) * half_width ** -(2.0 * beta + 1.0)
    return Theorem1Constants(c=c, N=N)


@dataclass(frozen=True)
class FrontierPoint:
    n: float
    psi_n: float
    bias_budget: float
    mad_lower: float
    r_n: float
    valid: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "psi_n": self.psi_n,
            "bias_budget": self.bias_budget,
            "mad_lower": self.mad_lower,
            "r_n": self.r_n,
            "valid": self.valid,
        }


def mad_frontier(spec: FrontierSpec, n_values: Sequence[float]) -> List[FrontierPoint]:
    """Frontier points for each n; points with n < N are reported with valid=False"""
    constants = theorem1_constants(spec)
    points = []
    for n in n_values:
        if n <= 0:
            raise UsageError(f"n must be positive, got {n}")
        psi = n ** -spec.rate_exponent
        points.append(
            FrontierPoint(
                n=float(n),
                psi_n=psi,
                bias_budget=(spec.C / n) ** spec.rate_exponent,
                mad_lower=constants.c * psi,
                r_n=spec.family_spec(n, 1.0).r_n,
                valid=n >= constants.N,
            )
        )
    return points


def build_family(spec: FrontierSpec, n: float, m: int) -> Dict[str, GridFunction]:
    """Worst-case family {f_-1, f_0, f_+1} on an m-point grid"""
    return {key: build_family_member(spec.family_spec(n, theta), spec.kernel, m) for theta, key in MEMBER_KEYS.items()}


def adversarial_sign(mean_at_zero: float) -> int:
    """The member used for the lower bound: f_+1 when E_0 f̂(x0) < 0, else f_-1"""
    return 1 if mean_at_zero < 0 else -1


def check_gwn_lemma2(
    member: GridFunction,
    zero: GridFunction,
    cfg: SimConfig,
    risk_member: RiskEstimate,
    risk_zero: RiskEstimate,
    centering: str = "mean",
    name: str = "gwn_lemma2",
) -> InequalityReport:
    """
    The MAD inequality for P = P_member, Q = P_0 and X = f̂(x0)

    lhs = (1/5)·exp(-(n/4)·‖f̄‖²)·|u - v| with the exact Hellinger distance of
    the binned experiment that is simulated; the continuum value is kept in
    the context.

    Args:
        member: f_±1
        zero: f_0
        cfg: Simulation configuration (n, m)
        risk_member: Estimator risk at f_±1
        risk_zero: Estimator risk at f_0
        centering: "mean" or "median"
        name: Report name

    Returns:
        InequalityReport
    """
    if centering == "mean":
        u, v = risk_member.mean, risk_zero.mean
        rhs = max(risk_member.mad_mean, risk_zero.mad_mean)
    elif centering == "median":
        u, v = risk_member.median, risk_zero.median
        rhs = max(risk_member.mad_median, risk_zero.mad_median)
    else:
        raise UsageError(f"unknown centering {centering!r}")
    h_sq = hellinger_sq_product_gaussian(member.bin_averages(cfg.m), zero.bin_averages(cfg.m), cfg.noise_variance)
    lhs = (1.0 - h_sq) ** 2 * abs(u - v) / 5.0
    context = {
        "hellinger_sq_binned": h_sq,
        "hellinger_sq_continuum": hellinger_sq_gwn(member, zero, cfg.n),
        "u": u,
        "v": v,
        "centering": centering,
    }
    return InequalityReport.evaluate(name, lhs, rhs, context)


@dataclass(frozen=True)
class ExperimentRow:
    """One (n, bandwidth) cell of the trade-off experiment"""

    n: float
    multiplier: float
    h: float
    family: FamilyRisk
    compliant: bool
    compliant_median: bool
    frontier_holds: bool
    frontier_holds_median: bool
    adversarial_sign: int
    adversarial_gap: float
    adversarial_gap_holds: bool
    lemma2_reports: List[InequalityReport] = field(default_factory=list)

    @property
    def sup_bias(self) -> float:
        return self.family.sup_bias

    @property
    def sup_mad_mean(self) -> float:
        return self.family.sup_mad_mean

    @property
    def sup_mad_median(self) -> float:
        return self.family.sup_mad_median

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "multiplier": self.multiplier,
            "h": self.h,
            "sup_bias": self.family.sup_bias,
            "sup_median_bias": self.family.sup_median_bias,
            "sup_mad_mean": self.family.sup_mad_mean,
            "sup_mad_median": self.family.sup_mad_median,
            "sup_abs_risk": self.family.sup_abs_risk,
            "compliant": self.compliant,
            "compliant_median": self.compliant_median,
            "frontier_holds": self.frontier_holds,
            "frontier_holds_median": self.frontier_holds_median,
            "adversarial_sign": self.adversarial_sign,
            "adversarial_gap": self.adversarial_gap,
            "adversarial_gap_holds": self.adversarial_gap_holds,
            "lemma2": [r.to_dict() for r in self.lemma2_reports],
            "family": self.family.to_dict(),
        }


@dataclass(frozen=True)
class ExperimentResult:
    point: FrontierPoint
    constants: Theorem1Constants
    rows: List[ExperimentRow]
    violations: List[Dict[str, Any]]
    skipped_multipliers: List[float]

    @property
    def compliant_rows(self) -> List[ExperimentRow]:
        return [r for r in self.rows if r.compliant]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": self.point.to_dict(),
            "constants": self.constants.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "violations": list(self.violations),
            "skipped_multipliers": list(self.skipped_multipliers),
        }


def _se_band(risk: FamilyRisk, attr: str, member: str) -> float:
    r = risk.members[member]
    se = getattr(r, f"{attr}_se")
    return 0.0 if r.exact or math.isnan(se) else MC_SE_BAND * se


def run_tradeoff_experiment(
    spec: FrontierSpec,
    cfg: SimConfig,
    bandwidth_multipliers: Sequence[float],
    method: str = "exact",
    threads: int = 1,
) -> ExperimentResult:
    """
    Measure kernel estimators against the frontier at one n

    For each bandwidth h = κ·n^(-1/(2β+1)) the family-sup bias and both
    family-sup MADs are measured over {f_-1, f_0, f_+1}. Estimators with
    sup-bias below the budget are compliant and must have sup-MAD above
    c·ψ_n; the MAD inequality instantiated at f_±1 versus f_0 is checked for
    every estimator and both signs.

    Args:
        spec: Frontier parameters
        cfg: Simulation configuration; cfg.n is the n of this experiment
        bandwidth_multipliers: Grid of κ values
        method: "exact" or "mc"
        threads: Worker cap for the Monte Carlo path

    Returns:
        ExperimentResult with per-bandwidth rows and any violations
    """
    if not bandwidth_multipliers:
        raise UsageError("bandwidth grid must not be empty")
    point = mad_frontier(spec, [cfg.n])[0]
    constants = theorem1_constants(spec)
    if not point.valid:
        raise PreconditionError(
            f"n = {cfg.n:g} is below N = {constants.N:.6g}; the family does not fit inside [0, 1]",
            detail={"n": cfg.n, "N": constants.N},
        )
    family = build_family(spec, cfg.n, cfg.m)
    threshold = point.bias_budget * COMPLIANCE_FACTOR

    rows, violations, skipped = [], [], []
    for kappa in bandwidth_multipliers:
        h = spec.bandwidth(cfg.n, kappa)
        if h < 1.0 / cfg.m:
            logger.warning("skipping multiplier %g at n=%g: bandwidth %.3g is below the bin width", kappa, cfg.n, h)
            skipped.append(kappa)
            continue
        est = EstimatorSpec.linear_kernel(spec.x0, h, spec.kernel, cfg.m, name=f"kernel_k={kappa:g}")
        risk = worst_case_over_family(est, family, cfg, method=method, threads=threads)

        compliant = risk.sup_bias <= threshold
        compliant_median = risk.sup_median_bias <= threshold
        mean_band = _se_band(risk, "mad_mean", risk.sup_mad_mean_member)
        median_band = _se_band(risk, "mad_median", risk.sup_mad_median_member)
        frontier_holds = (not compliant) or risk.sup_mad_mean + mean_band >= point.mad_lower
        frontier_holds_median = (not compliant_median) or risk.sup_mad_median + median_band >= point.mad_lower

        zero = risk.members["f_0"]
        reports = []
        for theta in (1.0, -1.0):
            key = MEMBER_KEYS[theta]
            for centering in ("mean", "median"):
                reports.append(
                    check_gwn_lemma2(
                        family[key], family["f_0"], cfg, risk.members[key], zero,
                        centering=centering, name=f"gwn_lemma2[{key},{centering}]",
                    )
                )

        sign = adversarial_sign(zero.mean)
        gap = abs(risk.members[MEMBER_KEYS[float(sign)]].mean - zero.mean)
        gap_holds = (not compliant) or gap >= point.bias_budget * COMPLIANCE_FACTOR

        row = ExperimentRow(
            n=cfg.n,
            multiplier=float(kappa),
            h=h,
            family=risk,
            compliant=compliant,
            compliant_median=compliant_median,
            frontier_holds=frontier_holds,
            frontier_holds_median=frontier_holds_median,
            adversarial_sign=sign,
            adversarial_gap=gap,
            adversarial_gap_holds=gap_holds,
            lemma2_reports=reports,
        )
        rows.append(row)

        where = {"n": cfg.n, "multiplier": float(kappa), "h": h}
        if not frontier_holds:
            violations.append(dict(where, check="frontier_mean", sup_mad=risk.sup_mad_mean, mad_lower=point.mad_lower))
        if not frontier_holds_median:
            violations.append(dict(where, check="frontier_median", sup_mad=risk.sup_mad_median, mad_lower=point.mad_lower))
        if not gap_holds:
            violations.append(dict(where, check="adversarial_gap", gap=gap, bias_budget=point.bias_budget))
        for report in reports:
            if not report.holds and method == "exact":
                violations.append(dict(where, check=report.name, slack=report.slack))

    if not any(r.compliant for r in rows):
        logger.warning("no bias-compliant estimator at n=%g: the lower bound is vacuous for this grid", cfg.n)
    return ExperimentResult(point=point, constants=constants, rows=rows, violations=violations, skipped_multipliers=skipped)


# ---------------------------------------------------------------------------
# Sweep over n


def fit_rate(n_values: Sequence[float], values: Sequence[float]) -> float:
    """Slope of log(values) against log(n)"""
    if len(n_values) < 2:
        raise UsageError("a rate fit needs at least two points")
    slope, _ = np.polyfit(np.log(np.asarray(n_values, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)
    return float(slope)


@dataclass(frozen=True)
class SweepResult:
    constants: Theorem1Constants
    points: List[FrontierPoint]
    experiments: List[ExperimentResult]
    best_compliant: Dict[str, List[Optional[float]]]
    rate_check: Dict[str, Any]
    violations: List[Dict[str, Any]]

    @property
    def rows(self) -> List[ExperimentRow]:
        return [row for exp in self.experiments for row in exp.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c": self.constants.c,
            "N": self.constants.N,
            "frontier": [p.to_dict() for p in self.points],
            "best_compliant": self.best_compliant,
            "rate_check": self.rate_check,
            "violations": list(self.violations),
        }


def run_frontier_sweep(
    spec: FrontierSpec,
    cfg: SimConfig,
    bandwidth_multipliers: Sequence[float],
    n_values: Sequence[float],
    method: str = "exact",
    threads: int = 1,
) -> SweepResult:
    """
    Trade-off experiment across n, with the rate fit of the best compliant estimator

    n values below N are reported on the frontier but not run. Cells run in
    parallel per n and are merged in n order.

    Args:
        spec: Frontier parameters
        cfg: Template configuration (its n is replaced per cell)
        bandwidth_multipliers: Grid of κ values
        n_values: The n-sweep
        method: "exact" or "mc"
        threads: Worker cap

    Returns:
        SweepResult
    """
    constants = theorem1_constants(spec)
    points = mad_frontier(spec, n_values)
    valid = [p for p in points if p.valid]
    for p in points:
        if not p.valid:
            logger.info("n=%g is below N=%.6g: reported, not run", p.n, constants.N)

    def run_cell(point: FrontierPoint) -> ExperimentResult:
        return run_tradeoff_experiment(spec, replace(cfg, n=point.n), bandwidth_multipliers, method=method)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        experiments = list(pool.map(run_cell, valid))

    best_mean: List[Optional[float]] = []
    best_median: List[Optional[float]] = []
    for exp in experiments:
        compliant = exp.compliant_rows
        best_mean.append(min((r.sup_mad_mean for r in compliant), default=None))
        compliant_median = [r for r in exp.rows if r.compliant_median]
        best_median.append(min((r.sup_mad_median for r in compliant_median), default=None))

    expected = -spec.rate_exponent
    rate_check: Dict[str, Any] = {"expected_slope": expected, "tolerance": RATE_TOLERANCE}
    for label, series in (("mean", best_mean), ("median", best_median)):
        pairs = [(exp.point.n, v) for exp, v in zip(experiments, series) if v is not None]
        if len(pairs) >= 2:
            slope = fit_rate([p[0] for p in pairs], [p[1] for p in pairs])
            rate_check[f"slope_{label}"] = slope
            rate_check[f"within_tolerance_{label}"] = abs(slope - expected) <= RATE_TOLERANCE
        else:
            rate_check[f"slope_{label}"] = None
            rate_check[f"within_tolerance_{label}"] = None
    if rate_check["within_tolerance_mean"] is False:
        logger.warning("rate slope %.4f is outside %.4f ± %.2f", rate_check["slope_mean"], expected, RATE_TOLERANCE)

    violations = [v for exp in experiments for v in exp.violations]
    return SweepResult(
        constants=constants,
        points=points,
        experiments=experiments,
        best_compliant={
            "n": [exp.point.n for exp in experiments],
            "sup_mad_mean": best_mean,
            "sup_mad_median": best_median,
        },
        rate_check=rate_check,
        violations=violations,
    )


# ---------------------------------------------------------------------------
# Comparison with the minimax argument


@dataclass(frozen=True)
class MinimaxRow:
    n: float
    multiplier: float
    sup_abs_risk: float
    sup_bias: float
    sup_mad: float
    risk_minus_bias: float
    bias_minus_risk: float
    displays_hold: bool
    minimax_lower: float
    theorem1_lower: Optional[float]
    theorem1_binds: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "multiplier": self.multiplier,
            "sup_abs_risk": self.sup_abs_risk,
            "sup_bias": self.sup_bias,
            "sup_mad": self.sup_mad,
            "risk_minus_bias": self.risk_minus_bias,
            "bias_minus_risk": self.bias_minus_risk,
            "displays_hold": self.displays_hold,
            "minimax_lower": self.minimax_lower,
            "theorem1_lower": self.theorem1_lower,
            "theorem1_binds": self.theorem1_binds,
        }


def minimax_comparison(spec: FrontierSpec, estimator_results: Sequence[ExperimentResult]) -> List[MinimaxRow]:
    """
    The two triangle-inequality lower bounds on sup-MAD next to the frontier

    sup MAD >= sup risk - sup |bias| and sup MAD >= sup |bias| - sup risk
    (family-sup proxies). The minimax route is uninformative when both are
    <= 0; the frontier still binds for compliant estimators.

    Args:
        spec: Frontier parameters (unused; matches the experiment API)
        estimator_results: Experiments to compare

    Returns:
        One MinimaxRow per (n, bandwidth)
    """
    rows = []
    for exp in estimator_results:
        for r in exp.rows:
            risk_minus_bias = r.family.sup_abs_risk - r.family.sup_bias
            bias_minus_risk = r.family.sup_bias - r.family.sup_abs_risk
            sup_mad = r.family.sup_mad_mean
            tol = 1e-12 * max(1.0, abs(sup_mad), r.family.sup_abs_risk)
            minimax_lower = max(risk_minus_bias, bias_minus_risk, 0.0)
            theorem1_lower = exp.point.mad_lower if r.compliant else None
            rows.append(
                MinimaxRow(
                    n=r.n,
                    multiplier=r.multiplier,
                    sup_abs_risk=r.family.sup_abs_risk,
                    sup_bias=r.family.sup_bias,
                    sup_mad=sup_mad,
                    risk_minus_bias=risk_minus_bias,
                    bias_minus_risk=bias_minus_risk,
                    displays_hold=sup_mad >= risk_minus_bias - tol and sup_mad >= bias_minus_risk - tol,
                    minimax_lower=minimax_lower,
                    theorem1_lower=theorem1_lower,
                    theorem1_binds=theorem1_lower is not None and theorem1_lower > minimax_lower,
                )
            )
    return rows


def kernel_constants(spec: FrontierSpec) -> Dict[str, Any]:
    """Kernel and bound constants as printed by the CLI"""
    constants = theorem1_constants(spec)
    return {
        "beta": spec.beta,
        "R": spec.R,
        "C": spec.C,
        "x0": spec.x0,
        "kernel": spec.kernel.name,
        "l2_norm_sq": spec.kernel.l2_norm_sq,
        "holder_norm": spec.kernel.holder_norm,
        "V": spec.V,
        "c": constants.c,
        "N": constants.N,
    }
