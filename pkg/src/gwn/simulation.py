"""
Gaussian white noise simulation
Bin-integral discretization of dY = f dx + n^(-1/2) dW: bin j reports
Ȳ_j ~ N(f̄_j, m/n) independently. Pointwise estimators are evaluated either
exactly (linear estimators are Gaussian) or by Monte Carlo with batch-means
standard errors.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

from src.core.errors import UnsupportedError, UsageError
from src.core.holder import GridFunction, KernelSpec, grid_points

logger = logging.getLogger(__name__)

SE_BATCHES = 20
MIN_REPLICATES_FOR_SE = 100
REPLICATE_BLOCK = 500
GAUSSIAN_MAD_FACTOR = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class SimConfig:
    """Noise level, bin count, replicate count and base seed of a simulation"""

    n: float
    m: int = 1024
    replicates: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n <= 0:
            raise UsageError(f"n must be positive, got {self.n}")
        if self.m < 2:
            raise UsageError(f"m must be at least 2, got {self.m}")
        if self.replicates < 1:
            raise UsageError(f"replicates must be at least 1, got {self.replicates}")

    @property
    def noise_variance(self) -> float:
        return self.m / self.n

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "m": self.m, "replicates": self.replicates, "seed": self.seed}


@dataclass(frozen=True)
class Observation:
    bin_means: np.ndarray


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """RNG stream of one replicate, derived only from (seed, replicate)"""
    return np.random.default_rng([seed, replicate])


def _signal(f: GridFunction, cfg: SimConfig) -> np.ndarray:
    return f.bin_averages(cfg.m)


def _replicate_block(signal: np.ndarray, cfg: SimConfig, start: int, stop: int) -> np.ndarray:
    sd = math.sqrt(cfg.noise_variance)
    block = np.empty((stop - start, cfg.m))
    for row, r in enumerate(range(start, stop)):
        block[row] = signal + sd * replicate_rng(cfg.seed, r).standard_normal(cfg.m)
    return block


def simulate(f: GridFunction, cfg: SimConfig) -> Iterator[Observation]:
    """
    Stream of replicate observations

    Args:
        f: Regression function (bin-averaged onto cfg.m bins)
        cfg: Simulation configuration

    Yields:
        One Observation per replicate, in replicate order
    """
    signal = _signal(f, cfg)
    for r in range(cfg.replicates):
        yield Observation(_replicate_block(signal, cfg, r, r + 1)[0])


# ---------------------------------------------------------------------------
# Estimators


@dataclass(frozen=True)
class EstimatorSpec:
    """
    Pointwise estimator of f(x0)

    Linear kernel estimators carry normalized weights w_j ∝ K((x_j - x0)/h);
    custom estimators carry an arbitrary procedure Observation -> float.
    """

    kind: str
    x0: float
    h: Optional[float] = None
    kernel: Optional[KernelSpec] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    procedure: Optional[Callable[[Observation], float]] = field(default=None, repr=False, compare=False)
    name: str = ""

    @classmethod
    def linear_kernel(cls, x0: float, h: float, kernel: KernelSpec, m: int, name: str = "") -> "EstimatorSpec":
        """
        Kernel-weighted average of the bin means around x0

        Args:
            x0: Estimation point
            h: Bandwidth, at least one bin width 1/m
            kernel: Weighting kernel
            m: Bin count of the observations
            name: Identifier used in reports

        Returns:
            Linear EstimatorSpec with weights summing to one
        """
        if h < 1.0 / m:
            raise UsageError(f"bandwidth {h} is below the bin width 1/{m}")
        raw = np.asarray(kernel((grid_points(m) - x0) / h), dtype=float)
        total = math.fsum(raw.tolist())
        if total <= 0.0:
            raise UsageError(f"kernel support around x0={x0} with h={h} misses every bin")
        weights = raw / total
        weights.setflags(write=False)
        return cls(kind="linear-kernel", x0=x0, h=h, kernel=kernel, weights=weights, name=name or f"kernel_h={h:.6g}")

    @classmethod
    def custom(cls, procedure: Callable[[Observation], float], x0: float, name: str = "custom") -> "EstimatorSpec":
        return cls(kind="custom", x0=x0, procedure=procedure, name=name)

    @property
    def is_linear(self) -> bool:
        return self.weights is not None

    def __call__(self, obs: Observation) -> float:
        if self.is_linear:
            return linear_estimate(obs, self)
        return float(self.procedure(obs))

    def estimate_block(self, block: np.ndarray) -> np.ndarray:
        """Estimates for a (replicates × m) block of bin means"""
        if self.is_linear:
            if block.shape[1] != len(self.weights):
                raise UsageError(f"estimator has {len(self.weights)} weights but observations have {block.shape[1]} bins")
            return block @ self.weights
        return np.array([float(self.procedure(Observation(row))) for row in block])


def linear_estimate(obs: Observation, est: EstimatorSpec) -> float:
    """Σ_j w_j Ȳ_j"""
    if not est.is_linear:
        raise UsageError(f"estimator {est.name!r} is not linear")
    if len(obs.bin_means) != len(est.weights):
        raise UsageError(f"estimator has {len(est.weights)} weights but the observation has {len(obs.bin_means)} bins")
    return math.fsum((est.weights * obs.bin_means).tolist())


# ---------------------------------------------------------------------------
# Risk


@dataclass(frozen=True)
class RiskEstimate:
    """Bias, MADs and variance of an estimator at one regression function"""

    bias: float
    mad_mean: float
    mad_median: float
    variance: float
    mean: float
    median: float
    abs_risk: float
    truth: float
    bias_se: float = 0.0
    mad_mean_se: float = 0.0
    mad_median_se: float = 0.0
    variance_se: float = 0.0
    abs_risk_se: float = 0.0
    exact: bool = False

    @property
    def median_bias(self) -> float:
        return self.median - self.truth

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bias": self.bias,
            "bias_se": self.bias_se,
            "mad_mean": self.mad_mean,
            "mad_mean_se": self.mad_mean_se,
            "mad_median": self.mad_median,
            "mad_median_se": self.mad_median_se,
            "variance": self.variance,
            "variance_se": self.variance_se,
            "mean": self.mean,
            "median": self.median,
            "median_bias": self.median_bias,
            "abs_risk": self.abs_risk,
            "abs_risk_se": self.abs_risk_se,
            "truth": self.truth,
            "exact": self.exact,
        }


def _truth(f: GridFunction, x0: float) -> float:
    return float(np.asarray(f(np.array([x0])))[0])


def exact_linear_risk(est: EstimatorSpec, f: GridFunction, cfg: SimConfig) -> RiskEstimate:
    """
    Closed-form risk of a linear estimator

    f̂(x0) ~ N(Σ w_j f̄_j, (m/n)Σ w_j²), so the median equals the mean, both
    MADs equal √(2/π)·sd and E|f̂ - f(x0)| is a folded-normal mean.

    Args:
        est: Linear estimator
        f: Regression function
        cfg: Simulation configuration (n, m)

    Returns:
        RiskEstimate with exact=True and zero standard errors
    """
    if not est.is_linear:
        raise UnsupportedError(f"exact risk needs a linear estimator, {est.name!r} is {est.kind}")
    if len(est.weights) != cfg.m:
        raise UsageError(f"estimator has {len(est.weights)} weights but cfg.m = {cfg.m}")
    signal = _signal(f, cfg)
    mean = math.fsum((est.weights * signal).tolist())
    variance = cfg.noise_variance * math.fsum((est.weights * est.weights).tolist())
    sd = math.sqrt(variance)
    mad = GAUSSIAN_MAD_FACTOR * sd
    truth = _truth(f, est.x0)
    bias = mean - truth
    if sd > 0:
        abs_risk = float(stats.foldnorm.mean(abs(bias) / sd, scale=sd))
    else:
        abs_risk = abs(bias)
    return RiskEstimate(
        bias=bias,
        mad_mean=mad,
        mad_median=mad,
        variance=variance,
        mean=mean,
        median=mean,
        abs_risk=abs_risk,
        truth=truth,
        exact=True,
    )


def _batch_se(samples: np.ndarray, statistic: Callable[[np.ndarray], float]) -> float:
    if len(samples) < MIN_REPLICATES_FOR_SE:
        return math.nan
    batches = np.array_split(samples, SE_BATCHES)
    values = np.array([statistic(b) for b in batches])
    return float(np.std(values, ddof=1) / math.sqrt(SE_BATCHES))


def risk_from_samples(samples: np.ndarray, truth: float) -> RiskEstimate:
    """Empirical risk summary of estimator draws with 20-batch-means standard errors"""
    samples = np.asarray(samples, dtype=float)
    mean = float(np.mean(samples))
    median = float(np.median(samples))  # midpoint of the central order statistics
    variance = float(np.var(samples, ddof=1)) if len(samples) > 1 else 0.0

    def var_stat(b: np.ndarray) -> float:
        return float(np.var(b, ddof=1))

    def mad_mean_stat(b: np.ndarray) -> float:
        return float(np.mean(np.abs(b - np.mean(b))))

    def mad_median_stat(b: np.ndarray) -> float:
        return float(np.mean(np.abs(b - np.median(b))))

    def abs_risk_stat(b: np.ndarray) -> float:
        return float(np.mean(np.abs(b - truth)))

    return RiskEstimate(
        bias=mean - truth,
        mad_mean=mad_mean_stat(samples),
        mad_median=mad_median_stat(samples),
        variance=variance,
        mean=mean,
        median=median,
        abs_risk=abs_risk_stat(samples),
        truth=truth,
        bias_se=_batch_se(samples, lambda b: float(np.mean(b))),
        mad_mean_se=_batch_se(samples, mad_mean_stat),
        mad_median_se=_batch_se(samples, mad_median_stat),
        variance_se=_batch_se(samples, var_stat),
        abs_risk_se=_batch_se(samples, abs_risk_stat),
        exact=False,
    )


def simulate_estimates(
    estimators: Sequence[EstimatorSpec], f: GridFunction, cfg: SimConfig, threads: int = 1
) -> np.ndarray:
    """
    Estimator draws on shared replicates

    Replicates are generated in fixed-size blocks that may run in parallel;
    blocks are concatenated in replicate order.

    Returns:
        Array of shape (len(estimators), cfg.replicates)
    """
    signal = _signal(f, cfg)
    starts = list(range(0, cfg.replicates, REPLICATE_BLOCK))

    def run_block(start: int) -> np.ndarray:
        block = _replicate_block(signal, cfg, start, min(start + REPLICATE_BLOCK, cfg.replicates))
        return np.stack([est.estimate_block(block) for est in estimators])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(run_block, starts))
    return np.concatenate(parts, axis=1)


def mc_risk_many(
    estimators: Sequence[EstimatorSpec], f: GridFunction, cfg: SimConfig, threads: int = 1
) -> List[RiskEstimate]:
    """Monte Carlo risk of several estimators on one shared set of observations"""
    if cfg.replicates < MIN_REPLICATES_FOR_SE:
        logger.warning(
            "%d replicates is below %d: standard errors are reported as NaN", cfg.replicates, MIN_REPLICATES_FOR_SE
        )
    draws = simulate_estimates(estimators, f, cfg, threads)
    return [risk_from_samples(row, _truth(f, est.x0)) for est, row in zip(estimators, draws)]


def mc_risk(estimator: EstimatorSpec, f: GridFunction, cfg: SimConfig, threads: int = 1) -> RiskEstimate:
    """
    Monte Carlo bias, variance and both MADs of an estimator

    Args:
        estimator: Any estimator
        f: Regression function
        cfg: Simulation configuration
        threads: Worker cap

    Returns:
        RiskEstimate with batch-means standard errors
    """
    return mc_risk_many([estimator], f, cfg, threads)[0]


# ---------------------------------------------------------------------------
# Worst case over a family


@dataclass(frozen=True)
class FamilyRisk:
    """Per-member risks and their family-sup values (lower bounds on the class sup)"""

    members: Dict[str, RiskEstimate]
    sup_bias: float
    sup_bias_member: str
    sup_mad_mean: float
    sup_mad_mean_member: str
    sup_mad_median: float
    sup_mad_median_member: str
    sup_median_bias: float
    sup_abs_risk: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "members": {k: v.to_dict() for k, v in self.members.items()},
            "sup_bias": self.sup_bias,
            "sup_bias_member": self.sup_bias_member,
            "sup_mad_mean": self.sup_mad_mean,
            "sup_mad_mean_member": self.sup_mad_mean_member,
            "sup_mad_median": self.sup_mad_median,
            "sup_mad_median_member": self.sup_mad_median_member,
            "sup_median_bias": self.sup_median_bias,
            "sup_abs_risk": self.sup_abs_risk,
            "label": "family-sup",
        }


def _argmax(values: Mapping[str, float]) -> str:
    best = None
    for key, value in values.items():
        if best is None or value > values[best]:
            best = key
    return best


def worst_case_over_family(
    estimator: EstimatorSpec,
    family: Union[Mapping[str, GridFunction], Sequence[GridFunction]],
    cfg: SimConfig,
    method: str = "exact",
    threads: int = 1,
) -> FamilyRisk:
    """
    Largest |bias| and MADs of an estimator over a finite family

    Args:
        estimator: Estimator under study
        family: Members by id (a plain sequence is keyed f0, f1, ...)
        cfg: Simulation configuration
        method: "exact" (linear estimators only) or "mc"
        threads: Worker cap for the Monte Carlo path

    Returns:
        FamilyRisk; ties resolve to the first member in iteration order
    """
    if not isinstance(family, Mapping):
        family = {f"f{i}": f for i, f in enumerate(family)}
    if not family:
        raise UsageError("family must not be empty")
    if method not in ("exact", "mc"):
        raise UsageError(f"unknown method {method!r}")

    members: Dict[str, RiskEstimate] = {}
    for key, f in family.items():
        if method == "exact":
            members[key] = exact_linear_risk(estimator, f, cfg)
        else:
            members[key] = mc_risk(estimator, f, cfg, threads)

    abs_bias = {k: abs(r.bias) for k, r in members.items()}
    mad_mean = {k: r.mad_mean for k, r in members.items()}
    mad_median = {k: r.mad_median for k, r in members.items()}
    bias_key, mean_key, median_key = _argmax(abs_bias), _argmax(mad_mean), _argmax(mad_median)
    return FamilyRisk(
        members=members,
        sup_bias=abs_bias[bias_key],
        sup_bias_member=bias_key,
        sup_mad_mean=mad_mean[mean_key],
        sup_mad_mean_member=mean_key,
        sup_mad_median=mad_median[median_key],
        sup_mad_median_member=median_key,
        sup_median_bias=max(abs(r.median_bias) for r in members.values()),
        sup_abs_risk=max(r.abs_risk for r in members.values()),
    )
