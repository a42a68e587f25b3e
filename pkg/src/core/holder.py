"""
Hölder norms, the bump kernel and the worst-case family
Grid functions on [0, 1], the compactly supported smooth bump K, the β-Hölder
norm estimates used for the parameter space, and the three-member family
f_θ(x) = θ·V·r_n^β·K((x - x0)/r_n) that drives the white-noise lower bound.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize

from src.core.errors import PreconditionError, UnsupportedError, UsageError

logger = logging.getLogger(__name__)

# Gauss-Legendre nodes per bin for exact bin averages of analytic functions
BIN_QUADRATURE_NODES = 16
# Sub-samples per bin when averaging a plain interpolant
BIN_OVERSAMPLE = 16
# Dense sampling used for the kernel's sup norms and Hölder quotients
KERNEL_SAMPLES = 4001
KERNEL_PAIR_SAMPLES = 2001
# Grid and kernel norms are both sampled lower estimates
RESCALING_TOLERANCE = 1e-3

Source = Callable[[np.ndarray], np.ndarray]


def floor_beta(beta: float) -> int:
    """Largest integer strictly smaller than beta"""
    return int(math.ceil(beta)) - 1


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Function on the midpoint grid x_j = (j + ½)/m of [0, 1]

    Values are interpolated piecewise-linearly between grid points. When the
    function comes from a closed form (`source`), point evaluations and bin
    averages use the closed form instead of the interpolant.
    """

    m: int
    values: np.ndarray
    source: Optional[Source] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if self.m < 2:
            raise UsageError(f"grid size must be at least 2, got {self.m}")
        if values.shape != (self.m,):
            raise UsageError(f"expected {self.m} grid values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise UsageError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, fn: Source, m: int) -> "GridFunction":
        """Sample a vectorized callable on the grid and keep it as the source"""
        return cls(m=m, values=np.asarray(fn(grid_points(m)), dtype=float), source=fn)

    @classmethod
    def constant(cls, value: float, m: int) -> "GridFunction":
        return cls.from_callable(lambda x: np.full(np.shape(x), float(value)), m)

    @classmethod
    def zero(cls, m: int) -> "GridFunction":
        return cls.constant(0.0, m)

    @property
    def xs(self) -> np.ndarray:
        return grid_points(self.m)

    def __call__(self, x: Any) -> Any:
        if self.source is not None:
            return self.source(np.asarray(x, dtype=float))
        return np.interp(x, self.xs, self.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if not isinstance(other, GridFunction):
            return NotImplemented
        if other.m != self.m:
            raise UsageError(f"grid mismatch: {self.m} vs {other.m} points")
        source = None
        if self.source is not None and other.source is not None:
            a, b = self.source, other.source
            source = lambda x: a(x) - b(x)  # noqa: E731
        return GridFunction(self.m, self.values - other.values, source)

    def scaled(self, factor: float) -> "GridFunction":
        source = None
        if self.source is not None:
            base = self.source
            source = lambda x: factor * base(x)  # noqa: E731
        return GridFunction(self.m, factor * self.values, source)

    def l2_norm_sq(self) -> float:
        """Midpoint-rule quadrature of ∫₀¹ f²"""
        return math.fsum((self.values * self.values).tolist()) / self.m

    def bin_averages(self, m: Optional[int] = None) -> np.ndarray:
        """
        Average of f over each bin [j/m, (j+1)/m]

        Args:
            m: Number of bins (defaults to the function's own grid size)

        Returns:
            Array of m bin averages
        """
        m = self.m if m is None else m
        if m < 1:
            raise UsageError(f"bin count must be positive, got {m}")
        if self.source is not None:
            nodes, weights = leggauss(BIN_QUADRATURE_NODES)
            left = np.arange(m)[:, None] / m
            x = left + (nodes[None, :] + 1.0) / (2.0 * m)
            return (self.source(x) * weights[None, :]).sum(axis=1) / 2.0
        if m == self.m:
            return self.values.copy()
        offsets = (np.arange(BIN_OVERSAMPLE) + 0.5) / BIN_OVERSAMPLE
        x = (np.arange(m)[:, None] + offsets[None, :]) / m
        return np.interp(x, self.xs, self.values).mean(axis=1)

    def resampled(self, m: int) -> "GridFunction":
        if m == self.m:
            return self
        if self.source is not None:
            return GridFunction.from_callable(self.source, m)
        return GridFunction(m, np.interp(grid_points(m), self.xs, self.values))

    def to_csv_rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.values.tolist()))

    def to_dict(self) -> Dict[str, Any]:
        return {"m": self.m, "x": self.xs.tolist(), "values": self.values.tolist()}


@lru_cache(maxsize=64)
def _grid_points_cached(m: int) -> np.ndarray:
    xs = (np.arange(m) + 0.5) / m
    xs.setflags(write=False)
    return xs


def grid_points(m: int) -> np.ndarray:
    return _grid_points_cached(int(m))


# ---------------------------------------------------------------------------
# Bump kernel


def _bump(x: Any) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    s = 1.0 - x[inside] ** 2
    out[inside] = np.exp(1.0 - 1.0 / s)
    return out


@lru_cache(maxsize=None)
def _bump_numerators(order: int) -> Tuple[Polynomial, ...]:
    # K^(k) = K · A_k / (1 - x²)^(2k)
    one_minus_sq = Polynomial([1.0, 0.0, -1.0])
    x = Polynomial([0.0, 1.0])
    polys = [Polynomial([1.0])]
    for k in range(order):
        a = polys[-1]
        polys.append(a.deriv() * one_minus_sq ** 2 + 4 * k * x * one_minus_sq * a - 2 * x * a)
    return tuple(polys)


def _bump_derivative(x: Any, order: int) -> np.ndarray:
    if order == 0:
        return _bump(x)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    s = 1.0 - xi ** 2
    numerator = _bump_numerators(order)[order]
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        vals = np.exp(1.0 - 1.0 / s) * numerator(xi) / s ** (2 * order)
    out[inside] = np.where(np.isfinite(vals), vals, 0.0)
    return out


@dataclass(frozen=True)
class KernelSpec:
    """Kernel K with its cached L² and Hölder constants"""

    name: str
    beta: float
    support_radius: float
    l2_norm_sq: float
    holder_norm: float
    evaluator: Source = field(repr=False, compare=False)
    differentiator: Callable[[np.ndarray, int], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, x: Any) -> np.ndarray:
        return self.evaluator(x)

    def derivative(self, x: Any, order: int) -> np.ndarray:
        return self.differentiator(x, order)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "beta": self.beta,
            "support_radius": self.support_radius,
            "l2_norm_sq": self.l2_norm_sq,
            "holder_norm": self.holder_norm,
        }


def _sup_abs(fn: Source, lo: float, hi: float, samples: int = KERNEL_SAMPLES) -> float:
    """sup |fn| on [lo, hi]: dense sampling, then a bounded refinement around the best sample"""
    xs = np.linspace(lo, hi, samples)
    vals = np.abs(fn(xs))
    best = int(np.argmax(vals))
    step = (hi - lo) / (samples - 1)
    a, b = max(lo, xs[best] - step), min(hi, xs[best] + step)
    if b <= a:
        return float(vals[best])
    res = optimize.minimize_scalar(
        lambda t: -float(np.abs(fn(np.array([t])))[0]),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(vals[best]), float(-res.fun))


def _holder_quotient(values: np.ndarray, xs: np.ndarray, alpha: float, block: int = 512) -> float:
    """sup over sample pairs of |g(x) - g(y)| / |x - y|^alpha"""
    if len(values) < 2:
        return 0.0
    if alpha >= 1.0:
        # For sampled data the Lipschitz quotient is attained by neighbours
        return float(np.max(np.abs(np.diff(values)) / np.diff(xs)))
    best = 0.0
    for start in range(0, len(values), block):
        stop = min(start + block, len(values))
        dx = np.abs(xs[start:stop, None] - xs[None, :])
        dv = np.abs(values[start:stop, None] - values[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dx > 0, dv / np.power(dx, alpha), 0.0)
        best = max(best, float(q.max()))
    return best


def _kernel_holder_norm(
    differentiator: Callable[[np.ndarray, int], np.ndarray], radius: float, beta: float
) -> float:
    order = floor_beta(beta)
    alpha = beta - order
    total = 0.0
    for ell in range(order + 1):
        total += _sup_abs(lambda x, ell=ell: differentiator(x, ell), -radius, radius)
    if alpha == 1.0:
        total += _sup_abs(lambda x: differentiator(x, order + 1), -radius, radius)
    else:
        xs = np.linspace(-radius, radius, KERNEL_PAIR_SAMPLES)
        total += _holder_quotient(differentiator(xs, order), xs, alpha)
    return total


@lru_cache(maxsize=32)
def bump_kernel(beta: float) -> KernelSpec:
    """
    Smooth compactly supported bump K(x) = exp(1 - 1/(1 - x²)) on |x| < 1

    K(0) = 1 and K is infinitely differentiable, so it lies in every Hölder
    class; the constants are computed once per β and cached.

    Args:
        beta: Smoothness index the Hölder norm is computed for

    Returns:
        KernelSpec with ‖K‖₂² and ‖K‖_{C^β(R)}
    """
    if beta <= 0:
        raise UsageError(f"beta must be positive, got {beta}")
    l2_sq, err = integrate.quad(
        lambda t: float(_bump(t)) ** 2, -1.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200
    )
    norm = _kernel_holder_norm(_bump_derivative, 1.0, beta)
    logger.debug("bump kernel beta=%s: l2_norm_sq=%r (quad err %.1e), holder_norm=%r", beta, l2_sq, err, norm)
    return KernelSpec(
        name="bump",
        beta=float(beta),
        support_radius=1.0,
        l2_norm_sq=float(l2_sq),
        holder_norm=float(norm),
        evaluator=_bump,
        differentiator=_bump_derivative,
    )


# ---------------------------------------------------------------------------
# Hölder norms


def holder_norm(f: Union[GridFunction, KernelSpec], beta: float) -> float:
    """
    β-Hölder norm Σ_{ℓ≤⌊β⌋} ‖f^(ℓ)‖_∞ + sup |f^(⌊β⌋)(x) - f^(⌊β⌋)(y)| / |x-y|^(β-⌊β⌋)

    ⌊β⌋ is the largest integer strictly smaller than β. On a grid, derivatives
    are central differences and the sup runs over grid pairs only, so the value
    is a lower estimate of the norm of the underlying function. For kernels the
    derivatives are exact and the sup norms are located by dense sampling with
    refinement.

    Args:
        f: Grid function or kernel
        beta: Smoothness index (at most 2 for grid functions)

    Returns:
        The norm estimate
    """
    if beta <= 0:
        raise UsageError(f"beta must be positive, got {beta}")
    if isinstance(f, KernelSpec):
        if f.beta == beta:
            return f.holder_norm
        return _kernel_holder_norm(f.differentiator, f.support_radius, beta)

    if beta > 2:
        raise UnsupportedError(f"grid Hölder norms support beta <= 2, got {beta}")
    order = floor_beta(beta)
    alpha = beta - order
    derivs = [f.values]
    if order >= 1:
        derivs.append(np.gradient(f.values, 1.0 / f.m))
    total = sum(float(np.max(np.abs(d))) for d in derivs)
    return total + _holder_quotient(derivs[order], f.xs, alpha)


@dataclass(frozen=True)
class HolderBallCheck:
    inside: bool
    margin: float
    norm: float
    beta: float
    R: float

    def to_dict(self) -> Dict[str, Any]:
        return {"inside": self.inside, "margin": self.margin, "norm": self.norm, "beta": self.beta, "R": self.R}


def check_in_holder_ball(f: GridFunction, beta: float, R: float) -> HolderBallCheck:
    """Is ‖f‖_{C^β} ≤ R (grid estimate), and by how much"""
    norm = holder_norm(f, beta)
    return HolderBallCheck(inside=norm <= R, margin=R - norm, norm=norm, beta=beta, R=R)


def check_rescaling_bound(
    kernel: KernelSpec, h: float, beta: Optional[float] = None, m: int = 512, x0: float = 0.5
) -> HolderBallCheck:
    """
    Grid norm of h^β·K((x - x0)/h) against ‖K‖_{C^β}

    For 0 < h ≤ 1 every derivative term shrinks by h^(β-ℓ) and the Hölder
    quotient is scale-free, so the rescaled kernel stays in the ball of
    radius ‖K‖_{C^β}. The grid estimate may sit above the kernel's own sampled
    estimate by RESCALING_TOLERANCE (relative).

    Args:
        kernel: Kernel K
        h: Bandwidth in (0, 1]
        beta: Smoothness index (defaults to the kernel's)
        m: Grid size
        x0: Centre of the rescaled kernel

    Returns:
        HolderBallCheck with R = ‖K‖_{C^β}
    """
    beta = kernel.beta if beta is None else beta
    if not 0.0 < h <= 1.0:
        raise UsageError(f"h must lie in (0, 1], got {h}")
    scale = h ** beta
    rescaled = GridFunction.from_callable(lambda x: scale * kernel((np.asarray(x, dtype=float) - x0) / h), m)
    bound = holder_norm(kernel, beta)
    norm = holder_norm(rescaled, beta)
    return HolderBallCheck(
        inside=norm <= bound * (1.0 + RESCALING_TOLERANCE), margin=bound - norm, norm=norm, beta=beta, R=bound
    )


# ---------------------------------------------------------------------------
# Worst-case family


@dataclass(frozen=True)
class FamilySpec:
    """Parameters of one family member f_θ"""

    beta: float
    R: float
    C: float
    V: float
    n: float
    theta: float = 1.0
    x0: float = 0.5

    def __post_init__(self):
        for name in ("beta", "R", "C", "V", "n"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if abs(self.theta) > 1:
            raise UsageError(f"|theta| must be at most 1, got {self.theta}")
        if not 0.0 <= self.x0 <= 1.0:
            raise UsageError(f"x0 must lie in [0, 1], got {self.x0}")

    @classmethod
    def from_kernel(
        cls, kernel: KernelSpec, R: float, C: float, n: float, theta: float = 1.0, x0: float = 0.5
    ) -> "FamilySpec":
        return cls(beta=kernel.beta, R=R, C=C, V=R / kernel.holder_norm, n=n, theta=theta, x0=x0)

    @property
    def r_n(self) -> float:
        return (2.0 / self.V) ** (1.0 / self.beta) * (self.C / self.n) ** (1.0 / (2.0 * self.beta + 1.0))

    @property
    def amplitude(self) -> float:
        """f_1(x0) = V·r_n^β = 2(C/n)^(β/(2β+1))"""
        return self.V * self.r_n ** self.beta

    def min_n_for_bandwidth(self, max_r: float = 1.0) -> float:
        """Smallest n with r_n <= max_r"""
        return self.C * (2.0 / self.V) ** ((2.0 * self.beta + 1.0) / self.beta) * max_r ** -(2.0 * self.beta + 1.0)


def build_family_member(spec: FamilySpec, kernel: KernelSpec, m: int) -> GridFunction:
    """
    Sample f_θ(x) = θ·V·r_n^β·K((x - x0)/r_n) on an m-point grid

    The member keeps its closed form as source, so f_θ(x0) = θ·V·r_n^β exactly
    and f_θ = θ·f_1 holds value by value.

    Args:
        spec: Family parameters
        kernel: Kernel with K(0) = 1
        m: Grid size

    Returns:
        GridFunction for f_θ
    """
    r = spec.r_n
    if r > 1.0:
        min_n = spec.min_n_for_bandwidth(1.0)
        raise PreconditionError(
            f"r_n = {r:.6g} > 1 for n = {spec.n:g}; the family leaves the Hölder ball (need n >= {min_n:.6g})",
            detail={"r_n": r, "min_n": min_n},
        )
    amplitude, x0, theta = spec.amplitude, spec.x0, spec.theta

    def unit(x: np.ndarray) -> np.ndarray:
        return amplitude * kernel((np.asarray(x, dtype=float) - x0) / r)

    base = unit(grid_points(m))
    return GridFunction(m=m, values=theta * base, source=lambda x: theta * unit(x))
