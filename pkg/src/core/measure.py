"""
Discrete measures and divergences
Finite probability measures on labeled atoms, random variables over them, and
every Hellinger computation the inequalities and the white-noise model need.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Hashable, Iterable, Sequence

import numpy as np

from src.core.errors import UsageError
from src.core.holder import GridFunction

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12


def _frozen(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def fsum_dot(weights: np.ndarray, values: np.ndarray) -> float:
    """Compensated weighted sum Σ w_j x_j"""
    return math.fsum((np.asarray(weights) * np.asarray(values)).tolist())


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure on a finite, ordered set of atoms"""

    atoms: tuple
    probs: np.ndarray

    def __post_init__(self):
        atoms = tuple(self.atoms)
        probs = np.array(self.probs, dtype=float)

        if probs.ndim != 1 or len(probs) != len(atoms):
            raise UsageError(
                f"probs must be a flat sequence aligned with {len(atoms)} atoms, got shape {probs.shape}"
            )
        if len(atoms) == 0:
            raise UsageError("a measure needs at least one atom")
        if len(set(atoms)) != len(atoms):
            raise UsageError(f"atoms must be unique: {atoms}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise UsageError(f"weights must be finite and non-negative: {probs.tolist()}")

        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > PROB_TOL:
            raise UsageError(f"weights sum to {total!r}, expected 1 within {PROB_TOL}")

        # Renormalized exactly once so later slack reflects the math, not the input
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", _frozen(probs / total))

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "DiscreteMeasure":
        """Measure on atoms 1..M with the given weights"""
        return cls(atoms=tuple(range(1, len(probs) + 1)), probs=np.asarray(probs, dtype=float))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DiscreteMeasure":
        try:
            return cls(atoms=tuple(data["atoms"]), probs=np.asarray(data["probs"], dtype=float))
        except KeyError as e:
            raise UsageError(f"measure JSON is missing key {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> Dict[str, Any]:
        return {"atoms": list(self.atoms), "probs": self.probs.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @property
    def size(self) -> int:
        return len(self.atoms)

    def index_of(self, atom: Hashable) -> int:
        try:
            return self.atoms.index(atom)
        except ValueError as e:
            raise UsageError(f"unknown atom {atom!r}") from e

    def expect(self, values: Any) -> float:
        """E[X] by compensated summation"""
        return fsum_dot(self.probs, _aligned_values(values, self))

    def mad(self, values: Any, center: float) -> float:
        """E|X - center|"""
        x = _aligned_values(values, self)
        return fsum_dot(self.probs, np.abs(x - center))

    def variance(self, values: Any) -> float:
        x = _aligned_values(values, self)
        mean = fsum_dot(self.probs, x)
        return fsum_dot(self.probs, (x - mean) ** 2)

    def mass(self, indices: Sequence[int]) -> float:
        return math.fsum(self.probs[list(indices)].tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return self.atoms == other.atoms and np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash((self.atoms, self.probs.tobytes()))


@dataclass(frozen=True)
class FiniteRV:
    """Real value per atom, aligned with a measure's atom order"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise UsageError(f"random variable values must be one-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise UsageError("random variable values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def constant(cls, value: float, size: int) -> "FiniteRV":
        return cls(np.full(size, float(value)))

    @classmethod
    def indicator(cls, index: int, size: int) -> "FiniteRV":
        values = np.zeros(size)
        values[index] = 1.0
        return cls(values)

    def __len__(self) -> int:
        return len(self.values)

    def check_aligned(self, measure: DiscreteMeasure) -> None:
        if len(self.values) != measure.size:
            raise UsageError(
                f"random variable has {len(self.values)} values but the measure has {measure.size} atoms"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {"values": self.values.tolist()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteRV):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


def _aligned_values(values: Any, measure: DiscreteMeasure) -> np.ndarray:
    if isinstance(values, FiniteRV):
        values.check_aligned(measure)
        return values.values
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return np.full(measure.size, float(arr))
    if arr.shape != (measure.size,):
        raise UsageError(f"expected {measure.size} values, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DivergenceReport:
    """Hellinger distance and the two likelihood-ratio sup norms of a pair of measures"""

    hellinger_sq: float
    lr_min_norm: float
    lr_max_norm: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "hellinger_sq": self.hellinger_sq,
            "lr_min_norm": self.lr_min_norm,
            "lr_max_norm": self.lr_max_norm,
        }


def require_shared_atoms(P: DiscreteMeasure, Q: DiscreteMeasure) -> None:
    if P.atoms != Q.atoms:
        raise UsageError(f"measures must share one atom sequence: {P.atoms} vs {Q.atoms}")


def _clamp_unit(value: float) -> float:
    return min(max(value, 0.0), 1.0)


def hellinger_sq_discrete(P: DiscreteMeasure, Q: DiscreteMeasure) -> float:
    """
    Squared Hellinger distance H²(P, Q) = 1 - Σ √(p_j q_j)

    Evaluated in the algebraically equal form ½ Σ (√p_j - √q_j)², which does
    not cancel catastrophically when P and Q are close.

    Args:
        P: First measure
        Q: Second measure on the same atoms

    Returns:
        H² clamped to [0, 1]
    """
    require_shared_atoms(P, Q)
    diff = np.sqrt(P.probs) - np.sqrt(Q.probs)
    return _clamp_unit(0.5 * math.fsum((diff * diff).tolist()))


def hellinger_sq_gaussian_location(delta: float) -> float:
    """H² between N(θ, 1) and N(θ + delta, 1): 1 - exp(-delta²/8)"""
    return _clamp_unit(-math.expm1(-(delta * delta) / 8.0))


def hellinger_sq_gwn(f: GridFunction, g: GridFunction, n: float) -> float:
    """
    H² between the white-noise experiments with regression functions f and g

    Args:
        f: Regression function on a grid
        g: Regression function on the same grid
        n: Noise level of the model (noise standard deviation 1/√n)

    Returns:
        1 - exp(-(n/8)·‖f - g‖₂²) with the grid's quadrature rule
    """
    if n <= 0:
        raise UsageError(f"n must be positive, got {n}")
    if f.m != g.m:
        raise UsageError(f"grid mismatch: {f.m} vs {g.m} points")
    dist_sq = (f - g).l2_norm_sq()
    return _clamp_unit(-math.expm1(-(n / 8.0) * dist_sq))


def hellinger_sq_product_gaussian(
    means1: Sequence[float], means2: Sequence[float], variance: float
) -> float:
    """H² between two product Gaussians with independent coordinates and a common variance"""
    mu = np.asarray(means1, dtype=float)
    nu = np.asarray(means2, dtype=float)
    if mu.shape != nu.shape or mu.ndim != 1:
        raise UsageError(f"mean sequences must have equal length: {mu.shape} vs {nu.shape}")
    if variance <= 0:
        raise UsageError(f"variance must be positive, got {variance}")
    gap_sq = math.fsum(((mu - nu) ** 2).tolist())
    return _clamp_unit(-math.expm1(-gap_sq / (8.0 * variance)))


def _ratio_sup(numer: np.ndarray, denom: np.ndarray) -> float:
    # 0/0 := 0, x/0 := +inf for x > 0
    best = 0.0
    for a, b in zip(numer.tolist(), denom.tolist()):
        if a == 0.0:
            continue
        ratio = math.inf if b == 0.0 else a / b
        best = max(best, ratio)
    return best


def lr_ratio_norms(P: DiscreteMeasure, Q: DiscreteMeasure) -> DivergenceReport:
    """
    Likelihood-ratio sup norms ‖(p-q)/(p∧q)‖_∞ and ‖(p-q)/(p∨q)‖_∞

    Args:
        P: First measure
        Q: Second measure on the same atoms

    Returns:
        DivergenceReport with H², lr_min_norm and lr_max_norm
    """
    require_shared_atoms(P, Q)
    gap = np.abs(P.probs - Q.probs)
    lr_min = _ratio_sup(gap, np.minimum(P.probs, Q.probs))
    lr_max = _ratio_sup(gap, np.maximum(P.probs, Q.probs))
    return DivergenceReport(
        hellinger_sq=hellinger_sq_discrete(P, Q),
        lr_min_norm=lr_min,
        lr_max_norm=min(lr_max, 1.0),
    )
