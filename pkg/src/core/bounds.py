"""
Change-of-expectation inequalities
Evaluates both sides of the variance and MAD inequalities on finite spaces,
the steps of the MAD proof, and the two-point trade-off bounds derived from
them. Every check returns an InequalityReport.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.core.errors import PreconditionError, UsageError
from src.core.measure import (
    DiscreteMeasure,
    FiniteRV,
    hellinger_sq_discrete,
    lr_ratio_norms,
    require_shared_atoms,
)

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-12


@dataclass(frozen=True)
class InequalityReport:
    """Machine-checkable record of one evaluated inequality lhs <= rhs"""

    name: str
    lhs: float
    rhs: float
    slack: float
    holds: bool
    tol: float
    context: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def evaluate(
        cls,
        name: str,
        lhs: float,
        rhs: float,
        context: Optional[Dict[str, Any]] = None,
        rel_tol: float = DEFAULT_REL_TOL,
    ) -> "InequalityReport":
        """
        Build a report with tolerance rel_tol·max(1, |lhs|, |rhs|)

        Args:
            name: Identifier of the inequality
            lhs: Left-hand side
            rhs: Right-hand side
            context: Symbols used in the evaluation
            rel_tol: Relative tolerance

        Returns:
            InequalityReport
        """
        scale = max([1.0] + [abs(v) for v in (lhs, rhs) if math.isfinite(v)])
        tol = rel_tol * scale
        slack = rhs - lhs
        holds = (not math.isnan(slack)) and slack >= -tol
        return cls(name=name, lhs=lhs, rhs=rhs, slack=slack, holds=holds, tol=tol, context=dict(context or {}))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "holds": self.holds,
            "tol": self.tol,
            "context": dict(self.context),
        }


def _prepare(P: DiscreteMeasure, Q: DiscreteMeasure, X: Any) -> FiniteRV:
    require_shared_atoms(P, Q)
    rv = X if isinstance(X, FiniteRV) else FiniteRV(np.asarray(X, dtype=float))
    rv.check_aligned(P)
    return rv


def check_lemma2(
    P: DiscreteMeasure, Q: DiscreteMeasure, X: Any, u: float, v: float, name: str = "lemma2"
) -> InequalityReport:
    """
    (1/5)(1 - H²(P,Q))²|u - v| <= max(E_P|X - u|, E_Q|X - v|)

    Args:
        P: First measure
        Q: Second measure on the same atoms
        X: Random variable aligned with the atoms
        u: Centering under P
        v: Centering under Q
        name: Report name

    Returns:
        InequalityReport with H², d, a, b in the context
    """
    X = _prepare(P, Q, X)
    h_sq = hellinger_sq_discrete(P, Q)
    d = 1.0 - h_sq
    b = abs(u - v)
    mad_p_u = P.mad(X, u)
    mad_q_v = Q.mad(X, v)
    lhs = d * d * b / 5.0
    rhs = max(mad_p_u, mad_q_v)
    context = {
        "hellinger_sq": h_sq,
        "u": u,
        "v": v,
        "d": d,
        "b": b,
        "a": max(P.mad(X, v), Q.mad(X, u)),
        "mad_p_u": mad_p_u,
        "mad_q_v": mad_q_v,
    }
    return InequalityReport.evaluate(name, lhs, rhs, context)


def check_cauchy_schwarz_step(
    P: DiscreteMeasure, Q: DiscreteMeasure, X: Any, u: float, v: float
) -> InequalityReport:
    """(1 - H²)|u - v| <= √(E_P|X-u|·E_Q|X-u|) + √(E_P|X-v|·E_Q|X-v|)"""
    X = _prepare(P, Q, X)
    h_sq = hellinger_sq_discrete(P, Q)
    lhs = (1.0 - h_sq) * abs(u - v)
    rhs = math.sqrt(P.mad(X, u) * Q.mad(X, u)) + math.sqrt(P.mad(X, v) * Q.mad(X, v))
    return InequalityReport.evaluate("cauchy_schwarz_step", lhs, rhs, {"hellinger_sq": h_sq, "u": u, "v": v})


def check_proof_chain(
    P: DiscreteMeasure, Q: DiscreteMeasure, X: Any, u: float, v: float
) -> InequalityReport:
    """
    d·b <= 2√(a² + ab) with a = max(E_P|X-v|, E_Q|X-u|), b = |u-v|, d = 1 - H²

    The bound also holds for a' = max(E_P|X-u|, E_Q|X-v|); a' is recorded in
    the context as `a_direct` together with its own slack.
    """
    X = _prepare(P, Q, X)
    h_sq = hellinger_sq_discrete(P, Q)
    d = 1.0 - h_sq
    b = abs(u - v)
    a = max(P.mad(X, v), Q.mad(X, u))
    a_direct = max(P.mad(X, u), Q.mad(X, v))
    rhs = 2.0 * math.sqrt(a * a + a * b)
    rhs_direct = 2.0 * math.sqrt(a_direct * a_direct + a_direct * b)
    context = {
        "hellinger_sq": h_sq,
        "a": a,
        "b": b,
        "d": d,
        "a_direct": a_direct,
        "slack_direct": rhs_direct - d * b,
    }
    return InequalityReport.evaluate("proof_chain", d * b, rhs, context)


def check_quadratic_chain(a: float, b: float, d: float) -> Tuple[InequalityReport, InequalityReport]:
    """
    The two scalar steps closing the MAD proof

    Report 1 ("quadratic_root") compares a with the positive root
    b(√(1+d²) - 1)/2 of a² + ab - d²b²/4; for a, b >= 0 it holds exactly when
    the premise d·b <= 2√(a² + ab) holds, which is recorded as `premise`.
    Report 2 ("root_lower_bound") checks √(1+d²) - 1 >= 2d²/5.

    Args:
        a: Non-negative MAD-type quantity
        b: Non-negative gap |u - v|
        d: 1 - H², in [0, 1]

    Returns:
        Pair of InequalityReports
    """
    if a < 0 or b < 0:
        raise UsageError(f"a and b must be non-negative, got a={a}, b={b}")
    if not 0.0 <= d <= 1.0:
        raise UsageError(f"d must lie in [0, 1], got {d}")
    root_factor = math.sqrt(1.0 + d * d) - 1.0
    premise = d * b <= 2.0 * math.sqrt(a * a + a * b)
    root = InequalityReport.evaluate(
        "quadratic_root",
        b * root_factor / 2.0,
        a,
        {"a": a, "b": b, "d": d, "premise": premise},
    )
    lower = InequalityReport.evaluate("root_lower_bound", 2.0 * d * d / 5.0, root_factor, {"d": d})
    return root, lower


def check_special_case_means(P: DiscreteMeasure, Q: DiscreteMeasure, X: Any) -> InequalityReport:
    """MAD inequality centered at the means u = E_P[X], v = E_Q[X]"""
    X = _prepare(P, Q, X)
    return check_lemma2(P, Q, X, P.expect(X), Q.expect(X), name="special_case_means")


def check_lemma1_variance(P: DiscreteMeasure, Q: DiscreteMeasure, X: Any) -> InequalityReport:
    """
    (E_P X - E_Q X)²/(4 - 2H²)·(1/H - H)² <= Var_P(X) + Var_Q(X)

    H = 0 means P = Q; the left side is then 0 by convention.
    """
    X = _prepare(P, Q, X)
    h_sq = hellinger_sq_discrete(P, Q)
    h = math.sqrt(h_sq)
    gap = P.expect(X) - Q.expect(X)
    lhs = 0.0 if h == 0.0 else gap * gap / (4.0 - 2.0 * h_sq) * (1.0 / h - h) ** 2
    rhs = P.variance(X) + Q.variance(X)
    return InequalityReport.evaluate("lemma1_variance", lhs, rhs, {"hellinger_sq": h_sq, "mean_gap": gap})


def check_lemma3_first(P: DiscreteMeasure, Q: DiscreteMeasure, X: Any) -> InequalityReport:
    """
    (1 - H²)/‖(p-q)/(p∧q)‖_∞ · |E_P X - E_Q X| <= max of the two mean-centered MADs

    An infinite ratio norm (supports differ) or a zero one (P = Q) gives a zero
    left side.
    """
    X = _prepare(P, Q, X)
    div = lr_ratio_norms(P, Q)
    mean_p, mean_q = P.expect(X), Q.expect(X)
    gap = abs(mean_p - mean_q)
    if math.isinf(div.lr_min_norm) or div.lr_min_norm == 0.0:
        lhs = 0.0
    else:
        lhs = (1.0 - div.hellinger_sq) / div.lr_min_norm * gap
    rhs = max(P.mad(X, mean_p), Q.mad(X, mean_q))
    context = {"hellinger_sq": div.hellinger_sq, "lr_min_norm": div.lr_min_norm, "mean_gap": gap}
    return InequalityReport.evaluate("lemma3_first", lhs, rhs, context)


def check_mad_below_sd(P: DiscreteMeasure, X: Any) -> InequalityReport:
    """E_P|X - E_P X| <= √Var_P(X)"""
    rv = X if isinstance(X, FiniteRV) else FiniteRV(np.asarray(X, dtype=float))
    rv.check_aligned(P)
    mean = P.expect(rv)
    return InequalityReport.evaluate("mad_below_sd", P.mad(rv, mean), math.sqrt(P.variance(rv)), {"mean": mean})


# ---------------------------------------------------------------------------
# Two-point trade-off bounds


def variance_tradeoff_bound(theta_gap: float, hellinger: float, bias_budget: float) -> float:
    """
    Worst-case variance lower bound from the variance inequality

    With |θ - θ'| >= 4B the reverse triangle inequality gives
    |E_θ θ̂ - E_θ' θ̂| >= |θ - θ'|/2, hence
    sup Var >= (¼(θ-θ')²/(4 - 2r²))·(1/r - r)²/2.

    Args:
        theta_gap: θ - θ'
        hellinger: Hellinger distance r (not squared), in (0, 1)
        bias_budget: Bound B on the absolute bias

    Returns:
        The lower bound on the worst-case variance
    """
    if bias_budget < 0:
        raise UsageError(f"bias budget must be non-negative, got {bias_budget}")
    if not 0.0 < hellinger < 1.0:
        raise UsageError(f"hellinger must lie in (0, 1), got {hellinger}")
    if abs(theta_gap) < 4.0 * bias_budget:
        raise PreconditionError(
            f"|theta_gap| = {abs(theta_gap)} < 4·bias_budget = {4.0 * bias_budget}",
            detail={"theta_gap": theta_gap, "bias_budget": bias_budget},
        )
    h_sq = hellinger * hellinger
    return 0.25 * theta_gap * theta_gap / (4.0 - 2.0 * h_sq) * (1.0 / hellinger - hellinger) ** 2 / 2.0


def mad_tradeoff_bound(theta_gap: float, hellinger_sq: float, bias_budget: float) -> float:
    """Worst-case MAD lower bound (1/5)(1 - H²)²·|θ - θ'|/2 under |θ - θ'| >= 4B"""
    if bias_budget < 0:
        raise UsageError(f"bias budget must be non-negative, got {bias_budget}")
    if not 0.0 <= hellinger_sq < 1.0:
        raise UsageError(f"hellinger_sq must lie in [0, 1), got {hellinger_sq}")
    if abs(theta_gap) < 4.0 * bias_budget:
        raise PreconditionError(
            f"|theta_gap| = {abs(theta_gap)} < 4·bias_budget = {4.0 * bias_budget}",
            detail={"theta_gap": theta_gap, "bias_budget": bias_budget},
        )
    return (1.0 - hellinger_sq) ** 2 * abs(theta_gap) / 10.0


def bias_tradeoff_bound(theta_gap: float, hellinger: float, variance_budget: float) -> float:
    """
    Worst-case bias lower bound given sup Var <= variance_budget

    From the variance inequality, |ΔE| <= √(2·V·(4 - 2r²))/(1/r - r), and
    |ΔE| >= |θ - θ'| - 2B; the bound is floored at 0.
    """
    if variance_budget < 0:
        raise UsageError(f"variance budget must be non-negative, got {variance_budget}")
    if not 0.0 < hellinger < 1.0:
        raise UsageError(f"hellinger must lie in (0, 1), got {hellinger}")
    h_sq = hellinger * hellinger
    max_gap = math.sqrt(2.0 * variance_budget * (4.0 - 2.0 * h_sq)) / (1.0 / hellinger - hellinger)
    return max(0.0, (abs(theta_gap) - max_gap) / 2.0)


# ---------------------------------------------------------------------------
# Instance generation


def random_simplex(rng: np.random.Generator, size: int, zero_prob: float = 0.0) -> np.ndarray:
    """Dirichlet(1) weights; with zero_prob > 0 some atoms are zeroed (at least one survives)"""
    weights = rng.dirichlet(np.ones(size))
    if zero_prob > 0:
        keep = rng.random(size) >= zero_prob
        if not keep.any():
            keep[rng.integers(size)] = True
        weights = np.where(keep, weights, 0.0)
        weights = weights / weights.sum()
    return weights


def random_instance(
    rng: np.random.Generator,
    min_size: int = 2,
    max_size: int = 20,
    full_support: bool = True,
    value_range: float = 10.0,
) -> Tuple[DiscreteMeasure, DiscreteMeasure, FiniteRV, float, float]:
    """
    Random (P, Q, X, u, v) on a space of size in [min_size, max_size]

    Args:
        rng: Generator the instance is drawn from
        min_size: Smallest space size
        max_size: Largest space size
        full_support: If False, atoms are zeroed with probability 0.2 per measure
        value_range: X, u, v are uniform on [-value_range, value_range]

    Returns:
        (P, Q, X, u, v)
    """
    if min_size < 1 or max_size < min_size:
        raise UsageError(f"invalid size range [{min_size}, {max_size}]")
    size = int(rng.integers(min_size, max_size + 1))
    zero_prob = 0.0 if full_support else 0.2
    P = DiscreteMeasure.from_probs(random_simplex(rng, size, zero_prob))
    Q = DiscreteMeasure.from_probs(random_simplex(rng, size, zero_prob))
    X = FiniteRV(rng.uniform(-value_range, value_range, size))
    u, v = (float(t) for t in rng.uniform(-value_range, value_range, 2))
    return P, Q, X, u, v
