"""
Constructive witnesses
The indicator witness for the likelihood-ratio bound, the conditional-mean
reduction that lowers MADs without moving means, the X ≡ v near-equality
example, and a randomized search for sharp instances of the MAD inequality.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, Iterable, List, Optional, Tuple

import numpy as np

from src.core.bounds import InequalityReport, check_lemma2, random_simplex
from src.core.errors import PreconditionError, UsageError
from src.core.measure import (
    DiscreteMeasure,
    FiniteRV,
    fsum_dot,
    hellinger_sq_discrete,
    lr_ratio_norms,
    require_shared_atoms,
)

logger = logging.getLogger(__name__)

WITNESS_TOL = 1e-12
MAX_SEARCH_SPACE = 50


def indicator_mean_mad(p: float) -> Tuple[float, float]:
    """Mean and mean-centered MAD of the indicator of an atom with mass p"""
    return p, 2.0 * p * (1.0 - p)


@dataclass(frozen=True)
class WitnessReport:
    """Outcome of the indicator construction for the likelihood-ratio bound"""

    witness: Optional[FiniteRV]
    selected_atom: Optional[int]
    literal_bound_holds: bool
    adjusted_bound_holds: bool
    vacuous: bool = False
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "witness": None if self.witness is None else self.witness.values.tolist(),
            "selected_atom": self.selected_atom,
            "literal_bound_holds": self.literal_bound_holds,
            "adjusted_bound_holds": self.adjusted_bound_holds,
            "vacuous": self.vacuous,
            "details": dict(self.details),
        }


def tightness_witness(P: DiscreteMeasure, Q: DiscreteMeasure, tol: float = WITNESS_TOL) -> WitnessReport:
    """
    Indicator of the atom maximizing |p_j - q_j|/(p_j ∨ q_j)

    The exact mean-centered MAD of an indicator is 2p(1-p). The bound as
    displayed, B = |p_j* - q_j*|/‖(p-q)/(p∨q)‖_∞ = p_j* ∨ q_j*, is checked
    literally and with the extra factor 2 (adjusted), and both outcomes are
    reported.

    Args:
        P: First measure
        Q: Second measure on the same atoms
        tol: Absolute tolerance of the comparisons

    Returns:
        WitnessReport (flagged vacuous when P = Q)
    """
    require_shared_atoms(P, Q)
    div = lr_ratio_norms(P, Q)
    if div.lr_max_norm == 0.0:
        return WitnessReport(
            witness=None,
            selected_atom=None,
            literal_bound_holds=True,
            adjusted_bound_holds=True,
            vacuous=True,
            details={"lr_max_norm": 0.0},
        )

    ratios = []
    for p, q in zip(P.probs.tolist(), Q.probs.tolist()):
        top = max(p, q)
        ratios.append(0.0 if top == 0.0 else abs(p - q) / top)
    j_star = int(np.argmax(ratios))  # first maximum: lowest index wins ties

    p, q = float(P.probs[j_star]), float(Q.probs[j_star])
    _, mad_p = indicator_mean_mad(p)
    _, mad_q = indicator_mean_mad(q)
    literal = abs(p - q) / ratios[j_star]
    adjusted = 2.0 * literal
    worst = max(mad_p, mad_q)
    return WitnessReport(
        witness=FiniteRV.indicator(j_star, P.size),
        selected_atom=j_star,
        literal_bound_holds=worst <= literal + tol,
        adjusted_bound_holds=worst <= adjusted + tol,
        details={
            "j_star": j_star,
            "atom": P.atoms[j_star],
            "p_j_star": p,
            "q_j_star": q,
            "mad_p": mad_p,
            "mad_q": mad_q,
            "lr_max_norm": ratios[j_star],
            "literal_bound": literal,
            "adjusted_bound": adjusted,
        },
    )


# ---------------------------------------------------------------------------
# Conditional-mean reduction


def _subset_indices(A: Iterable[Hashable], P: DiscreteMeasure) -> List[int]:
    return sorted({P.index_of(atom) for atom in A})


def _conditional_mean(measure: DiscreteMeasure, values: np.ndarray, idx: List[int]) -> Tuple[float, float]:
    mass = measure.mass(idx)
    if mass <= 0.0:
        return mass, math.nan
    return mass, fsum_dot(measure.probs[idx], values[idx]) / mass


def rao_blackwell_reduce(
    X: FiniteRV, A: Iterable[Hashable], P: DiscreteMeasure, Q: DiscreteMeasure, tol: float = WITNESS_TOL
) -> FiniteRV:
    """
    Replace X on the event A by its conditional mean

    Requires P(A) > 0, Q(A) > 0 and E_P[X | A] = E_Q[X | A] (within tol);
    the result keeps both means and does not increase either MAD.

    Args:
        X: Random variable aligned with the atoms
        A: Atoms forming the event
        P: First measure
        Q: Second measure on the same atoms
        tol: Relative tolerance for the conditional-mean match

    Returns:
        X' = X off A, E_P[X | A] on A
    """
    require_shared_atoms(P, Q)
    X.check_aligned(P)
    idx = _subset_indices(A, P)
    mass_p, cond_p = _conditional_mean(P, X.values, idx)
    mass_q, cond_q = _conditional_mean(Q, X.values, idx)
    if not idx or mass_p <= 0.0 or mass_q <= 0.0:
        raise PreconditionError(
            f"event must have positive probability under both measures (P(A)={mass_p}, Q(A)={mass_q})",
            detail={"p_mass": mass_p, "q_mass": mass_q},
        )
    if abs(cond_p - cond_q) > tol * max(1.0, abs(cond_p), abs(cond_q)):
        raise PreconditionError(
            f"conditional means differ: E_P[X|A]={cond_p!r}, E_Q[X|A]={cond_q!r}",
            detail={"p_conditional_mean": cond_p, "q_conditional_mean": cond_q},
        )
    values = X.values.copy()
    values[idx] = cond_p
    return FiniteRV(values)


@dataclass(frozen=True)
class RaoBlackwellReport:
    reduced: FiniteRV
    mean_p: Tuple[float, float]
    mean_q: Tuple[float, float]
    mad_p: Tuple[float, float]
    mad_q: Tuple[float, float]
    means_preserved: bool
    mad_nonincreasing: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reduced": self.reduced.values.tolist(),
            "mean_p": list(self.mean_p),
            "mean_q": list(self.mean_q),
            "mad_p": list(self.mad_p),
            "mad_q": list(self.mad_q),
            "means_preserved": self.means_preserved,
            "mad_nonincreasing": self.mad_nonincreasing,
        }


def rao_blackwell_report(
    X: FiniteRV, A: Iterable[Hashable], P: DiscreteMeasure, Q: DiscreteMeasure, tol: float = WITNESS_TOL
) -> RaoBlackwellReport:
    """Run the reduction and record means and MADs before and after"""
    reduced = rao_blackwell_reduce(X, A, P, Q, tol)
    before_p, after_p = P.expect(X), P.expect(reduced)
    before_q, after_q = Q.expect(X), Q.expect(reduced)
    mad_p = (P.mad(X, before_p), P.mad(reduced, after_p))
    mad_q = (Q.mad(X, before_q), Q.mad(reduced, after_q))

    def close(a: float, b: float) -> bool:
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))

    return RaoBlackwellReport(
        reduced=reduced,
        mean_p=(before_p, after_p),
        mean_q=(before_q, after_q),
        mad_p=mad_p,
        mad_q=mad_q,
        means_preserved=close(before_p, after_p) and close(before_q, after_q),
        mad_nonincreasing=mad_p[1] <= mad_p[0] + tol * max(1.0, mad_p[0])
        and mad_q[1] <= mad_q[0] + tol * max(1.0, mad_q[0]),
    )


def random_rao_blackwell_instance(
    rng: np.random.Generator, size: int
) -> Tuple[FiniteRV, Tuple[int, ...], DiscreteMeasure, DiscreteMeasure]:
    """
    Random valid (X, A, P, Q): A is drawn first, then X is projected on A so
    that the P- and Q-conditional means coincide

    Args:
        rng: Generator the instance is drawn from
        size: Number of atoms (at least 2)

    Returns:
        (X, A, P, Q) with A given as atom labels
    """
    if size < 2:
        raise UsageError(f"size must be at least 2, got {size}")
    P = DiscreteMeasure.from_probs(random_simplex(rng, size))
    Q = DiscreteMeasure.from_probs(random_simplex(rng, size))
    k = int(rng.integers(1, size + 1))
    idx = np.sort(rng.choice(size, size=k, replace=False))
    values = rng.uniform(-10.0, 10.0, size)

    w = P.probs[idx] / P.probs[idx].sum() - Q.probs[idx] / Q.probs[idx].sum()
    norm_sq = float(w @ w)
    if norm_sq > 0.0:
        values[idx] = values[idx] - (float(w @ values[idx]) / norm_sq) * w
    A = tuple(P.atoms[i] for i in idx.tolist())
    return FiniteRV(values), A, P, Q


# ---------------------------------------------------------------------------
# Near-equality example and randomized search


def near_tightness_example(P: DiscreteMeasure, Q: DiscreteMeasure, u: float, v: float) -> InequalityReport:
    """
    Evaluate the MAD inequality at X ≡ v

    The right side is |u - v| (attained under P) and the ratio rhs/lhs is
    5/(1 - H²)², so the inequality is sharp up to a constant while H < 1.
    """
    require_shared_atoms(P, Q)
    h_sq = hellinger_sq_discrete(P, Q)
    if h_sq >= 1.0:
        raise PreconditionError("near-equality needs H(P, Q) < 1", detail={"hellinger_sq": h_sq})
    report = check_lemma2(P, Q, FiniteRV.constant(v, P.size), u, v, name="near_tightness")
    ratio = report.rhs / report.lhs if report.lhs > 0 else math.inf
    context = dict(report.context, ratio=ratio, predicted_ratio=5.0 / (1.0 - h_sq) ** 2)
    return InequalityReport(
        name=report.name,
        lhs=report.lhs,
        rhs=report.rhs,
        slack=report.slack,
        holds=report.holds,
        tol=report.tol,
        context=context,
    )


@dataclass
class SearchInstance:
    p: np.ndarray
    q: np.ndarray
    x: np.ndarray
    u: float
    v: float

    def copy(self) -> "SearchInstance":
        return SearchInstance(self.p.copy(), self.q.copy(), self.x.copy(), self.u, self.v)

    def to_dict(self) -> Dict[str, Any]:
        return {"p": self.p.tolist(), "q": self.q.tolist(), "x": self.x.tolist(), "u": self.u, "v": self.v}


@dataclass(frozen=True)
class SearchResult:
    """Best instance found by tightness_search"""

    best: Dict[str, Any]
    best_ratio: float
    best_hellinger_sq: float
    best_restart: int
    trace: List[List[float]]
    max_ratio_seen: float
    evaluations: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best": self.best,
            "best_ratio": self.best_ratio,
            "best_hellinger_sq": self.best_hellinger_sq,
            "best_restart": self.best_restart,
            "trace": self.trace,
            "max_ratio_seen": self.max_ratio_seen,
            "evaluations": self.evaluations,
        }


def lemma2_ratio(inst: SearchInstance) -> Tuple[float, float]:
    """lhs/rhs of the MAD inequality (0 when both sides vanish) and H²"""
    P = DiscreteMeasure.from_probs(inst.p)
    Q = DiscreteMeasure.from_probs(inst.q)
    report = check_lemma2(P, Q, FiniteRV(inst.x), inst.u, inst.v)
    h_sq = report.context["hellinger_sq"]
    if report.rhs > 0:
        return report.lhs / report.rhs, h_sq
    return (0.0 if report.lhs == 0 else math.inf), h_sq


def _random_search_instance(rng: np.random.Generator, size: int) -> SearchInstance:
    return SearchInstance(
        p=random_simplex(rng, size),
        q=random_simplex(rng, size),
        x=rng.uniform(-10.0, 10.0, size),
        u=float(rng.uniform(-10.0, 10.0)),
        v=float(rng.uniform(-10.0, 10.0)),
    )


def _perturb(inst: SearchInstance, rng: np.random.Generator) -> SearchInstance:
    # One coordinate of (p, q, x, u, v), at a randomly chosen scale
    out = inst.copy()
    size = len(inst.p)
    scale = float(rng.choice([1.0, 0.1, 0.01]))
    coord = int(rng.integers(3 * size + 2))
    if coord < 2 * size:
        probs = out.p if coord < size else out.q
        j = coord % size
        probs[j] = max(0.0, probs[j] + 0.1 * scale * rng.standard_normal())
        if probs.sum() == 0.0:
            probs[j] = 1.0
        probs /= probs.sum()
    elif coord < 3 * size:
        out.x[coord - 2 * size] += 10.0 * scale * rng.standard_normal()
    elif coord == 3 * size:
        out.u += 10.0 * scale * rng.standard_normal()
    else:
        out.v += 10.0 * scale * rng.standard_normal()
    return out


def _search_restart(size: int, iterations: int, seed: int, restart: int):
    rng = np.random.default_rng([seed, restart])
    current = _random_search_instance(rng, size)
    best_ratio, best_h = lemma2_ratio(current)
    max_seen = best_ratio
    trace = [best_ratio]
    for _ in range(iterations):
        candidate = _perturb(current, rng)
        ratio, h_sq = lemma2_ratio(candidate)
        max_seen = max(max_seen, ratio)
        if ratio > best_ratio:
            current, best_ratio, best_h = candidate, ratio, h_sq
        trace.append(best_ratio)
    return current, best_ratio, best_h, trace, max_seen


def tightness_search(
    space_size: int,
    iterations: int,
    seed: int,
    restarts: int = 8,
    threads: int = 1,
) -> SearchResult:
    """
    Randomized hill climbing on lhs/rhs of the MAD inequality

    The iteration budget is split across independent restarts, each with an
    RNG stream derived from (seed, restart index); the best restart wins, ties
    going to the lowest index. The result depends only on the arguments, not
    on threads.

    Args:
        space_size: Number of atoms (2..50)
        iterations: Total number of perturbation steps
        seed: Base seed
        restarts: Number of restarts (reduced to the iteration count when smaller)
        threads: Worker cap for running restarts in parallel

    Returns:
        SearchResult with the best instance, its ratio and per-restart traces
    """
    if not 2 <= space_size <= MAX_SEARCH_SPACE:
        raise UsageError(f"space_size must lie in [2, {MAX_SEARCH_SPACE}], got {space_size}")
    if iterations < 0 or restarts < 1:
        raise UsageError(f"iterations must be >= 0 and restarts >= 1, got {iterations}, {restarts}")

    restarts = min(restarts, max(1, iterations))
    budgets = [iterations // restarts + (1 if r < iterations % restarts else 0) for r in range(restarts)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(lambda r: _search_restart(space_size, budgets[r], seed, r), range(restarts)))

    best_restart = 0
    for r, outcome in enumerate(outcomes):
        if outcome[1] > outcomes[best_restart][1]:
            best_restart = r
    best, ratio, h_sq, _, _ = outcomes[best_restart]
    max_seen = max(o[4] for o in outcomes)
    if max_seen > 1.0 + 1e-12:
        logger.warning("search found ratio %.17g > 1: the MAD inequality is violated", max_seen)
    logger.info("tightness search: best ratio %.6g (H²=%.4g) after %d iterations", ratio, h_sq, iterations)
    return SearchResult(
        best=best.to_dict(),
        best_ratio=ratio,
        best_hellinger_sq=h_sq,
        best_restart=best_restart,
        trace=[o[3] for o in outcomes],
        max_ratio_seen=max_seen,
        evaluations=iterations + restarts,
    )
