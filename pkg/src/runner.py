"""
Subcommand runners
Each runner executes one subcommand for an effective RunConfig, writes its
reports and returns a RunOutcome whose exit status gates CI.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from src.config import RunConfig
from src.core.bounds import (
    InequalityReport,
    check_cauchy_schwarz_step,
    check_lemma1_variance,
    check_lemma2,
    check_lemma3_first,
    check_mad_below_sd,
    check_proof_chain,
    check_quadratic_chain,
    check_special_case_means,
    random_instance,
    random_simplex,
)
from src.core.errors import UsageError
from src.core.holder import bump_kernel
from src.core.measure import DiscreteMeasure, FiniteRV
from src.core.witness import (
    random_rao_blackwell_instance,
    rao_blackwell_report,
    tightness_search,
    tightness_witness,
)
from src.gwn.frontier import (
    FrontierSpec,
    build_family,
    kernel_constants,
    minimax_comparison,
    run_frontier_sweep,
)
from src.gwn.simulation import (
    GAUSSIAN_MAD_FACTOR,
    EstimatorSpec,
    SimConfig,
    exact_linear_risk,
    mc_risk_many,
)
from src.reporting import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2

MAX_RECORDED_VIOLATIONS = 50
GNUPLOT_TEMPLATE = Path(__file__).parent.parent / "templates" / "frontier.gp"

# Pinned two-point instance on which the literal likelihood-ratio MAD bound fails
LITERAL_COUNTEREXAMPLE = ((0.7, 0.3), (0.6, 0.4))


@dataclass
class RunOutcome:
    """Result of one subcommand run"""

    subcommand: str
    violations: int
    summary: Dict[str, Any] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    table: List[List[Any]] = field(default_factory=list)
    table_header: List[str] = field(default_factory=list)

    @property
    def exit_status(self) -> int:
        return EXIT_VIOLATION if self.violations else EXIT_OK


class CheckTally:
    """Per-inequality counts, worst slack and recorded violations"""

    def __init__(self):
        self.checks: Dict[str, Dict[str, Any]] = {}
        self.violations: List[Dict[str, Any]] = []
        self.violation_count = 0

    def add(self, report: InequalityReport, key: Optional[str] = None, instance: Optional[Callable[[], Dict]] = None):
        key = key or report.name
        entry = self.checks.setdefault(key, {"checked": 0, "violations": 0, "worst": None})
        entry["checked"] += 1
        if entry["worst"] is None or report.slack < entry["worst"]["slack"]:
            entry["worst"] = report.to_dict()
        if not report.holds:
            entry["violations"] += 1
            self.violation_count += 1
            if len(self.violations) < MAX_RECORDED_VIOLATIONS:
                record = {"check": key, "report": report.to_dict()}
                if instance is not None:
                    record["instance"] = instance()
                self.violations.append(record)

    def add_flag(self, key: str, holds: bool, detail: Dict[str, Any]):
        entry = self.checks.setdefault(key, {"checked": 0, "violations": 0, "worst": None})
        entry["checked"] += 1
        if not holds:
            entry["violations"] += 1
            self.violation_count += 1
            if entry["worst"] is None:
                entry["worst"] = detail
            if len(self.violations) < MAX_RECORDED_VIOLATIONS:
                self.violations.append({"check": key, "detail": detail})

    def rows(self) -> List[List[Any]]:
        rows = []
        for key in sorted(self.checks):
            entry = self.checks[key]
            worst = entry["worst"] or {}
            rows.append(
                [key, entry["checked"], entry["violations"], worst.get("lhs"), worst.get("rhs"), worst.get("slack"), worst.get("holds")]
            )
        return rows


CHECK_HEADER = ["name", "checked", "violations", "lhs", "rhs", "slack", "holds"]


def _instance_record(P: DiscreteMeasure, Q: DiscreteMeasure, X: FiniteRV, u: float, v: float) -> Callable[[], Dict]:
    return lambda: {"P": P.to_dict(), "Q": Q.to_dict(), "X": X.to_dict(), "u": u, "v": v}


def _two_point(p: float) -> DiscreteMeasure:
    return DiscreteMeasure.from_probs([p, 1.0 - p])


def run_check_inequalities(config: RunConfig, writer: ReportWriter) -> RunOutcome:
    """
    Randomized suites for the variance, MAD and likelihood-ratio inequalities

    Args:
        config: Effective configuration
        writer: Report writer for config.out_dir

    Returns:
        RunOutcome; every failed check counts as a violation
    """
    params = config.params
    trials = params["trials"]
    rng = np.random.default_rng(config.seed)
    tally = CheckTally()

    logger.info("checking %d full-support instances", trials)
    for _ in range(trials):
        P, Q, X, u, v = random_instance(rng, params["min_size"], params["max_size"])
        instance = _instance_record(P, Q, X, u, v)
        chain = check_proof_chain(P, Q, X, u, v)
        root, _ = check_quadratic_chain(chain.context["a"], chain.context["b"], chain.context["d"])
        for report in (
            check_lemma2(P, Q, X, u, v),
            check_cauchy_schwarz_step(P, Q, X, u, v),
            chain,
            root,
            check_special_case_means(P, Q, X),
            check_lemma1_variance(P, Q, X),
            check_lemma3_first(P, Q, X),
            check_mad_below_sd(P, X),
        ):
            tally.add(report, instance=instance)

    degenerate = max(1, trials // 10)
    logger.info("checking %d support-degenerate instances", degenerate)
    for _ in range(degenerate):
        P, Q, X, u, v = random_instance(rng, params["min_size"], params["max_size"], full_support=False)
        instance = _instance_record(P, Q, X, u, v)
        for report in (check_lemma2(P, Q, X, u, v), check_lemma1_variance(P, Q, X), check_lemma3_first(P, Q, X)):
            tally.add(report, key=f"{report.name}[degenerate]", instance=instance)

    for d in np.linspace(0.0, 1.0, params["d_grid"]):
        _, lower = check_quadratic_chain(0.0, 0.0, float(d))
        tally.add(lower)

    # Likelihood-ratio MAD bound: the factor-2 version always holds, the literal one does not
    include_literal = params["include_lemma3_literal"]
    literal_failures = 0
    grid = np.round(np.arange(1, 100) * 0.01, 2)
    for p in grid:
        for q in grid:
            witness = tightness_witness(_two_point(float(p)), _two_point(float(q)))
            tally.add_flag("lemma3_second_adjusted[two-point]", witness.adjusted_bound_holds, witness.to_dict())
            if not witness.literal_bound_holds:
                literal_failures += 1
            if include_literal:
                tally.add_flag("lemma3_second_literal[two-point]", witness.literal_bound_holds, witness.to_dict())
    for _ in range(trials):
        size = int(rng.integers(3, params["max_size"] + 1)) if params["max_size"] >= 3 else 3
        P = DiscreteMeasure.from_probs(random_simplex(rng, size))
        Q = DiscreteMeasure.from_probs(random_simplex(rng, size))
        witness = tightness_witness(P, Q)
        tally.add_flag("lemma3_second_adjusted[random]", witness.adjusted_bound_holds, witness.to_dict())

    (p_probs, q_probs) = LITERAL_COUNTEREXAMPLE
    pinned = tightness_witness(DiscreteMeasure.from_probs(p_probs), DiscreteMeasure.from_probs(q_probs))
    if include_literal:
        tally.add_flag("lemma3_second_literal[pinned]", pinned.literal_bound_holds, pinned.to_dict())

    summary = {
        "trials": trials,
        "degenerate_trials": degenerate,
        "checks": tally.checks,
        "violation_count": tally.violation_count,
        "violations": tally.violations,
        "lemma3_literal": {
            "included": include_literal,
            "two_point_failures": literal_failures,
            "two_point_instances": len(grid) ** 2,
            "pinned": pinned.to_dict(),
        },
    }
    outcome = RunOutcome("check-inequalities", tally.violation_count, summary, table=tally.rows(), table_header=CHECK_HEADER)
    outcome.files.append(writer.json("check_inequalities", summary))
    if config.format == "csv":
        outcome.files.append(writer.csv("check_inequalities", CHECK_HEADER, outcome.table))
    return outcome


def run_tightness_search(config: RunConfig, writer: ReportWriter) -> RunOutcome:
    params = config.params
    result = tightness_search(
        params["space_size"], params["iterations"], config.seed, restarts=params["restarts"], threads=config.threads
    )
    violations = 1 if result.max_ratio_seen > 1.0 + 1e-12 else 0
    summary = dict(result.to_dict(), space_size=params["space_size"], iterations=params["iterations"])
    header = ["restart", "step", "best_ratio"]
    rows = [[r, step, ratio] for r, trace in enumerate(result.trace) for step, ratio in enumerate(trace)]
    outcome = RunOutcome("tightness-search", violations, summary, table=rows, table_header=header)
    outcome.files.append(writer.json("tightness_search", summary))
    if config.format == "csv":
        outcome.files.append(writer.csv("tightness_search", header, rows))
    return outcome


def pinned_rao_blackwell_example():
    """Three atoms, X = (1, 2, 3), A = {1, 3}, P uniform, Q = (1/4, 1/2, 1/4)"""
    P = DiscreteMeasure.from_probs([1.0 / 3.0] * 3)
    Q = DiscreteMeasure.from_probs([0.25, 0.5, 0.25])
    return FiniteRV(np.array([1.0, 2.0, 3.0])), (1, 3), P, Q


def run_rao_blackwell(config: RunConfig, writer: ReportWriter) -> RunOutcome:
    params = config.params
    rng = np.random.default_rng(config.seed)
    tally = CheckTally()
    header = ["trial", "size", "mean_p_before", "mean_p_after", "mad_p_before", "mad_p_after", "mad_q_before", "mad_q_after"]
    rows = []
    max_mean_drift = 0.0
    strict_decreases = 0
    for trial in range(params["trials"]):
        X, A, P, Q = random_rao_blackwell_instance(rng, params["size"])
        report = rao_blackwell_report(X, A, P, Q)
        detail = {"A": list(A), "P": P.to_dict(), "Q": Q.to_dict(), "X": X.to_dict(), "report": report.to_dict()}
        tally.add_flag("means_preserved", report.means_preserved, detail)
        tally.add_flag("mad_nonincreasing", report.mad_nonincreasing, detail)
        max_mean_drift = max(
            max_mean_drift, abs(report.mean_p[1] - report.mean_p[0]), abs(report.mean_q[1] - report.mean_q[0])
        )
        if report.mad_p[1] < report.mad_p[0] or report.mad_q[1] < report.mad_q[0]:
            strict_decreases += 1
        rows.append([trial, params["size"], *report.mean_p, *report.mad_p, *report.mad_q])

    pinned = rao_blackwell_report(*pinned_rao_blackwell_example())
    summary = {
        "trials": params["trials"],
        "size": params["size"],
        "checks": tally.checks,
        "violation_count": tally.violation_count,
        "violations": tally.violations,
        "max_mean_drift": max_mean_drift,
        "strict_decreases": strict_decreases,
        "pinned": pinned.to_dict(),
    }
    outcome = RunOutcome("rao-blackwell", tally.violation_count, summary, table=rows, table_header=header)
    outcome.files.append(writer.json("rao_blackwell", summary))
    if config.format == "csv":
        outcome.files.append(writer.csv("rao_blackwell", header, rows))
    return outcome


def _frontier_spec(params: Dict[str, Any]) -> FrontierSpec:
    return FrontierSpec(
        beta=params["beta"], R=params["R"], C=params["C"], kernel=bump_kernel(params["beta"]), x0=params["x0"]
    )


def gaussian_identity_check(mad: float, mad_se: float, variance: float, variance_se: float) -> Dict[str, Any]:
    """
    MAD/√Var against √(2/π), with a delta-method standard error of the ratio

    Returns:
        Dict with ratio, se and holds (None when standard errors are unavailable)
    """
    ratio = mad / math.sqrt(variance)
    if math.isnan(mad_se) or math.isnan(variance_se):
        return {"ratio": ratio, "se": None, "holds": None}
    se = ratio * math.sqrt((mad_se / mad) ** 2 + (variance_se / (2.0 * variance)) ** 2)
    return {"ratio": ratio, "se": se, "holds": abs(ratio - GAUSSIAN_MAD_FACTOR) <= 4.0 * se}


GWN_HEADER = [
    "estimator", "f", "n", "h", "bias", "bias_se", "mad_mean", "mad_mean_se",
    "mad_median", "mad_median_se", "variance", "variance_se", "exact_bias", "exact_mad",
]


def run_gwn_experiment(config: RunConfig, writer: ReportWriter) -> RunOutcome:
    """Monte Carlo risk of the kernel estimators over the lower-bound family, against exact values"""
    params = config.params
    spec = _frontier_spec(params)
    cfg = SimConfig(n=params["n"], m=params["m"], replicates=params["replicates"], seed=config.seed)
    family = build_family(spec, cfg.n, cfg.m)

    estimators = []
    for kappa in params["bandwidths"]:
        h = spec.bandwidth(cfg.n, kappa)
        if h < 1.0 / cfg.m:
            logger.warning("skipping multiplier %g: bandwidth %.3g is below the bin width", kappa, h)
            continue
        estimators.append(EstimatorSpec.linear_kernel(spec.x0, h, spec.kernel, cfg.m, name=f"kernel_k={kappa:g}"))
    if not estimators:
        raise UsageError("no bandwidth in the grid is at least one bin wide")

    tally = CheckTally()
    rows = []
    identity = {}
    for key, f in family.items():
        logger.info("simulating %d replicates at %s", cfg.replicates, key)
        risks = mc_risk_many(estimators, f, cfg, threads=config.threads)
        for est, risk in zip(estimators, risks):
            exact = exact_linear_risk(est, f, cfg)
            rows.append(
                [
                    est.name, key, cfg.n, est.h, risk.bias, risk.bias_se, risk.mad_mean, risk.mad_mean_se,
                    risk.mad_median, risk.mad_median_se, risk.variance, risk.variance_se, exact.bias, exact.mad_mean,
                ]
            )
            check = gaussian_identity_check(risk.mad_mean, risk.mad_mean_se, risk.variance, risk.variance_se)
            identity.setdefault(est.name, {})[key] = check
            if check["holds"] is not None:
                tally.add_flag("gaussian_mad_identity", check["holds"], dict(check, estimator=est.name, member=key))

    summary = {
        "sim": cfg.to_dict(),
        "spec": spec.to_dict(),
        "gaussian_mad_factor": GAUSSIAN_MAD_FACTOR,
        "gaussian_mad_identity": identity,
        "checks": tally.checks,
        "violation_count": tally.violation_count,
        "violations": tally.violations,
    }
    outcome = RunOutcome("gwn-experiment", tally.violation_count, summary, table=rows, table_header=GWN_HEADER)
    outcome.files.append(writer.json("gwn_experiment", summary))
    if config.format == "csv":
        outcome.files.append(writer.csv("gwn_experiment", GWN_HEADER, rows))
    return outcome


FRONTIER_HEADER = [
    "n", "multiplier", "h", "sup_bias", "sup_median_bias", "sup_mad_mean", "sup_mad_median",
    "sup_abs_risk", "bias_budget", "mad_lower", "compliant", "frontier_holds", "lemma2_min_slack",
]


def render_gnuplot(csv_name: str, c: float, C: float, exponent: float) -> str:
    """Fill the gnuplot script template for the frontier scatter"""
    template = Template(GNUPLOT_TEMPLATE.read_text(encoding="utf-8"))
    return template.substitute(
        csv=csv_name,
        c=format(c, ".17g"),
        C=format(C, ".17g"),
        exponent=format(exponent, ".17g"),
    )


def run_frontier(config: RunConfig, writer: ReportWriter) -> RunOutcome:
    """
    Frontier sweep over n plus the minimax comparison

    Args:
        config: Effective configuration
        writer: Report writer for config.out_dir

    Returns:
        RunOutcome; frontier, adversarial-gap, MAD-inequality and minimax-display failures are violations
    """
    params = config.params
    if not params["n_list"]:
        raise UsageError("n_list must not be empty")
    if params["method"] not in ("exact", "mc"):
        raise UsageError(f"method must be exact or mc, got {params['method']!r}")
    spec = _frontier_spec(params)
    cfg = SimConfig(n=params["n_list"][0], m=params["m"], replicates=params["replicates"], seed=config.seed)
    sweep = run_frontier_sweep(
        spec, cfg, params["bandwidths"], params["n_list"], method=params["method"], threads=config.threads
    )
    minimax = minimax_comparison(spec, sweep.experiments)

    violations = list(sweep.violations)
    for row in minimax:
        if not row.displays_hold:
            violations.append({"check": "minimax_displays", "n": row.n, "multiplier": row.multiplier})

    rows = []
    for exp in sweep.experiments:
        for r in exp.rows:
            rows.append(
                [
                    r.n, r.multiplier, r.h, r.sup_bias, r.family.sup_median_bias, r.sup_mad_mean, r.sup_mad_median,
                    r.family.sup_abs_risk, exp.point.bias_budget, exp.point.mad_lower, r.compliant, r.frontier_holds,
                    min(rep.slack for rep in r.lemma2_reports),
                ]
            )

    summary = dict(sweep.to_dict())
    summary["violations"] = violations
    summary["spec"] = spec.to_dict()
    summary["method"] = params["method"]
    summary["minimax"] = [row.to_dict() for row in minimax]
    summary["uninformative_minimax_cells"] = sum(1 for row in minimax if row.minimax_lower == 0.0)

    outcome = RunOutcome("frontier", len(violations), summary, table=rows, table_header=FRONTIER_HEADER)
    outcome.files.append(writer.csv("frontier", FRONTIER_HEADER, rows))
    outcome.files.append(writer.json("frontier_summary", summary))
    if params["gnuplot"]:
        script = render_gnuplot("frontier.csv", sweep.constants.c, spec.C, spec.rate_exponent)
        outcome.files.append(writer.text("frontier.gp", script))
    return outcome


def run_kernel_constants(config: RunConfig, writer: ReportWriter) -> RunOutcome:
    constants = kernel_constants(_frontier_spec(config.params))
    rows = [[key, constants[key]] for key in sorted(constants)]
    outcome = RunOutcome("kernel-constants", 0, constants, table=rows, table_header=["name", "value"])
    outcome.files.append(writer.json("kernel_constants", constants))
    if config.format == "csv":
        outcome.files.append(writer.csv("kernel_constants", ["name", "value"], rows))
    return outcome


RUNNERS: Dict[str, Callable[[RunConfig, ReportWriter], RunOutcome]] = {
    "check-inequalities": run_check_inequalities,
    "tightness-search": run_tightness_search,
    "rao-blackwell": run_rao_blackwell,
    "gwn-experiment": run_gwn_experiment,
    "frontier": run_frontier,
    "kernel-constants": run_kernel_constants,
}


def run(config: RunConfig) -> RunOutcome:
    """
    Execute a subcommand and write its outputs atomically into config.out_dir

    The effective configuration is written next to the reports as
    effective_config.yaml so the run can be reproduced.

    Args:
        config: Effective configuration

    Returns:
        RunOutcome
    """
    runner = RUNNERS.get(config.subcommand)
    if runner is None:
        raise UsageError(f"unknown subcommand {config.subcommand!r}")
    writer = ReportWriter(config.out_dir, config.meta())
    logger.info("running %s (seed=%d, config %s)", config.subcommand, config.seed, config.config_hash()[:12])
    outcome = runner(config, writer)
    outcome.files.append(writer.text("effective_config.yaml", config.to_yaml()))
    if outcome.violations:
        logger.warning("%s found %d violation(s)", config.subcommand, outcome.violations)
    return outcome
