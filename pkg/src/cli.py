"""
Command-line interface
Subcommands for the inequality suites, the tightness search, the
conditional-mean reduction, the white-noise experiment, the frontier sweep
and the kernel constants. Exit status: 0 success, 1 usage error, 2 violation.
"""

import sys
from pathlib import Path

# Add parent directory to path for imports when running as script
if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).parent.parent))

import functools
import logging
from typing import Any, Callable, List, Optional, Sequence

import click

from src import __version__
from src.config import FORMATS, LOG_LEVELS, load_config
from src.core.errors import BiasMadError
from src.runner import EXIT_USAGE, RunOutcome, run

RULE = "=" * 70


def _float_list(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        items = [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")
    if not items:
        raise click.BadParameter("list must not be empty")
    return items


def common_options(func: Callable) -> Callable:
    """Options shared by every subcommand; unset options leave file/env values in place"""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="YAML settings file (default: config/settings.yaml)"),
        click.option("--seed", type=int, default=None, help="Base seed (default 0)"),
        click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Output directory (default output)"),
        click.option("--format", "fmt", type=click.Choice(FORMATS), default=None, help="Report format (default json)"),
        click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker cap (default 1)"),
        click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None,
                     help="Logging level (default INFO)"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _echo_outcome(outcome: RunOutcome, title: str) -> None:
    click.echo(RULE)
    click.echo(title)
    click.echo(RULE)
    if outcome.table_header and outcome.subcommand in ("check-inequalities", "kernel-constants"):
        widths = [max(len(str(h)), 12) for h in outcome.table_header]
        click.echo("  ".join(str(h).ljust(w) for h, w in zip(outcome.table_header, widths)))
        for row in outcome.table:
            cells = [f"{v:.6g}" if isinstance(v, float) else str(v) for v in row]
            click.echo("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    for path in outcome.files:
        click.echo(f"[OK] Wrote {path}")
    if outcome.violations:
        click.echo(f"[VIOLATION] {outcome.violations} violation(s) found")
    else:
        click.echo("[OK] No violations")
    click.echo(RULE)


def _execute(subcommand: str, title: str, config_path: Optional[str], run_options: dict, params: dict) -> int:
    config = load_config(config_path, subcommand)
    config.override(**{**run_options, **params})
    logging.basicConfig(
        level=getattr(logging, config.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    outcome = run(config)
    _echo_outcome(outcome, title)
    return outcome.exit_status


def subcommand(name: str, title: str):
    """Register a subcommand whose keyword options become config overrides"""

    def decorator(func: Callable[..., dict]) -> Callable:
        @cli.command(name=name, help=func.__doc__)
        @common_options
        @functools.wraps(func)
        def command(config_path, seed, out_dir, fmt, threads, log_level, **kwargs):
            params = func(**kwargs)
            run_options = {
                "seed": seed,
                "out_dir": out_dir,
                "format": fmt,
                "threads": threads,
                "log_level": log_level.upper() if log_level else None,
            }
            return _execute(name, title, config_path, run_options, params)

        return command

    return decorator


@click.group()
@click.version_option(__version__, prog_name="biasmad")
def cli():
    """Numerical verification of bias/MAD trade-off inequalities"""


@subcommand("check-inequalities", "INEQUALITY SUITES")
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Random instances (default 10000)")
@click.option("--min-size", type=click.IntRange(min=1), default=None, help="Smallest space size (default 2)")
@click.option("--max-size", type=click.IntRange(min=1), default=None, help="Largest space size (default 20)")
@click.option("--d-grid", type=click.IntRange(min=2), default=None, help="Points of the d-grid (default 10000)")
@click.option("--include-lemma3-literal/--no-include-lemma3-literal", default=None,
              help="Also check the literal likelihood-ratio MAD bound (fails on a pinned instance)")
def check_inequalities(trials, min_size, max_size, d_grid, include_lemma3_literal):
    """Randomized checks of the variance, MAD and likelihood-ratio inequalities"""
    return {
        "trials": trials,
        "min_size": min_size,
        "max_size": max_size,
        "d_grid": d_grid,
        "include_lemma3_literal": include_lemma3_literal,
    }


@subcommand("tightness-search", "TIGHTNESS SEARCH")
@click.option("--space-size", type=click.IntRange(min=2, max=50), default=None, help="Number of atoms (default 4)")
@click.option("--iterations", type=click.IntRange(min=0), default=None, help="Perturbation steps (default 2000)")
@click.option("--restarts", type=click.IntRange(min=1), default=None, help="Independent restarts (default 8)")
def tightness_search_command(space_size, iterations, restarts):
    """Random search for instances where the MAD inequality is nearly tight"""
    return {"space_size": space_size, "iterations": iterations, "restarts": restarts}


@subcommand("rao-blackwell", "CONDITIONAL-MEAN REDUCTION")
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Random instances (default 1000)")
@click.option("--size", type=click.IntRange(min=2), default=None, help="Number of atoms (default 6)")
def rao_blackwell_command(trials, size):
    """Check that the conditional-mean reduction keeps means and lowers MADs"""
    return {"trials": trials, "size": size}


def _model_options(func: Callable) -> Callable:
    for option in reversed(
        [
            click.option("--beta", type=float, default=None, help="Hölder smoothness (default 1)"),
            click.option("--R", "R", type=float, default=None, help="Hölder radius (default 1)"),
            click.option("--C", "C", type=float, default=None, help="Bias constant (default 1)"),
            click.option("--x0", type=float, default=None, help="Estimation point (default 0.5)"),
        ]
    ):
        func = option(func)
    return func


@subcommand("gwn-experiment", "WHITE-NOISE EXPERIMENT")
@_model_options
@click.option("--n", type=float, default=None, help="Noise level n (default 4096)")
@click.option("--m", type=click.IntRange(min=2), default=None, help="Bins (default 1024)")
@click.option("--replicates", type=click.IntRange(min=1), default=None, help="Monte Carlo replicates (default 10000)")
@click.option("--bandwidths", callback=_float_list, default=None,
              help="Comma-separated multipliers κ, h = κ·n^(-1/(2β+1))")
def gwn_experiment_command(beta, R, C, x0, n, m, replicates, bandwidths):
    """Monte Carlo risk of kernel estimators against their exact Gaussian risk"""
    return {"beta": beta, "R": R, "C": C, "x0": x0, "n": n, "m": m, "replicates": replicates, "bandwidths": bandwidths}


@subcommand("frontier", "BIAS/MAD FRONTIER")
@_model_options
@click.option("--n-list", callback=_float_list, default=None, help="Comma-separated n values (default 2^10..2^16)")
@click.option("--m", type=click.IntRange(min=2), default=None, help="Bins (default 1024)")
@click.option("--bandwidths", callback=_float_list, default=None,
              help="Comma-separated multipliers κ, h = κ·n^(-1/(2β+1))")
@click.option("--method", type=click.Choice(["exact", "mc"]), default=None, help="Risk evaluation (default exact)")
@click.option("--replicates", type=click.IntRange(min=1), default=None, help="Replicates for --method mc (default 2000)")
@click.option("--gnuplot/--no-gnuplot", default=None, help="Also write a gnuplot script")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Alias of --out-dir")
def frontier_command(beta, R, C, x0, n_list, m, bandwidths, method, replicates, gnuplot, out):
    """Bias-compliant kernel estimators against the MAD floor over an n-sweep"""
    params = {
        "beta": beta, "R": R, "C": C, "x0": x0, "n_list": n_list, "m": m,
        "bandwidths": bandwidths, "method": method, "replicates": replicates, "gnuplot": gnuplot,
    }
    if out is not None:
        params["out_dir"] = out
    return params


@subcommand("kernel-constants", "KERNEL CONSTANTS")
@_model_options
def kernel_constants_command(beta, R, C, x0):
    """Print ‖K‖₂², the Hölder norm of the kernel, V, c and N"""
    return {"beta": beta, "R": R, "C": C, "x0": x0}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit status instead of exiting

    Args:
        argv: Arguments without the program name (default sys.argv[1:])

    Returns:
        0 on success, 1 on usage or configuration errors, 2 on violations
    """
    try:
        result: Any = cli.main(args=list(argv) if argv is not None else None, prog_name="biasmad", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo("Aborted", err=True)
        return EXIT_USAGE
    except BiasMadError as e:
        click.echo(f"[ERROR] {e}", err=True)
        return EXIT_USAGE
    except OSError as e:
        click.echo(f"[ERROR] cannot write outputs: {e}", err=True)
        return EXIT_USAGE
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
