"""
Run the inequality suites and the frontier sweep with the default settings
Exits with the worst status of the two runs (0 ok, 1 usage error, 2 violation).
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main as cli_main


def main(argv=None) -> int:
    extra = list(argv if argv is not None else sys.argv[1:])
    statuses = []
    for subcommand in ("check-inequalities", "frontier"):
        print(f"\n{'='*70}")
        print(f"RUNNING {subcommand}")
        print(f"{'='*70}")
        statuses.append(cli_main([subcommand, *extra]))
    worst = max(statuses)
    print(f"\n{'='*70}")
    print("[OK] All checks passed" if worst == 0 else f"[WARNING] Worst exit status: {worst}")
    print(f"{'='*70}")
    return worst


if __name__ == "__main__":
    sys.exit(main())
