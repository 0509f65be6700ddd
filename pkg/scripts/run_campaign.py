"""Run a Monte Carlo campaign and print the RMS summary.

    python scripts/run_campaign.py out/ --cases 100 --seed 0 [--single] [--config run.toml]

Equivalent to ``python -m evrate campaign``; kept as a plain script for
batch jobs.
"""

import sys

from evrate.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if argv and not argv[0].startswith("-"):
        argv = ["--out", argv[0], *argv[1:]]
    sys.exit(main(["campaign", *argv]))
