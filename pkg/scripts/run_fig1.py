"""fig1: online and offline training on four line points, with eMMSE and the closed form.

Usage: python scripts/run_fig1.py [--seed S] [--out-dir DIR] [--threads T] [--budget-scale X]
"""

import sys

from shallow_denoisers.cli import main

if __name__ == "__main__":
    sys.exit(main(["builtin", "fig1", *sys.argv[1:]]))
