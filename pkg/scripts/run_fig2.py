"""fig2: obtuse and equilateral triangles over three seeds, plus the equilateral cost run.

Usage: python scripts/run_fig2.py [--seed S] [--out-dir DIR] [--threads T] [--budget-scale X]
"""

import sys

from shallow_denoisers.cli import main

if __name__ == "__main__":
    sys.exit(main(["builtin", "fig2", *sys.argv[1:]]))
