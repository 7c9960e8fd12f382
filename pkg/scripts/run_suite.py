"""All property suites (minimal representation, contractivity, interpolation, gradients, MSE ordering, moments, marginalized loss).

Usage: python scripts/run_suite.py [--seed S] [--out-dir DIR] [--threads T] [--budget-scale X]
"""

import sys

from shallow_denoisers.cli import main

if __name__ == "__main__":
    sys.exit(main(["builtin", "suite", *sys.argv[1:]]))
