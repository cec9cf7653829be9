#!/usr/bin/env python3
"""Full few-shot benchmark sweep over the bundled synthetic tasks.

Writes results.csv and summary.json under out/bench. Pass extra CLI flags
through, e.g. ``python scripts/run_benchmark.py --seeds 1,2,3,4,5``.
"""

import sys

from protoadapt.cli import main

DEFAULTS = [
    "bench",
    "--tasks", "default,noisy",
    "--methods", "zeroshot,zslp,clap,clap-const1,clap-avg,clap-corr,"
                 "clap-fullalm,randlp,tipadapter",
    "--shots", "1,2,4,8,16",
    "--seeds", "1,2,3",
    "-o", "out/bench",
]

if __name__ == "__main__":
    sys.exit(main(DEFAULTS + sys.argv[1:]))
