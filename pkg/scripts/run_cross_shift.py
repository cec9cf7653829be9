#!/usr/bin/env python3
"""Hyperparameter-transfer matrix between the bundled tasks.

For each row task, the best grid point is picked with oracle test access
(deliberately unrealistic); the matrix reports how those choices transfer
to every column task, as gains over the plain zero-shot-initialized probe.
"""

import sys

from protoadapt.cli import main

GRID = (
    '[{"lambda_override": 0.1}, {"lambda_override": 1.0},'
    ' {"lambda_override": 10.0}, {"lambda_variant": "class_wise"}]'
)

DEFAULTS = [
    "crossshift",
    "--tasks", "default,noisy,noisy-shifted",
    "--method", "clap",
    "--grid", GRID,
    "--shots", "4",
    "--seeds", "1,2,3",
    "--heatmap",
    "-o", "out/crossshift",
]

if __name__ == "__main__":
    sys.exit(main(DEFAULTS + sys.argv[1:]))
