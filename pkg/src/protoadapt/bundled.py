"""Bundled synthetic task specs so every protocol runs with zero external data."""

from __future__ import annotations

from dataclasses import replace

from .data import RANDOM_UNIT, Rotate, SyntheticTaskSpec
from .errors import DomainError
from .harness import TaskSpec

# Easy 5-class task used by CLI smoke runs and the anchor-pinning checks.
DEFAULT_SYNTHETIC = SyntheticTaskSpec(
    n_classes=5,
    dim=32,
    geometry="orthogonal",
    sigma=0.4,
    n_support_per_class=32,
    n_test_per_class=100,
    n_views=20,
    seed=7,
)

# Harder benchmark: overlapping classes, good anchors. Stand-in for the
# low-shot regime where constrained training should help.
NOISY_BENCHMARK = SyntheticTaskSpec(
    n_classes=10,
    dim=64,
    geometry=RANDOM_UNIT,
    min_pairwise_angle_deg=60.0,
    sigma=0.35,
    n_support_per_class=32,
    n_test_per_class=100,
    n_views=20,
    seed=11,
)

# Domain-shift target: the noisy benchmark viewed through a 20-degree
# blockwise rotation of the embedding space.
NOISY_SHIFTED = replace(NOISY_BENCHMARK, shift=Rotate(20.0))

BUNDLED = {
    "default": DEFAULT_SYNTHETIC,
    "noisy": NOISY_BENCHMARK,
    "noisy-shifted": NOISY_SHIFTED,
}


def bundled_task(name: str) -> TaskSpec:
    if name not in BUNDLED:
        raise DomainError(
            f"unknown bundled task {name!r}; choose from {sorted(BUNDLED)}",
            name=name,
        )
    return TaskSpec(name=name, synthetic=BUNDLED[name])
