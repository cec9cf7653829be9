"""Core value types and softmax / cross-entropy primitives.

All math is done in float64 internally even though feature files store
float32: the finite-difference gradient tests need the headroom. Matrices
are row-major, classes-by-dimensions (C x D), everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVector, DomainError, NumericalError, ShapeError

# Fixed, documented constants so tests are reproducible.
LOG_CLAMP = 1e-12
NORM_EPS = 1e-12
DEFAULT_TEMPERATURE_INV = 100.0


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Return ``m`` with each row scaled to unit L2 norm.

    Rows whose norm is already within 1e-9 of 1 are returned untouched,
    which makes the operation bitwise idempotent.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return l2_normalize_rows(m[None, :])[0]
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(norms < NORM_EPS)
    if bad.size:
        raise DegenerateVector(
            f"row {bad[0]} has norm {norms[bad[0]]:.3e} < {NORM_EPS}", row=int(bad[0])
        )
    norms = np.where(np.abs(norms - 1.0) <= 1e-9, 1.0, norms)
    return m / norms[:, None]


def softmax_scores(logits: np.ndarray) -> np.ndarray:
    """Stable softmax (max-subtraction) over the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite logits passed to softmax")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True)
class OneHotBatch:
    """M x C matrix of one-hot targets; each row sums to exactly 1."""

    targets: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if t.ndim != 2:
            raise ShapeError(f"targets must be 2-D, got ndim={t.ndim}")
        if not np.all(np.isin(t, (0.0, 1.0))) or not np.all(t.sum(axis=1) == 1.0):
            raise ShapeError("each target row must be one-hot")
        object.__setattr__(self, "targets", t)

    @classmethod
    def from_labels(cls, labels: np.ndarray, n_classes: int) -> "OneHotBatch":
        labels = np.asarray(labels, dtype=np.int64)
        t = np.zeros((labels.shape[0], n_classes))
        t[np.arange(labels.shape[0]), labels] = 1.0
        return cls(t)


def cross_entropy(probs: np.ndarray, targets: OneHotBatch) -> float:
    """Mean cross-entropy over the batch, log argument clamped at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    y = targets.targets
    if probs.shape != y.shape:
        raise ShapeError(f"probs shape {probs.shape} != targets shape {y.shape}")
    logp = np.log(np.maximum(probs, LOG_CLAMP))
    return float(-np.mean(np.sum(y * logp, axis=1)))


@dataclass(frozen=True)
class EmbeddingSet:
    """Row-major M x D feature matrix with integer labels in [0, C).

    ``views`` tags each row with an augmentation id (0 = original base
    sample); rows belonging to one base sample are contiguous and start
    with the view-0 row. ``parent_class_ids`` optionally maps each local
    class index to a class index in a larger parent label space (used for
    class-subset evaluation targets).
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    views: np.ndarray | None = None
    class_names: tuple[str, ...] | None = None
    parent_class_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or f.shape[0] == 0 or f.shape[1] == 0:
            raise ShapeError(f"features must be a non-empty 2-D matrix, got {f.shape}")
        if lab.shape != (f.shape[0],):
            raise ShapeError(f"labels shape {lab.shape} != ({f.shape[0]},)")
        if not np.all(np.isfinite(f)):
            raise NumericalError("non-finite feature values")
        if lab.size and (lab.min() < 0 or lab.max() >= self.n_classes):
            raise ShapeError(
                f"labels must lie in [0, {self.n_classes}), got range "
                f"[{lab.min()}, {lab.max()}]"
            )
        v = self.views
        if v is not None:
            v = np.asarray(v, dtype=np.int64)
            if v.shape != lab.shape:
                raise ShapeError("views must align with labels")
        f.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "views", v)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def base_mask(self) -> np.ndarray:
        """Boolean mask of view-0 (original, non-augmented) rows."""
        if self.views is None:
            return np.ones(self.n_samples, dtype=bool)
        return self.views == 0


@dataclass(frozen=True)
class PrototypeBank:
    """C x D prototype matrix with a logit scale (1/tau)."""

    weights: np.ndarray
    temperature_inv: float = DEFAULT_TEMPERATURE_INV
    normalized: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got ndim={w.ndim}")
        if self.temperature_inv <= 0:
            raise DomainError(
                f"temperature_inv must be > 0, got {self.temperature_inv}"
            )
        if self.normalized:
            norms = np.linalg.norm(w, axis=1)
            if not np.all(np.abs(norms - 1.0) <= 1e-6):
                raise ShapeError("normalized flag set but rows are not unit-norm")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def renormalized(self) -> "PrototypeBank":
        return PrototypeBank(
            l2_normalize_rows(self.weights), self.temperature_inv, normalized=True
        )
