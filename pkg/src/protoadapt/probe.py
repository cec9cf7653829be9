"""Trainable linear probe: forward pass, analytic gradients, SGD with
momentum and cosine decay, post-step L2 projection, and the training loops
for the unconstrained (zero-shot-initialized) and constrained variants.

Full-batch gradient descent is the default; support sets stay small after
augmentation and full batch keeps determinism and gradient checks exact.
Support rows are put in a canonical order (label-major, then feature
lexicographic) before training so two orderings of the same support set
produce bitwise-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_TEMPERATURE_INV,
    EmbeddingSet,
    OneHotBatch,
    PrototypeBank,
    cross_entropy,
    l2_normalize_rows,
    softmax_scores,
)
from .errors import DegenerateVector, DomainError, NumericalError, ShapeError
from .penalty import (
    QUADRATIC,
    PenaltyState,
    _as_embedding_set,
    alm_outer_update,
    init_lambda_star,
    lambda_variants,
    penalty_gradient,
    penalty_value,
)

ZERO_SHOT_INIT = "zero_shot"
RANDOM_INIT = "random_gaussian"

FULL_BATCH = "full"

LAMBDA_VARIANTS = ("class_wise", "constant_one", "avg", "corrected")


@dataclass(frozen=True)
class PenaltySpec:
    """How the constrained objective builds its multiplier state."""

    kind: str = QUADRATIC  # quadratic | phr
    lambda_variant: str = "class_wise"
    lambda_override: float | None = None  # uniform multiplier, bypasses init
    rho_init: float = 1.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr0: float = 0.1
    momentum: float = 0.9
    batch_size: int | None = None  # None = full batch
    temperature_inv: float = DEFAULT_TEMPERATURE_INV
    project_unit_norm: bool = True
    init: str = ZERO_SHOT_INIT
    init_sigma: float = 0.01
    penalty: PenaltySpec | None = None
    outer_steps: int = 0  # 0 = unconstrained; 1 = single outer step; >1 = per-epoch
    penalty_mean_rescale: bool = False  # divide penalty term by M
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr0 < 0:
            raise DomainError(f"lr0 must be >= 0, got {self.lr0}")
        if not (0 <= self.momentum < 1):
            raise DomainError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.temperature_inv <= 0:
            raise DomainError(
                f"temperature_inv must be > 0, got {self.temperature_inv}"
            )
        if self.init not in (ZERO_SHOT_INIT, RANDOM_INIT):
            raise DomainError(f"unknown init {self.init!r}")
        if self.outer_steps < 0:
            raise DomainError(f"outer_steps must be >= 0, got {self.outer_steps}")
        if self.penalty is not None and self.penalty.lambda_variant not in LAMBDA_VARIANTS:
            raise DomainError(
                f"unknown lambda variant {self.penalty.lambda_variant!r}"
            )


@dataclass
class TrainTrace:
    """Per-epoch records of losses, learning rate, and prototype drift."""

    ce: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    drift: list[np.ndarray] = field(default_factory=list)  # per-class ||w_c - t_c||

    def __len__(self):
        return len(self.ce)

    @property
    def mean_drift(self) -> list[float]:
        return [float(d.mean()) for d in self.drift]

    def to_csv(self) -> str:
        lines = ["epoch,ce,penalty,total,lr,mean_drift"]
        for e in range(len(self)):
            lines.append(
                f"{e},{self.ce[e]!r},{self.penalty[e]!r},{self.total[e]!r},"
                f"{self.lr[e]!r},{float(self.drift[e].mean())!r}"
            )
        return "\n".join(lines) + "\n"


def cosine_lr(epoch: int, config: TrainConfig) -> float:
    """lr(e) = lr0 * (1 + cos(pi * e / epochs)) / 2."""
    if not (0 <= epoch < config.epochs):
        raise DomainError(
            f"epoch {epoch} out of range [0, {config.epochs})", epoch=epoch
        )
    return config.lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))


def probe_forward(bank: PrototypeBank, batch: EmbeddingSet) -> np.ndarray:
    """Row-wise softmax over temperature-scaled prototype similarities."""
    if batch.dim != bank.dim:
        raise ShapeError(f"batch dim {batch.dim} != bank dim {bank.dim}")
    logits = bank.temperature_inv * (batch.features @ bank.weights.T)
    return softmax_scores(logits)


def ce_gradient(
    bank: PrototypeBank, batch: EmbeddingSet, targets: OneHotBatch
) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the prototype matrix.

    dCE/dw_c = (temperature_inv / M) * sum_m (yhat_mc - y_mc) * v_m
    """
    probs = probe_forward(bank, batch)
    y = targets.targets
    if y.shape != probs.shape:
        raise ShapeError(f"targets shape {y.shape} != probs shape {probs.shape}")
    m = batch.n_samples
    return (bank.temperature_inv / m) * ((probs - y).T @ batch.features)


def sgd_step(
    bank: PrototypeBank,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
    project: bool,
) -> tuple[PrototypeBank, np.ndarray]:
    """One momentum-SGD step; the velocity buffer is never projected."""
    if grad.shape != bank.weights.shape or velocity.shape != bank.weights.shape:
        raise ShapeError("grad/velocity shape must match the prototype matrix")
    velocity = momentum * velocity + grad
    w = bank.weights - lr * velocity
    if project:
        norms = np.linalg.norm(w, axis=1)
        bad = np.flatnonzero(norms < 1e-12)
        if bad.size:
            raise DegenerateVector(
                f"prototype row {bad[0]} collapsed before projection",
                row=int(bad[0]),
            )
        w = l2_normalize_rows(w)
        return PrototypeBank(w, bank.temperature_inv, normalized=True), velocity
    return PrototypeBank(w, bank.temperature_inv, normalized=False), velocity


def drift_norms(bank: PrototypeBank, anchors: PrototypeBank) -> np.ndarray:
    """Per-class L2 distance between current and anchor prototypes."""
    if bank.weights.shape != anchors.weights.shape:
        raise ShapeError(
            f"bank shape {bank.weights.shape} != anchors shape "
            f"{anchors.weights.shape}"
        )
    return np.linalg.norm(bank.weights - anchors.weights, axis=1)


def _canonical_order(feats: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Label-major, then lexicographic over feature coordinates."""
    keys = tuple(feats[:, d] for d in reversed(range(feats.shape[1]))) + (labels,)
    return np.lexsort(keys)


def _build_multipliers(
    anchors: PrototypeBank, support, config: TrainConfig
) -> np.ndarray:
    spec = config.penalty
    if spec.lambda_override is not None:
        return np.full(anchors.n_classes, float(spec.lambda_override))
    lam_star = init_lambda_star(anchors, support)
    return lambda_variants(lam_star)[spec.lambda_variant]


def train_probe(
    anchors: PrototypeBank, support, config: TrainConfig
) -> tuple[PrototypeBank, TrainTrace]:
    """Train the linear probe on a support set.

    outer_steps=0 without a penalty is plain zero-shot-initialized linear
    probing; outer_steps=1 with a penalty fixes the multipliers once from
    zero-shot support confidence; outer_steps>1 re-runs the outer
    multiplier update after every epoch (PHR kind only).
    """
    if not anchors.normalized:
        raise DomainError("anchor bank must be normalized")
    data = _as_embedding_set(support)
    if data.dim != anchors.dim:
        raise ShapeError(f"support dim {data.dim} != anchors dim {anchors.dim}")
    feats = l2_normalize_rows(data.features)
    order = _canonical_order(feats, data.labels)
    feats = feats[order]
    labels = data.labels[order]
    batch = EmbeddingSet(feats, labels, data.n_classes)
    targets = OneHotBatch.from_labels(labels, data.n_classes)
    m = batch.n_samples

    rng = np.random.default_rng(config.seed)
    if config.init == ZERO_SHOT_INIT:
        w = anchors.weights.copy()
    else:
        w = rng.normal(0.0, config.init_sigma, size=anchors.weights.shape)
        w = l2_normalize_rows(w)
    bank = PrototypeBank(w, config.temperature_inv, normalized=True)

    pstate = None
    if config.penalty is not None and config.outer_steps >= 1:
        lam = _build_multipliers(anchors, batch, config)
        pstate = PenaltyState(
            lam,
            np.full(anchors.n_classes, config.penalty.rho_init),
            config.penalty.kind,
        )
    penalty_scale = (1.0 / m) if config.penalty_mean_rescale else 1.0

    velocity = np.zeros_like(bank.weights)
    trace = TrainTrace()
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config)
        if config.batch_size is None:
            slices = [np.arange(m)]
        else:
            perm = rng.permutation(m)
            slices = [
                perm[i : i + config.batch_size]
                for i in range(0, m, config.batch_size)
            ]
        for idx in slices:
            sub = EmbeddingSet(feats[idx], labels[idx], data.n_classes)
            sub_targets = OneHotBatch.from_labels(labels[idx], data.n_classes)
            grad = ce_gradient(bank, sub, sub_targets)
            if pstate is not None:
                grad = grad + penalty_scale * penalty_gradient(pstate, bank, anchors)
            bank, velocity = sgd_step(
                bank, grad, velocity, lr, config.momentum, config.project_unit_norm
            )
        ce = cross_entropy(probe_forward(bank, batch), targets)
        pen = (
            penalty_scale * penalty_value(pstate, bank, anchors)
            if pstate is not None
            else 0.0
        )
        total = ce + pen
        if not math.isfinite(total):
            raise NumericalError(
                f"loss became non-finite at epoch {epoch}", epoch=epoch
            )
        trace.ce.append(ce)
        trace.penalty.append(pen)
        trace.total.append(total)
        trace.lr.append(lr)
        trace.drift.append(drift_norms(bank, anchors))
        if pstate is not None and config.outer_steps > 1:
            pstate = alm_outer_update(pstate, bank, anchors, batch)
    return bank, trace
