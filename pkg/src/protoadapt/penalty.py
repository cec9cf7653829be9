"""Penalty-Lagrangian machinery: PHR and quadratic penalties, per-class
multiplier state, confidence-based multiplier initialization, and the
outer-step multiplier/parameter update.

Two readings of the vector-argument penalty P(t_c - w_c, rho_c, lambda_c)
are implemented:

* ``quadratic``: lambda_c * ||t_c - w_c||^2 (rho unused). Default for
  single-outer-step constrained training, where rho never acts.
* ``phr``: the PHR function applied elementwise over embedding dimensions
  and summed. Used for the full-outer-loop variant, where the multiplier
  update needs a well-defined derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingSet, PrototypeBank, l2_normalize_rows, softmax_scores
from .errors import DomainError, MissingClass, ShapeError, UnsupportedKind

QUADRATIC = "quadratic"
PHR = "phr"

# Multiplier clamp keeps lambda > 0 after a fully-satisfied constraint
# collapses the PHR derivative to zero.
LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1e6


def phr(z: float, rho: float, lam: float) -> float:
    """PHR penalty: lam*z + rho*z^2/2 if lam + rho*z >= 0, else -lam^2/(2*rho)."""
    _check_rho_lambda(rho, lam)
    if lam + rho * z >= 0:
        return lam * z + 0.5 * rho * z * z
    return -(lam * lam) / (2.0 * rho)


def phr_derivative(z: float, rho: float, lam: float) -> float:
    """d/dz of the PHR penalty: max(lam + rho*z, 0). Equals lam at z=0."""
    _check_rho_lambda(rho, lam)
    return max(lam + rho * z, 0.0)


def _check_rho_lambda(rho, lam):
    if rho <= 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    if lam <= 0:
        raise DomainError(f"lambda must be > 0, got {lam}")


@dataclass(frozen=True)
class PenaltyState:
    """Per-class multipliers and penalty parameters.

    lambdas may be exactly zero (e.g. to switch the penalty off for
    reduction checks); PHR-kind operations additionally require them to be
    strictly positive. ``prev_abs_dev`` carries the per-class mean
    |deviation| observed at the previous outer step, which drives the rho
    doubling schedule.
    """

    lambdas: np.ndarray
    rhos: np.ndarray
    kind: str = QUADRATIC
    prev_abs_dev: np.ndarray | None = None

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        rho = np.asarray(self.rhos, dtype=np.float64)
        if lam.ndim != 1 or rho.shape != lam.shape:
            raise ShapeError("lambdas and rhos must be 1-D with equal length")
        if np.any(lam < 0):
            raise DomainError("lambdas must be >= 0")
        if np.any(rho <= 0):
            raise DomainError("rhos must be > 0")
        if self.kind not in (QUADRATIC, PHR):
            raise DomainError(f"unknown penalty kind {self.kind!r}")
        lam.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "rhos", rho)

    @classmethod
    def uniform(cls, n_classes: int, lam: float, rho: float = 1.0, kind: str = QUADRATIC):
        return cls(np.full(n_classes, float(lam)), np.full(n_classes, float(rho)), kind)


def _check_banks(state: PenaltyState, protos: PrototypeBank, anchors: PrototypeBank):
    if protos.weights.shape != anchors.weights.shape:
        raise ShapeError(
            f"protos shape {protos.weights.shape} != anchors shape "
            f"{anchors.weights.shape}"
        )
    if state.lambdas.shape[0] != protos.n_classes:
        raise ShapeError(
            f"state has {state.lambdas.shape[0]} classes, banks have "
            f"{protos.n_classes}"
        )


def penalty_value(
    state: PenaltyState, protos: PrototypeBank, anchors: PrototypeBank
) -> float:
    """Penalty term of the constrained objective at the current prototypes."""
    _check_banks(state, protos, anchors)
    z = anchors.weights - protos.weights  # t_c - w_c
    if state.kind == QUADRATIC:
        return float(np.sum(state.lambdas * np.sum(z * z, axis=1)))
    lam = state.lambdas[:, None]
    rho = state.rhos[:, None]
    first = lam * z + 0.5 * rho * z * z
    clamped = -(lam * lam) / (2.0 * rho)
    vals = np.where(lam + rho * z >= 0, first, clamped)
    return float(np.sum(vals))


def penalty_gradient(
    state: PenaltyState, protos: PrototypeBank, anchors: PrototypeBank
) -> np.ndarray:
    """Analytic gradient of penalty_value w.r.t. the prototype matrix."""
    _check_banks(state, protos, anchors)
    z = anchors.weights - protos.weights
    if state.kind == QUADRATIC:
        return 2.0 * state.lambdas[:, None] * (protos.weights - anchors.weights)
    lam = state.lambdas[:, None]
    rho = state.rhos[:, None]
    return -np.maximum(lam + rho * z, 0.0)


def init_lambda_star(bank: PrototypeBank, support) -> np.ndarray:
    """Per-class mean of zero-shot softmax scores over that class's support rows.

    Augmentation views each contribute one term to the class mean. The
    anchor bank plays the role of the first inner-step solution, at which
    the constraint holds exactly and the learned multiplier reduces to the
    zero-shot confidence.
    """
    data = _as_embedding_set(support)
    if data.dim != bank.dim:
        raise ShapeError(f"support dim {data.dim} != bank dim {bank.dim}")
    feats = l2_normalize_rows(data.features)
    probs = softmax_scores(bank.temperature_inv * (feats @ bank.weights.T))
    lam = np.empty(bank.n_classes)
    for c in range(bank.n_classes):
        mask = data.labels == c
        if not np.any(mask):
            raise MissingClass(f"class {c} has no support samples", cls=c)
        lam[c] = probs[mask, c].mean()
    return lam


def lambda_variants(lambda_star: np.ndarray) -> dict[str, np.ndarray]:
    """The multiplier choices compared in the ablations.

    class_wise keeps the per-class confidences; constant_one is all ones;
    avg sets every entry to their mean; corrected rescales class_wise so
    its mean is exactly one.
    """
    lam = np.asarray(lambda_star, dtype=np.float64)
    # Softmax confidences live in (0, 1) mathematically, but saturate to
    # exactly 1.0 in float64 at large temperature scales.
    if np.any(lam <= 0) or np.any(lam > 1):
        raise DomainError("lambda_star entries must lie in (0, 1]")
    mean = lam.mean()
    return {
        "class_wise": lam.copy(),
        "constant_one": np.ones_like(lam),
        "avg": np.full_like(lam, mean),
        "corrected": lam / mean,
    }


def alm_outer_update(
    state: PenaltyState,
    protos: PrototypeBank,
    anchors: PrototypeBank,
    support,
) -> PenaltyState:
    """One outer step of the augmented Lagrangian schedule (PHR kind only).

    The new multiplier for class c averages the PHR derivative of the
    elementwise deviation t_c - w_c over support samples and embedding
    dimensions (the deviation is sample-independent, so the sample average
    is the dimension average), clamped to [LAMBDA_MIN, LAMBDA_MAX]. rho_c
    doubles when the class's mean |deviation| failed to shrink by at least
    10% since the previous outer step.
    """
    if state.kind != PHR:
        raise UnsupportedKind(
            "outer updates are only defined for the PHR penalty", kind=state.kind
        )
    if np.any(state.lambdas <= 0):
        raise DomainError("PHR outer update requires strictly positive lambdas")
    _check_banks(state, protos, anchors)
    _as_embedding_set(support)  # validated but unused: deviation is sample-free
    z = anchors.weights - protos.weights
    lam = state.lambdas[:, None]
    rho = state.rhos[:, None]
    new_lam = np.maximum(lam + rho * z, 0.0).mean(axis=1)
    new_lam = np.clip(new_lam, LAMBDA_MIN, LAMBDA_MAX)
    abs_dev = np.abs(z).mean(axis=1)
    if state.prev_abs_dev is None:
        new_rho = state.rhos.copy()
    else:
        stalled = abs_dev > 0.9 * state.prev_abs_dev
        new_rho = np.where(stalled, state.rhos * 2.0, state.rhos)
    return PenaltyState(new_lam, new_rho, PHR, prev_abs_dev=abs_dev)


def _as_embedding_set(support) -> EmbeddingSet:
    if isinstance(support, EmbeddingSet):
        return support
    to_set = getattr(support, "to_embedding_set", None)
    if to_set is None:
        raise ShapeError(f"cannot interpret {type(support).__name__} as support data")
    return to_set()
