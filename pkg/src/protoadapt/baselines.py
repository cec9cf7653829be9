"""Analytic baselines: training-free cached-key logit fusion, the
residual-reparameterization learning-rate equivalence, and the
random-initialized linear probe wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import EmbeddingSet, OneHotBatch, PrototypeBank, l2_normalize_rows
from .errors import DomainError, ShapeError
from .penalty import _as_embedding_set
from .probe import RANDOM_INIT, TrainConfig, TrainTrace, ce_gradient, train_probe


@dataclass(frozen=True)
class TipCache:
    """Cached support features (keys) and their one-hot labels (values).

    ``alpha`` weighs the vision logits against the zero-shot logits;
    ``beta`` sharpens the exponential cosine affinity.
    """

    keys: np.ndarray
    values: OneHotBatch
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.keys, dtype=np.float64)
        if k.ndim != 2:
            raise ShapeError("keys must be 2-D")
        if not np.all(np.abs(np.linalg.norm(k, axis=1) - 1.0) <= 1e-6):
            raise ShapeError("keys must be unit-norm")
        if self.values.targets.shape[0] != k.shape[0]:
            raise ShapeError("values must align with keys")
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("alpha and beta must be >= 0")
        k.setflags(write=False)
        object.__setattr__(self, "keys", k)

    @classmethod
    def from_support(
        cls, support, n_classes: int, alpha: float = 1.0, beta: float = 1.0
    ) -> "TipCache":
        data = _as_embedding_set(support)
        return cls(
            l2_normalize_rows(data.features),
            OneHotBatch.from_labels(data.labels, n_classes),
            alpha,
            beta,
        )


def tip_adapter_logits(
    cache: TipCache, anchors: PrototypeBank, v: np.ndarray
) -> np.ndarray:
    """Fuse cached-support vision logits with zero-shot logits.

    affinity a_m = exp(-beta * (1 - v.k_m)); vision logits = alpha * a @ values;
    zero-shot logits = temperature_inv * v.t_c. The temperature scales only
    the zero-shot term (the learned scale is clipped at 100 upstream).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cache.keys.shape[1],):
        raise ShapeError(f"embedding shape {v.shape} != ({cache.keys.shape[1]},)")
    if anchors.dim != cache.keys.shape[1]:
        raise ShapeError("anchors and cache disagree on embedding dim")
    affinity = np.exp(-cache.beta * (1.0 - cache.keys @ v))
    vision = cache.alpha * (affinity @ cache.values.targets)
    zero_shot = anchors.temperature_inv * (anchors.weights @ v)
    return vision + zero_shot


def taskres_step_equivalence(
    alpha: float,
    eta: float,
    anchors: PrototypeBank,
    support,
    steps: int = 10,
    temperature_inv: float | None = None,
) -> dict:
    """Compare residual-reparameterized training against a rescaled probe.

    Side (a) keeps w = t + alpha * w_r with the residual descending the
    prototype-space gradient at step size eta; side (b) is a plain probe at
    learning rate eta * alpha. Momentum and projection are off, where the
    single-step equivalence is exact up to float noise. Returns the maximum
    elementwise trajectory difference.
    """
    if alpha <= 0 or eta <= 0:
        raise DomainError("alpha and eta must be > 0")
    data = _as_embedding_set(support)
    feats = l2_normalize_rows(data.features)
    batch = EmbeddingSet(feats, data.labels, data.n_classes)
    targets = OneHotBatch.from_labels(data.labels, data.n_classes)
    tinv = temperature_inv if temperature_inv is not None else anchors.temperature_inv

    t = anchors.weights
    w_r = np.zeros_like(t)
    w_b = t.copy()
    max_diff = 0.0
    for _ in range(steps):
        bank_a = PrototypeBank(t + alpha * w_r, tinv)
        w_r = w_r - eta * ce_gradient(bank_a, batch, targets)
        w_a = t + alpha * w_r
        bank_b = PrototypeBank(w_b, tinv)
        w_b = w_b - (eta * alpha) * ce_gradient(bank_b, batch, targets)
        max_diff = max(max_diff, float(np.max(np.abs(w_a - w_b))))
    return {
        "alpha": alpha,
        "eta": eta,
        "steps": steps,
        "max_elementwise_diff": max_diff,
        "equivalent": max_diff < 1e-10,
    }


def random_lp(
    support, config: TrainConfig, n_classes: int | None = None, dim: int | None = None,
    anchors: PrototypeBank | None = None,
) -> tuple[PrototypeBank, TrainTrace]:
    """Linear probe from random Gaussian initialization, no penalty.

    Anchors are only used as a shape/temperature template (and for drift
    bookkeeping); pass the zero-shot bank when available.
    """
    data = _as_embedding_set(support)
    if anchors is None:
        protos = np.zeros((n_classes or data.n_classes, dim or data.dim))
        protos[:, 0] = 1.0
        anchors = PrototypeBank(protos, config.temperature_inv, normalized=True)
    cfg = replace(config, init=RANDOM_INIT, penalty=None, outer_steps=0)
    return train_probe(anchors, support, cfg)
