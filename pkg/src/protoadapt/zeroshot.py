"""Text-prototype construction and zero-shot inference.

Class prototypes are the per-class mean of the L2-normalized prompt
embeddings. The mean is renormalized by default so the bank satisfies the
unit-norm invariant required by the projected training loop; pass
``renormalize=False`` to keep the raw mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_TEMPERATURE_INV,
    EmbeddingSet,
    PrototypeBank,
    l2_normalize_rows,
    softmax_scores,
)
from .errors import DegenerateVector, DomainError, EmptyInput, ShapeError


@dataclass(frozen=True)
class PromptEmbeddings:
    """Per-class lists of text-encoder output vectors (>= 1 per class)."""

    per_class: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.per_class:
            raise EmptyInput("no classes in prompt embeddings")
        dims = set()
        cleaned = []
        for c, vecs in enumerate(self.per_class):
            v = np.asarray(vecs, dtype=np.float64)
            if v.ndim == 1:
                v = v[None, :]
            if v.shape[0] == 0:
                raise EmptyInput(f"class {c} has no prompt vectors", cls=c)
            if not np.all(np.isfinite(v)):
                raise ShapeError(f"class {c} has non-finite prompt vectors")
            dims.add(v.shape[1])
            cleaned.append(v)
        if len(dims) != 1:
            raise ShapeError(f"inconsistent prompt dims: {sorted(dims)}")
        object.__setattr__(self, "per_class", tuple(cleaned))

    @property
    def n_classes(self) -> int:
        return len(self.per_class)

    @property
    def dim(self) -> int:
        return self.per_class[0].shape[1]


def build_text_prototypes(
    prompts: PromptEmbeddings,
    temperature_inv: float = DEFAULT_TEMPERATURE_INV,
    renormalize: bool = True,
) -> PrototypeBank:
    """Average the normalized prompt embeddings of each class.

    Raises DegenerateVector if any prompt vector, or the per-class mean,
    has (near-)zero norm.
    """
    protos = np.empty((prompts.n_classes, prompts.dim))
    for c, vecs in enumerate(prompts.per_class):
        try:
            unit = l2_normalize_rows(vecs)
        except DegenerateVector as e:
            raise DegenerateVector(
                f"class {c}: zero-norm prompt vector", cls=c, **e.details
            ) from e
        protos[c] = unit.mean(axis=0)
    if renormalize:
        try:
            protos = l2_normalize_rows(protos)
        except DegenerateVector as e:
            raise DegenerateVector(
                f"prompt mean for class {e.details['row']} cancels to zero",
                cls=e.details["row"],
            ) from e
    return PrototypeBank(protos, temperature_inv, normalized=renormalize)


def zero_shot_predict(bank: PrototypeBank, v: np.ndarray) -> np.ndarray:
    """Softmax over temperature-scaled cosine similarities to prototypes."""
    if not bank.normalized:
        raise DomainError("prototype bank must be normalized for zero-shot use")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (bank.dim,):
        raise ShapeError(f"embedding shape {v.shape} != ({bank.dim},)")
    v = l2_normalize_rows(v)
    logits = bank.temperature_inv * (bank.weights @ v)
    return softmax_scores(logits)


def zero_shot_accuracy(bank: PrototypeBank, data: EmbeddingSet) -> float:
    """Fraction of rows whose predicted class equals the label.

    Argmax ties break toward the lowest class index.
    """
    if data.n_samples == 0:
        raise EmptyInput("empty embedding set")
    if data.dim != bank.dim:
        raise ShapeError(f"data dim {data.dim} != bank dim {bank.dim}")
    logits = l2_normalize_rows(data.features) @ bank.weights.T
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == data.labels))
