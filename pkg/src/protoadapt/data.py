"""Feature-container I/O, seeded few-shot sampling, and synthetic tasks.

Container format: 8-byte magic ``VLFEAT01``, u32 little-endian n_samples,
u32 little-endian dim, then n_samples*dim float32 little-endian values in
row-major order. A JSON sidecar with the same basename and a ``.json``
suffix carries {n_samples, dim, n_classes, class_names, labels, view_ids,
split} plus an optional ``parent_class_ids`` class-subset mask.

All randomness uses numpy's PCG64 generator (``np.random.default_rng``),
so a (seed, k) pair reproduces the same draw on any platform.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import EmbeddingSet, PrototypeBank, l2_normalize_rows
from .errors import (
    GeometryError,
    InsufficientShots,
    MagicMismatch,
    SidecarMismatch,
    SizeMismatch,
)
from .zeroshot import PromptEmbeddings

MAGIC = b"VLFEAT01"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_container(path, data: EmbeddingSet, split: str = "unspecified") -> Path:
    """Write an EmbeddingSet as payload + JSON sidecar. Returns the payload path."""
    path = Path(path)
    feats = data.features.astype("<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", data.n_samples, data.dim))
        f.write(feats.tobytes(order="C"))
    meta = {
        "n_samples": data.n_samples,
        "dim": data.dim,
        "n_classes": data.n_classes,
        "class_names": list(
            data.class_names
            or [f"class_{c}" for c in range(data.n_classes)]
        ),
        "labels": data.labels.tolist(),
        "view_ids": (data.views.tolist() if data.views is not None else [0] * data.n_samples),
        "split": split,
    }
    if data.parent_class_ids is not None:
        meta["parent_class_ids"] = list(data.parent_class_ids)
    with open(sidecar_path(path), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
    return path


def load_container(path) -> EmbeddingSet:
    """Read payload + sidecar back into an EmbeddingSet (rows renormalized)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise MagicMismatch(
            f"expected magic {MAGIC!r}, got {raw[:8]!r}", field="magic"
        )
    n_samples, dim = struct.unpack("<II", raw[8:16])
    expected = n_samples * dim * 4
    payload = raw[16:]
    if len(payload) != expected:
        raise SizeMismatch(
            f"payload holds {len(payload)} bytes, header implies {expected}",
            field="payload",
        )
    feats = np.frombuffer(payload, dtype="<f4").reshape(n_samples, dim)
    with open(sidecar_path(path)) as f:
        meta = json.load(f)
    for key, val in (("n_samples", n_samples), ("dim", dim)):
        if meta.get(key) != val:
            raise SidecarMismatch(
                f"sidecar {key}={meta.get(key)} disagrees with payload {val}",
                field=key,
            )
    labels = np.asarray(meta["labels"], dtype=np.int64)
    if labels.shape[0] != n_samples:
        raise SidecarMismatch(
            f"sidecar lists {labels.shape[0]} labels for {n_samples} samples",
            field="labels",
        )
    n_classes = int(meta["n_classes"])
    if labels.size and labels.max() >= n_classes:
        raise SidecarMismatch(
            f"max label {labels.max()} >= n_classes {n_classes}", field="n_classes"
        )
    views = np.asarray(meta.get("view_ids", [0] * n_samples), dtype=np.int64)
    parent = meta.get("parent_class_ids")
    return EmbeddingSet(
        features=l2_normalize_rows(feats.astype(np.float64)),
        labels=labels,
        n_classes=n_classes,
        views=views,
        class_names=tuple(meta.get("class_names") or ()) or None,
        parent_class_ids=tuple(parent) if parent is not None else None,
    )


def load_prompts(path) -> PromptEmbeddings:
    """Load prompt embeddings from the container format.

    The sidecar labels group prompt vectors by class: label c marks a
    vector as one of class c's prompt-template embeddings.
    """
    data = load_container(path)
    groups = []
    for c in range(data.n_classes):
        rows = data.features[data.labels == c]
        if rows.shape[0] == 0:
            raise SidecarMismatch(f"class {c} has no prompt vectors", field="labels")
        groups.append(rows)
    return PromptEmbeddings(tuple(groups))


@dataclass(frozen=True)
class SupportSet:
    """K base samples per class drawn from a parent set, plus their views."""

    parent: EmbeddingSet
    k: int
    seed: int
    chosen: dict  # class index -> np.ndarray of base row indices
    rows: np.ndarray  # expanded row indices (bases + their views)

    def to_embedding_set(self) -> EmbeddingSet:
        p = self.parent
        return EmbeddingSet(
            features=p.features[self.rows],
            labels=p.labels[self.rows],
            n_classes=p.n_classes,
            views=(p.views[self.rows] if p.views is not None else None),
            class_names=p.class_names,
        )

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


def _view_groups(data: EmbeddingSet) -> dict[int, np.ndarray]:
    """Map each base row index to its row + following view rows.

    Rows of one base sample are contiguous and start with the view-0 row.
    """
    base_idx = np.flatnonzero(data.base_mask())
    groups = {}
    bounds = list(base_idx) + [data.n_samples]
    for i, b in enumerate(base_idx):
        groups[int(b)] = np.arange(b, bounds[i + 1])
    return groups


def sample_few_shot(data: EmbeddingSet, k: int, seed: int) -> SupportSet:
    """Draw k base samples per class without replacement (PCG64-seeded)."""
    if k < 1:
        raise InsufficientShots(f"k must be >= 1, got {k}", k=k)
    rng = np.random.default_rng(seed)
    base_idx = np.flatnonzero(data.base_mask())
    groups = _view_groups(data)
    chosen = {}
    rows = []
    for c in range(data.n_classes):
        cls_bases = base_idx[data.labels[base_idx] == c]
        if cls_bases.shape[0] < k:
            raise InsufficientShots(
                f"class {c} has {cls_bases.shape[0]} base samples, need {k}",
                cls=c,
                available=int(cls_bases.shape[0]),
                k=k,
            )
        pick = np.sort(rng.choice(cls_bases, size=k, replace=False))
        chosen[c] = pick
        for b in pick:
            rows.append(groups[int(b)])
    return SupportSet(
        parent=data, k=k, seed=seed, chosen=chosen, rows=np.concatenate(rows)
    )


ORTHOGONAL = "orthogonal"
RANDOM_UNIT = "random_unit"


@dataclass(frozen=True)
class Rotate:
    """Plane rotation by ``angle_deg`` applied blockwise over coordinate pairs."""

    angle_deg: float


@dataclass(frozen=True)
class NoiseBoost:
    """Extra isotropic noise of scale ``sigma`` added to test samples."""

    sigma: float


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Desk-scale synthetic stand-in for extracted image features."""

    n_classes: int = 5
    dim: int = 32
    geometry: str = ORTHOGONAL
    min_pairwise_angle_deg: float = 60.0
    sigma: float = 0.2
    shift: Rotate | NoiseBoost | None = None
    n_support_per_class: int = 32
    n_test_per_class: int = 100
    n_views: int = 1
    view_sigma: float | None = None  # defaults to sigma / 2
    seed: int = 0

    def __post_init__(self):
        if self.geometry not in (ORTHOGONAL, RANDOM_UNIT):
            raise GeometryError(f"unknown geometry {self.geometry!r}")
        if self.geometry == ORTHOGONAL and self.n_classes > self.dim:
            raise GeometryError(
                f"orthogonal geometry needs n_classes <= dim, got "
                f"{self.n_classes} > {self.dim}"
            )
        if self.sigma < 0:
            raise GeometryError(f"sigma must be >= 0, got {self.sigma}")
        if self.n_views < 1:
            raise GeometryError(f"n_views must be >= 1, got {self.n_views}")


def _make_prototypes(spec: SyntheticTaskSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.geometry == ORTHOGONAL:
        protos = np.zeros((spec.n_classes, spec.dim))
        protos[np.arange(spec.n_classes), np.arange(spec.n_classes)] = 1.0
        return protos
    min_cos = math.cos(math.radians(spec.min_pairwise_angle_deg))
    for _ in range(10_000):
        protos = l2_normalize_rows(rng.standard_normal((spec.n_classes, spec.dim)))
        gram = protos @ protos.T
        np.fill_diagonal(gram, -1.0)
        if gram.max() <= min_cos:
            return protos
    raise GeometryError(
        f"could not place {spec.n_classes} prototypes at pairwise angle >= "
        f"{spec.min_pairwise_angle_deg} deg in dim {spec.dim}"
    )


def _rotation_matrix(dim: int, angle_deg: float) -> np.ndarray:
    """Block-diagonal rotation over coordinate pairs (0,1), (2,3), ..."""
    r = np.eye(dim)
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    for i in range(0, dim - 1, 2):
        r[i, i] = c
        r[i, i + 1] = -s
        r[i + 1, i] = s
        r[i + 1, i + 1] = c
    return r


def _sample_split(
    protos: np.ndarray,
    per_class: int,
    sigma: float,
    rng: np.random.Generator,
    n_views: int = 1,
    view_sigma: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_classes, dim = protos.shape
    feats, labels, views = [], [], []
    for c in range(n_classes):
        for _ in range(per_class):
            base = protos[c] + sigma * rng.standard_normal(dim)
            feats.append(base)
            labels.append(c)
            views.append(0)
            for v in range(1, n_views):
                feats.append(base + view_sigma * rng.standard_normal(dim))
                labels.append(c)
                views.append(v)
    return (
        l2_normalize_rows(np.asarray(feats)),
        np.asarray(labels, dtype=np.int64),
        np.asarray(views, dtype=np.int64),
    )


def generate_synthetic(
    spec: SyntheticTaskSpec, temperature_inv: float = 100.0
) -> dict:
    """Generate {train, test, anchors} for a synthetic task.

    The ground-truth prototypes double as the zero-shot anchor bank. The
    distribution shift, if any, applies to the test split only.
    """
    rng = np.random.default_rng(spec.seed)
    protos = _make_prototypes(spec, rng)
    view_sigma = spec.view_sigma if spec.view_sigma is not None else spec.sigma / 2.0
    train_f, train_l, train_v = _sample_split(
        protos, spec.n_support_per_class, spec.sigma, rng, spec.n_views, view_sigma
    )
    test_f, test_l, _ = _sample_split(protos, spec.n_test_per_class, spec.sigma, rng)
    if isinstance(spec.shift, Rotate):
        test_f = l2_normalize_rows(test_f @ _rotation_matrix(spec.dim, spec.shift.angle_deg).T)
    elif isinstance(spec.shift, NoiseBoost):
        test_f = l2_normalize_rows(
            test_f + spec.shift.sigma * rng.standard_normal(test_f.shape)
        )
    elif spec.shift is not None:
        raise GeometryError(f"unknown shift {spec.shift!r}")
    names = tuple(f"class_{c}" for c in range(spec.n_classes))
    return {
        "train": EmbeddingSet(train_f, train_l, spec.n_classes, views=train_v, class_names=names),
        "test": EmbeddingSet(test_f, test_l, spec.n_classes, class_names=names),
        "anchors": PrototypeBank(protos, temperature_inv, normalized=True),
    }
