import numpy as np
import pytest

from protoadapt.core import EmbeddingSet, PrototypeBank, l2_normalize_rows
from protoadapt.data import SyntheticTaskSpec, generate_synthetic, sample_few_shot


@pytest.fixture(scope="session")
def small_task():
    """3-class, 8-dim orthogonal task with views, shared across tests."""
    spec = SyntheticTaskSpec(
        n_classes=3,
        dim=8,
        sigma=0.15,
        n_support_per_class=10,
        n_test_per_class=50,
        n_views=3,
        seed=42,
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_support(small_task):
    return sample_few_shot(small_task["train"], 4, seed=0)


@pytest.fixture
def random_task():
    """Factory for tiny random instances used in gradient checks."""

    def make(rng, n_classes=4, dim=6, n_per_class=5):
        feats = l2_normalize_rows(rng.standard_normal((n_classes * n_per_class, dim)))
        labels = np.repeat(np.arange(n_classes), n_per_class)
        data = EmbeddingSet(feats, labels, n_classes)
        anchors = PrototypeBank(
            l2_normalize_rows(rng.standard_normal((n_classes, dim))),
            temperature_inv=float(rng.uniform(1, 20)),
            normalized=True,
        )
        return data, anchors

    return make
