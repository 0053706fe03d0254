from __future__ import annotations

import numpy as np
import pytest

from tmcdr.dataset import InteractionDataset


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-8, tight_rtol=1e-6, tight_floor=1e-3):
    """Two-tier gradient agreement: rtol everywhere, tight_rtol on large entries."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    assert np.all(diff <= atol + rtol * scale), (
        f"gradient mismatch: max rel err {np.max(diff / np.maximum(scale, 1e-12)):.3e}"
    )
    large = scale > tight_floor
    assert np.all(diff[large] <= tight_rtol * scale[large]), (
        "large gradient entries disagree beyond the tight tolerance"
    )


def make_dataset(domain_id: str, pairs) -> InteractionDataset:
    return InteractionDataset.from_pairs(domain_id, pairs)


def random_dataset(rng, num_users=8, num_items=12, density=0.4, domain_id="d") -> InteractionDataset:
    """Random dataset where every user has at least one interaction."""
    pairs = []
    for u in range(num_users):
        items = rng.permutation(num_items)[: max(1, rng.binomial(num_items, density))]
        for i in items:
            pairs.append((f"u{u}", f"i{i}"))
    return InteractionDataset.from_pairs(domain_id, pairs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
