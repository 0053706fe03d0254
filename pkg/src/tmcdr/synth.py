"""Synthetic two-domain world with a planted cross-domain relation.

Every overlap user's target-domain latent factors are an orthogonal
transform of their source factors plus Gaussian noise, so an affine map
recovering the relation exists by construction. Interactions are sampled
through a logistic link on factor dot products, calibrated per domain to a
requested positive density. Each user and item is forced to appear at
least once so the generated catalogs keep their declared sizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InteractionDataset
from .models import sigmoid


@dataclass(frozen=True)
class SynthConfig:
    users: int = 400
    items: int = 200
    overlap: int = 120
    dim: int = 8
    noise: float = 0.05
    density: float = 0.12
    steepness: float = 5.0
    seed: int = 42

    def __post_init__(self):
        if self.users < 2 or self.items < 2:
            raise ValueError("need at least 2 users and 2 items per domain")
        if not 0 < self.overlap <= self.users:
            raise ValueError(f"overlap must be in (0, users], got {self.overlap}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if not 0 < self.density < 1:
            raise ValueError(f"density must be in (0, 1), got {self.density}")
        if self.steepness <= 0:
            raise ValueError(f"steepness must be > 0, got {self.steepness}")


@dataclass(frozen=True)
class SyntheticWorld:
    config: SynthConfig
    source: InteractionDataset
    target: InteractionDataset
    source_user_factors: np.ndarray
    source_item_factors: np.ndarray
    target_user_factors: np.ndarray
    target_item_factors: np.ndarray
    transform_matrix: np.ndarray  # maps source user factors to target user factors

    def overlap_ids(self) -> tuple[str, ...]:
        return tuple(f"u{i:04d}" for i in range(self.config.overlap))


def _random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _calibrate_offset(scores: np.ndarray, steepness: float, density: float) -> float:
    """Bisect the link offset so the mean interaction probability hits density."""
    lo, hi = -60.0, 60.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if float(np.mean(sigmoid(steepness * scores + mid))) < density:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sample_interactions(
    user_factors: np.ndarray,
    item_factors: np.ndarray,
    steepness: float,
    density: float,
    rng: np.random.Generator,
) -> np.ndarray:
    scores = user_factors @ item_factors.T
    offset = _calibrate_offset(scores, steepness, density)
    probs = sigmoid(steepness * scores + offset)
    matrix = rng.random(probs.shape) < probs
    # keep every user and item present: force their most likely interaction
    for u in np.flatnonzero(~matrix.any(axis=1)):
        matrix[u, int(np.argmax(probs[u]))] = True
    for i in np.flatnonzero(~matrix.any(axis=0)):
        matrix[int(np.argmax(probs[:, i])), i] = True
    return matrix


def _to_dataset(domain_id: str, matrix: np.ndarray, user_ids, item_ids) -> InteractionDataset:
    pairs = [
        (user_ids[u], item_ids[i])
        for u in range(matrix.shape[0])
        for i in np.flatnonzero(matrix[u])
    ]
    return InteractionDataset.from_pairs(domain_id, pairs)


def generate_world(config: SynthConfig) -> SyntheticWorld:
    """Build both domains' datasets and the latent factors behind them."""
    rng = np.random.default_rng(config.seed)
    d = config.dim
    scale = d ** -0.25  # keeps factor dot products near unit variance

    src_users = scale * rng.standard_normal((config.users, d))
    src_items = scale * rng.standard_normal((config.items, d))
    tgt_items = scale * rng.standard_normal((config.items, d))
    transform = _random_orthogonal(d, rng)
    tgt_users = scale * rng.standard_normal((config.users, d))
    tgt_users[: config.overlap] = (
        src_users[: config.overlap] @ transform.T
        + config.noise * rng.standard_normal((config.overlap, d))
    )

    src_matrix = _sample_interactions(src_users, src_items, config.steepness, config.density, rng)
    tgt_matrix = _sample_interactions(tgt_users, tgt_items, config.steepness, config.density, rng)

    overlap_ids = [f"u{i:04d}" for i in range(config.overlap)]
    src_user_ids = overlap_ids + [f"s{i:04d}" for i in range(config.overlap, config.users)]
    tgt_user_ids = overlap_ids + [f"t{i:04d}" for i in range(config.overlap, config.users)]
    item_ids = [f"i{i:04d}" for i in range(config.items)]

    return SyntheticWorld(
        config=config,
        source=_to_dataset("source", src_matrix, src_user_ids, item_ids),
        target=_to_dataset("target", tgt_matrix, tgt_user_ids, item_ids),
        source_user_factors=src_users,
        source_item_factors=src_items,
        target_user_factors=tgt_users,
        target_item_factors=tgt_items,
        transform_matrix=transform,
    )
