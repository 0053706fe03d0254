"""The affine source-to-target user map shared by the meta and mapping trainers.

Both trainers produce the same shape of network (a single fully connected
layer, W @ u + b), so the two are interchangeable at inference time; they
differ only in how the parameters are fit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import FlatParams


@dataclass(frozen=True)
class AffineMap:
    """W @ u + b from the source embedding space into the target space."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weight = np.array(self.weight, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if weight.ndim != 2 or weight.shape[0] != weight.shape[1]:
            raise ValueError(f"weight must be square, got shape {weight.shape}")
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"bias shape {bias.shape} does not match weight {weight.shape}")
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise ValueError("network parameters contain non-finite entries")
        weight.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def dim(self) -> int:
        return self.bias.shape[0]

    def to_flat(self) -> FlatParams:
        return FlatParams.from_segments([("weight", self.weight), ("bias", self.bias)])


class MetaNetwork(AffineMap):
    """Affine map trained on simulated cold-start tasks (ranking objective)."""


class MappingNetwork(AffineMap):
    """Affine map trained by embedding regression on overlap users (MSE objective)."""


def affine_from_flat(cls, params: FlatParams) -> AffineMap:
    return cls(params.segment("weight"), params.segment("bias"))


def transform(net: AffineMap, u_source) -> np.ndarray:
    """Map a source user embedding into the target space."""
    u = np.asarray(u_source, dtype=np.float64)
    if u.shape != (net.dim,):
        raise ValueError(f"expected a vector of length {net.dim}, got shape {u.shape}")
    return net.weight @ u + net.bias


def init_affine_params(d: int, seed: int, noise: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Near-identity start: W = I + noise * N(0, 1), b = 0."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    weight = np.eye(d) + noise * rng.standard_normal((d, d))
    return weight, np.zeros(d)
