"""Embedding-regression baseline: fit the affine map by MSE over overlap users.

Where the meta stage optimizes a ranking objective through simulated
cold-start tasks, this baseline directly regresses each training overlap
user's target embedding from their source embedding:

    minimize  mean_u || W @ u_s + b - u_t ||^2

Both trainers emit the same affine shape, so evaluation treats them
identically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import OverlapSet
from .errors import DataError, DivergenceError
from .models import BaseModel
from .network import MappingNetwork, affine_from_flat, init_affine_params, transform
from .optim import AdamState, FlatParams, adam_step


@dataclass(frozen=True)
class MappingTrainResult:
    network: MappingNetwork
    losses: tuple[float, ...]  # epoch-start MSE values plus the final value


def train_mapping(
    source_model: BaseModel,
    target_model: BaseModel,
    train_overlap: OverlapSet,
    epochs: int = 500,
    lr: float = 0.001,
    seed: int = 0,
) -> MappingTrainResult:
    """Full-batch Adam on the mean squared mapping error, deterministic by seed.

    Returns the trained network and the recorded loss curve (initial value,
    one value per epoch boundary, final value: epochs + 1 entries).
    """
    if source_model.dim != target_model.dim:
        raise ValueError(f"source dim {source_model.dim} != target dim {target_model.dim}")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if len(train_overlap) == 0:
        raise DataError("cannot train a mapping on an empty overlap")
    src = source_model.user_embeddings[[u.source_index for u in train_overlap.users]]
    tgt = target_model.user_embeddings[[u.target_index for u in train_overlap.users]]
    n = src.shape[0]
    d = source_model.dim

    weight, bias = init_affine_params(d, seed)
    theta = FlatParams.from_segments([("weight", weight), ("bias", bias)])
    adam = AdamState.initial(theta.size, lr=lr)

    def mse_and_grad(params: FlatParams) -> tuple[float, np.ndarray]:
        w = params.segment("weight")
        b = params.segment("bias")
        residual = src @ w.T + b - tgt
        loss = float(np.sum(residual * residual)) / n
        d_weight = 2.0 / n * residual.T @ src
        d_bias = 2.0 / n * residual.sum(axis=0)
        return loss, np.concatenate([d_weight.ravel(), d_bias])

    losses = []
    for epoch in range(epochs):
        loss, grad = mse_and_grad(theta)
        if not np.isfinite(loss):
            raise DivergenceError(f"mapping training diverged at epoch {epoch}")
        losses.append(loss)
        adam, theta = adam_step(adam, theta, grad)
    final_loss, _ = mse_and_grad(theta)
    if not np.isfinite(final_loss):
        raise DivergenceError("mapping training diverged on the final epoch")
    losses.append(final_loss)
    return MappingTrainResult(
        network=affine_from_flat(MappingNetwork, theta), losses=tuple(losses)
    )


def map_cold_user(net: MappingNetwork, source_model: BaseModel, user: int) -> np.ndarray:
    """Predicted target-space embedding of a cold-start user."""
    if not 0 <= user < source_model.num_users:
        raise IndexError(f"user index {user} out of range [0, {source_model.num_users})")
    return transform(net, source_model.user_embeddings[user])
