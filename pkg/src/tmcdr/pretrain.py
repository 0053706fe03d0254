"""Transfer stage: train one embedding model per domain on all of its data.

Minibatch Adam over per-positive training samples (each positive paired
with freshly drawn negatives every epoch). One optimizer state spans the
user and item tables as a single flattened parameter vector. All training
numerics are 64-bit; persistence downcasts to 32-bit elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InteractionDataset, TrainingSample, sample_negatives
from .errors import DivergenceError
from .models import MF, BaseModel, ModelKind, project_rows_unit_ball, sample_loss
from .optim import AdamState, FlatParams, adam_step


@dataclass(frozen=True)
class PretrainConfig:
    kind: ModelKind = MF
    dim: int = 16
    epochs: int = 20
    batch_size: int = 256
    lr: float = 0.01
    l2: float = 1e-5
    negatives_per_positive: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class PretrainResult:
    model: BaseModel
    losses: tuple[float, ...]  # mean per-sample loss per epoch


def init_model(dataset: InteractionDataset, config: PretrainConfig) -> BaseModel:
    """Embeddings drawn i.i.d. from N(0, 0.1^2), deterministic by seed;
    cml rows are projected into the unit ball."""
    rng = np.random.default_rng(config.seed)
    users = rng.normal(0.0, 0.1, size=(dataset.num_users, config.dim))
    items = rng.normal(0.0, 0.1, size=(dataset.num_items, config.dim))
    if config.kind.name == "cml":
        users = project_rows_unit_ball(users)
        items = project_rows_unit_ball(items)
    return BaseModel(kind=config.kind, user_embeddings=users, item_embeddings=items)


def train_base_model(dataset: InteractionDataset, config: PretrainConfig) -> PretrainResult:
    """Train on every interaction in the domain; returns the model and loss curve.

    Per epoch the positives are re-shuffled and their negatives re-drawn, so
    the model never overfits one fixed negative set. Gradients are averaged
    over the minibatch; L2 regularization applies to the full tables.
    """
    kind = config.kind
    init = init_model(dataset, config)
    user_emb = np.array(init.user_embeddings)
    item_emb = np.array(init.item_embeddings)
    # separate stream from init_model so init draws and sampling never alias
    rng = np.random.default_rng([config.seed, 1])

    flat = FlatParams.from_segments([("users", user_emb), ("items", item_emb)])
    adam = AdamState.initial(flat.size, lr=config.lr)
    positives = list(dataset.interactions)
    n_pos = len(positives)
    k = config.negatives_per_positive

    epoch_losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n_pos)
        epoch_value = 0.0
        for start in range(0, n_pos, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            grad_users = np.zeros_like(user_emb)
            grad_items = np.zeros_like(item_emb)
            batch_value = 0.0
            for j in batch_idx:
                u, i = positives[j]
                sample = TrainingSample(u, i, sample_negatives(dataset, u, k, rng))
                lg = sample_loss(user_emb[u], kind, sample, item_emb)
                batch_value += lg.value
                grad_users[u] += lg.d_user
                for item, g in lg.d_items:
                    grad_items[item] += g
            if not np.isfinite(batch_value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            epoch_value += batch_value
            n_batch = len(batch_idx)
            grad_users = grad_users / n_batch + config.l2 * user_emb
            grad_items = grad_items / n_batch + config.l2 * item_emb
            adam, flat = adam_step(adam, flat, np.concatenate([grad_users.ravel(), grad_items.ravel()]))
            user_emb = np.array(flat.segment("users"))
            item_emb = np.array(flat.segment("items"))
            if kind.name == "cml":
                user_emb = project_rows_unit_ball(user_emb)
                item_emb = project_rows_unit_ball(item_emb)
                flat = FlatParams.from_segments([("users", user_emb), ("items", item_emb)])
                assert np.all(np.linalg.norm(user_emb, axis=1) <= 1 + 1e-9)
                assert np.all(np.linalg.norm(item_emb, axis=1) <= 1 + 1e-9)
        epoch_losses.append(epoch_value / n_pos)
    model = BaseModel(kind=kind, user_embeddings=user_emb, item_embeddings=item_emb)
    return PretrainResult(model=model, losses=tuple(epoch_losses))
