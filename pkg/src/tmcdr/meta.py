"""Meta stage: train the affine map on simulated cold-start tasks.

Each task pairs two disjoint groups of overlapping users. The learning
phase adapts the network parameters theta to the first group's
target-domain samples with one (or more) plain gradient steps of size
inner_lr; the cold-start phase evaluates the adapted parameters on the
second group and differentiates that loss back to theta. In second-order
mode the gradient through the adaptation step is taken exactly,

    d/dtheta L_b(theta - inner_lr * grad L_a(theta))
        = (I - inner_lr * H_a) @ grad L_b(theta'),

with the Hessian term realized as a single Hessian-vector product; in
first-order mode the H_a term is dropped. Pretrained embeddings are never
modified here: the only trainable object is the affine map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dataset import InteractionDataset, OverlapSet, OverlapUser, TrainingSample, sample_negatives
from .errors import ConfigError, DivergenceError, SamplingError
from .models import BaseModel, ModelKind, sample_loss
from .network import MetaNetwork, affine_from_flat, init_affine_params, transform
from .optim import AdamState, FlatParams, adam_step, hessian_vector_product, sgd_step

__all__ = [
    "MetaConfig", "TaskGroup", "TaskBatch", "MetaTrainResult",
    "init_meta_network", "transform", "sample_task_batch", "phase_loss",
    "inner_update", "maml_outer_gradient", "outer_gradient", "meta_train",
    "cold_start_embed",
]


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 0.005
    outer_lr: float = 0.01
    group_size: int = 8
    groups_per_batch: int = 4
    iterations: int = 500
    inner_steps: int = 1
    order: str = "second"
    outer_optimizer: str = "adam"
    negatives_per_positive: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.inner_lr < 0:
            raise ConfigError(f"inner_lr must be >= 0, got {self.inner_lr}")
        if self.outer_lr <= 0:
            raise ConfigError(f"outer_lr must be > 0, got {self.outer_lr}")
        if self.group_size < 1 or self.groups_per_batch < 1:
            raise ConfigError("group_size and groups_per_batch must be >= 1")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.inner_steps < 1:
            raise ConfigError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.order not in ("second", "first"):
            raise ConfigError(f"order must be 'second' or 'first', got {self.order!r}")
        if self.order == "second" and self.inner_steps > 1:
            raise ConfigError("second-order mode supports a single inner step; "
                              "use order='first' for inner_steps > 1")
        if self.outer_optimizer not in ("adam", "sgd"):
            raise ConfigError(f"outer_optimizer must be 'adam' or 'sgd', got {self.outer_optimizer!r}")
        if self.negatives_per_positive < 1:
            raise ConfigError("negatives_per_positive must be >= 1")


@dataclass(frozen=True)
class TaskGroup:
    """One simulated cold-start task: learning users/data vs cold-start users/data."""

    users_a: tuple[OverlapUser, ...]
    users_b: tuple[OverlapUser, ...]
    data_a: tuple[TrainingSample, ...]
    data_b: tuple[TrainingSample, ...]

    def __post_init__(self):
        ids_a = {u.source_index for u in self.users_a}
        ids_b = {u.source_index for u in self.users_b}
        assert not ids_a & ids_b, "learning and cold-start phases share users"
        assert {s.user for s in self.data_a} <= ids_a, "data_a contains foreign users"
        assert {s.user for s in self.data_b} <= ids_b, "data_b contains foreign users"


@dataclass(frozen=True)
class TaskBatch:
    groups: tuple[TaskGroup, ...]


@dataclass(frozen=True)
class MetaTrainResult:
    network: MetaNetwork
    losses: tuple[float, ...]  # per-iteration mean cold-start-phase loss


def init_meta_network(d: int, seed: int, noise: float = 0.01) -> MetaNetwork:
    """Near-identity affine map, deterministic by seed."""
    weight, bias = init_affine_params(d, seed, noise)
    return MetaNetwork(weight, bias)


def _phase_data(
    users: Sequence[OverlapUser],
    target: InteractionDataset,
    k: int,
    rng: np.random.Generator,
) -> tuple[TrainingSample, ...]:
    # all target-domain positives of each user, each with fresh negatives;
    # samples carry the source index because the user side is always u^s
    samples = []
    for ou in users:
        for item in sorted(target.per_user_items[ou.target_index]):
            negs = sample_negatives(target, ou.target_index, k, rng)
            samples.append(TrainingSample(user=ou.source_index, pos_item=item, neg_items=negs))
    return tuple(samples)


def sample_task_batch(
    train_overlap: OverlapSet,
    target: InteractionDataset,
    config: MetaConfig,
    rng: np.random.Generator,
) -> TaskBatch:
    """Sample groups_per_batch tasks of 2*group_size distinct users each.

    Users without any target-domain positive are ineligible (their phase
    loss is undefined). Each task splits its users evenly into the learning
    and cold-start phases.
    """
    eligible = [ou for ou in train_overlap.users if target.per_user_items[ou.target_index]]
    need = 2 * config.group_size
    if len(eligible) < need:
        raise SamplingError(
            f"{len(eligible)} eligible overlap users, need at least {need} per task"
        )
    groups = []
    for _ in range(config.groups_per_batch):
        chosen = rng.choice(len(eligible), size=need, replace=False)
        users = [eligible[i] for i in chosen]
        users_a, users_b = tuple(users[: config.group_size]), tuple(users[config.group_size :])
        groups.append(
            TaskGroup(
                users_a=users_a,
                users_b=users_b,
                data_a=_phase_data(users_a, target, config.negatives_per_positive, rng),
                data_b=_phase_data(users_b, target, config.negatives_per_positive, rng),
            )
        )
    return TaskBatch(tuple(groups))


def phase_loss(
    net_params: FlatParams,
    phase_data: Sequence[TrainingSample],
    kind: ModelKind,
    source_user_emb: np.ndarray,
    target_item_emb: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Summed task loss of one phase, with its gradient over the network params.

    Every sample's user embedding is the transformed source embedding
    W @ u_s + b; the chain rule through the affine map gives
    dW += d_user (outer) u_s and db += d_user. Item embeddings are fixed,
    so their gradients are dropped.
    """
    if not phase_data:
        raise ValueError("phase data is empty")
    weight = net_params.segment("weight")
    bias = net_params.segment("bias")
    d = bias.shape[0]
    value = 0.0
    d_weight = np.zeros((d, d))
    d_bias = np.zeros(d)
    for s in phase_data:
        u_src = source_user_emb[s.user]
        u = weight @ u_src + bias
        lg = sample_loss(u, kind, s, target_item_emb)
        value += lg.value
        d_weight += np.outer(lg.d_user, u_src)
        d_bias += lg.d_user
    return value, np.concatenate([d_weight.ravel(), d_bias])


def inner_update(
    theta: FlatParams,
    data_a: Sequence[TrainingSample],
    lam: float,
    kind: ModelKind,
    source_user_emb: np.ndarray,
    target_item_emb: np.ndarray,
    inner_steps: int = 1,
) -> FlatParams:
    """Adapt theta with inner_steps plain gradient steps on the learning phase."""
    if lam < 0:
        raise ValueError(f"inner learning rate must be >= 0, got {lam}")
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be >= 1, got {inner_steps}")
    current = theta
    for _ in range(inner_steps):
        _, grad = phase_loss(current, data_a, kind, source_user_emb, target_item_emb)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError("non-finite gradient in inner update")
        current = sgd_step(current, grad, lam)
    return current


def _second_order_correct(
    grad_a: Callable[[FlatParams], np.ndarray],
    theta: FlatParams,
    g_b: np.ndarray,
    lam: float,
    hvp_eps: float,
) -> np.ndarray:
    """(I - lam * H_a) @ g_b with H_a the learning-phase Hessian at theta."""
    norm = float(np.linalg.norm(g_b))
    if lam == 0.0 or norm == 0.0:
        return g_b
    # apply the HVP to the unit direction and rescale; H is linear in v
    hv = hessian_vector_product(grad_a, theta, g_b / norm, hvp_eps)
    return g_b - lam * norm * hv


def maml_outer_gradient(
    grad_a: Callable[[FlatParams], np.ndarray],
    grad_b: Callable[[FlatParams], np.ndarray],
    theta: FlatParams,
    theta_prime: FlatParams,
    lam: float,
    order: str = "second",
    hvp_eps: float = 1e-4,
) -> np.ndarray:
    """Outer gradient from loss-gradient callables (the generic core).

    first order: grad L_b(theta'); second order additionally multiplies by
    the exact Jacobian (I - lam * H_a) of the single adaptation step.
    """
    if order not in ("second", "first"):
        raise ValueError(f"order must be 'second' or 'first', got {order!r}")
    g_b = np.asarray(grad_b(theta_prime), dtype=np.float64)
    if order == "first":
        return g_b
    return _second_order_correct(grad_a, theta, g_b, lam, hvp_eps)


def outer_gradient(
    theta: FlatParams,
    theta_prime: FlatParams,
    data_a: Sequence[TrainingSample],
    data_b: Sequence[TrainingSample],
    lam: float,
    kind: ModelKind,
    source_user_emb: np.ndarray,
    target_item_emb: np.ndarray,
    order: str = "second",
    inner_steps: int = 1,
    hvp_eps: float = 1e-4,
) -> np.ndarray:
    """Gradient of the cold-start-phase loss at theta', pulled back to theta."""
    if order == "second" and inner_steps > 1:
        raise ConfigError("second-order outer gradient requires a single inner step")

    def grad_a(p: FlatParams) -> np.ndarray:
        return phase_loss(p, data_a, kind, source_user_emb, target_item_emb)[1]

    def grad_b(p: FlatParams) -> np.ndarray:
        return phase_loss(p, data_b, kind, source_user_emb, target_item_emb)[1]

    return maml_outer_gradient(grad_a, grad_b, theta, theta_prime, lam, order, hvp_eps)


def meta_train(
    source_model: BaseModel,
    target_model: BaseModel,
    target_data: InteractionDataset,
    train_overlap: OverlapSet,
    config: MetaConfig,
) -> MetaTrainResult:
    """Run the meta stage and return the trained network with its loss curve.

    Per iteration: sample a task batch, adapt per group, sum the per-group
    outer gradients, and apply the outer optimizer (Adam by default, or a
    plain step of outer_lr). Records the mean cold-start-phase loss of each
    iteration. Source and target embeddings are read-only throughout.
    """
    if source_model.dim != target_model.dim:
        raise ValueError(
            f"source dim {source_model.dim} != target dim {target_model.dim}"
        )
    d = source_model.dim
    theta = init_meta_network(d, config.seed).to_flat()
    rng = np.random.default_rng(config.seed)
    source_users = source_model.user_embeddings
    target_items = target_model.item_embeddings
    kind = target_model.kind
    adam = AdamState.initial(theta.size, lr=config.outer_lr)
    losses = []
    for iteration in range(config.iterations):
        batch = sample_task_batch(train_overlap, target_data, config, rng)
        total_grad = np.zeros(theta.size)
        group_losses = []
        for group in batch.groups:
            theta_prime = inner_update(
                theta, group.data_a, config.inner_lr, kind,
                source_users, target_items, config.inner_steps,
            )
            value_b, g_b = phase_loss(theta_prime, group.data_b, kind, source_users, target_items)
            group_losses.append(value_b)
            if config.order == "first":
                total_grad += g_b
            else:
                def grad_a(p: FlatParams, _data=group.data_a) -> np.ndarray:
                    return phase_loss(p, _data, kind, source_users, target_items)[1]

                total_grad += _second_order_correct(grad_a, theta, g_b, config.inner_lr, 1e-4)
        if config.outer_optimizer == "adam":
            adam, theta = adam_step(adam, theta, total_grad)
        else:
            theta = sgd_step(theta, total_grad, config.outer_lr)
        if not np.all(np.isfinite(theta.values)):
            raise DivergenceError(f"meta training diverged at iteration {iteration}")
        losses.append(float(np.mean(group_losses)))
    return MetaTrainResult(network=affine_from_flat(MetaNetwork, theta), losses=tuple(losses))


def cold_start_embed(net: MetaNetwork, source_model: BaseModel, user: int) -> np.ndarray:
    """Predicted target-space embedding of a cold-start user."""
    if not 0 <= user < source_model.num_users:
        raise IndexError(f"user index {user} out of range [0, {source_model.num_users})")
    return transform(net, source_model.user_embeddings[user])
