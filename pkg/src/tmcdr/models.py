"""Base embedding models: scoring, losses, and analytic gradients.

Four model families over binary implicit feedback share one embedding
layout (a user table and an item table):

* mf        - logistic loss on the dot product, one term per labeled item
* bpr       - pairwise logistic loss on score differences (positive vs negative)
* listrank  - listwise cross-entropy between the top-one softmax of labels
              and of scores
* cml       - squared-distance hinge with a margin, embeddings kept inside
              the unit ball

All losses return both the value and analytic gradients; the gradients are
verified against central finite differences in the test suite. Higher
score always means "more preferred" (cml scores are negated squared
distances).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TrainingSample

_KIND_NAMES = ("mf", "bpr", "listrank", "cml")


@dataclass(frozen=True)
class ModelKind:
    """Model family tag; cml additionally carries its hinge margin."""

    name: str
    margin: float | None = None

    def __post_init__(self):
        if self.name not in _KIND_NAMES:
            raise ValueError(f"unknown model kind {self.name!r}, expected one of {_KIND_NAMES}")
        if self.name == "cml":
            if self.margin is None:
                object.__setattr__(self, "margin", 0.5)
            if not (np.isfinite(self.margin) and self.margin > 0):
                raise ValueError(f"cml margin must be finite and > 0, got {self.margin}")
        elif self.margin is not None:
            raise ValueError(f"margin only applies to cml, not {self.name!r}")


MF = ModelKind("mf")
BPR = ModelKind("bpr")
LISTRANK_MF = ModelKind("listrank")


def cml(margin: float = 0.5) -> ModelKind:
    return ModelKind("cml", margin)


@dataclass(frozen=True)
class BaseModel:
    """A trained embedding model for one domain.

    Arrays are copied and frozen at construction: the meta stage and the
    evaluator rely on pretrained embeddings never changing underneath them.
    """

    kind: ModelKind
    user_embeddings: np.ndarray
    item_embeddings: np.ndarray

    def __post_init__(self):
        for attr in ("user_embeddings", "item_embeddings"):
            arr = np.array(getattr(self, attr), dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"{attr} must be 2-d, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{attr} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if self.user_embeddings.shape[1] != self.item_embeddings.shape[1]:
            raise ValueError("user and item embedding dimensions differ")
        if self.kind.name == "cml":
            # tolerance admits float32 round-trips of unit-norm rows
            for attr in ("user_embeddings", "item_embeddings"):
                norms = np.linalg.norm(getattr(self, attr), axis=1)
                if np.any(norms > 1 + 1e-6):
                    raise ValueError(f"cml {attr} has rows outside the unit ball")

    @property
    def dim(self) -> int:
        return self.user_embeddings.shape[1]

    @property
    def num_users(self) -> int:
        return self.user_embeddings.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_embeddings.shape[0]


@dataclass(frozen=True)
class LossGradient:
    """A loss value with its gradients w.r.t. the user vector and each item
    vector involved. Item keys are list positions for the elementary losses
    and dataset item indices for sample_loss."""

    value: float
    d_user: np.ndarray
    d_items: tuple[tuple[int, np.ndarray], ...]


def _as_vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return v


def _check_same_dim(*vecs: np.ndarray) -> None:
    dims = {v.shape[0] for v in vecs}
    if len(dims) > 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def sigmoid(x):
    # tanh form is stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def softplus(x):
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def score(kind: ModelKind, u, v) -> float:
    """Preference score of item v for user u (higher is better)."""
    u, v = _as_vec(u), _as_vec(v)
    _check_same_dim(u, v)
    if kind.name == "cml":
        d = u - v
        return -float(d @ d)
    return float(u @ v)


def loss_mf(u, v, label) -> LossGradient:
    """Logistic loss on the dot product for a single binary-labeled item."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    u, v = _as_vec(u), _as_vec(v)
    _check_same_dim(u, v)
    s = u @ v
    value = softplus(-s) if label == 1 else softplus(s)
    coef = sigmoid(s) - label
    return LossGradient(float(value), coef * v, ((0, coef * u),))


def loss_bpr(u, v_pos, v_neg) -> LossGradient:
    """Pairwise logistic loss: the positive should outscore the negative."""
    u, v_pos, v_neg = _as_vec(u), _as_vec(v_pos), _as_vec(v_neg)
    _check_same_dim(u, v_pos, v_neg)
    diff_vec = v_pos - v_neg
    diff = u @ diff_vec
    value = softplus(-diff)
    coef = -sigmoid(-diff)  # == sigmoid(diff) - 1
    return LossGradient(float(value), coef * diff_vec, ((0, coef * u), (1, -coef * u)))


def loss_listrank(u, items) -> LossGradient:
    """Listwise cross-entropy between label softmax and score softmax.

    Args:
        u: user vector.
        items: sequence of (item_vector, label) with labels in {0, 1} and at
            least one positive.
    """
    if not items:
        raise ValueError("item list is empty")
    u = _as_vec(u)
    vecs = [_as_vec(v) for v, _ in items]
    _check_same_dim(u, *vecs)
    labels = np.array([lab for _, lab in items], dtype=np.float64)
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ValueError("labels must be 0 or 1")
    if not np.any(labels == 1.0):
        raise ValueError("at least one label must be 1")
    V = np.stack(vecs)
    scores = V @ u
    t = _softmax(labels)
    # cross-entropy via logsumexp keeps the value exactly shift-invariant
    m = scores.max()
    lse = m + np.log(np.exp(scores - m).sum())
    value = lse - float(t @ scores)
    d_score = _softmax(scores) - t
    d_user = d_score @ V
    d_items = tuple((i, d_score[i] * u) for i in range(len(items)))
    return LossGradient(float(value), d_user, d_items)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def loss_cml(u, v_pos, v_neg, margin: float) -> LossGradient:
    """Squared-distance hinge: positive must be closer than negative by margin."""
    if not (np.isfinite(margin) and margin > 0):
        raise ValueError(f"margin must be finite and > 0, got {margin}")
    u, v_pos, v_neg = _as_vec(u), _as_vec(v_pos), _as_vec(v_neg)
    _check_same_dim(u, v_pos, v_neg)
    dp = u - v_pos
    dn = u - v_neg
    activation = margin + dp @ dp - dn @ dn
    if activation <= 0:
        z = np.zeros_like(u)
        return LossGradient(0.0, z, ((0, z.copy()), (1, z.copy())))
    return LossGradient(float(activation), 2.0 * (dp - dn), ((0, -2.0 * dp), (1, 2.0 * dn)))


def project_unit_ball(vec) -> np.ndarray:
    """Scale vec onto the unit ball if its norm exceeds 1."""
    vec = _as_vec(vec)
    norm = np.linalg.norm(vec)
    return vec if norm <= 1.0 else vec / norm


def project_rows_unit_ball(matrix: np.ndarray) -> np.ndarray:
    """Row-wise unit-ball projection (returns a new array)."""
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.maximum(norms, 1.0)


def sample_loss(
    user_vec: np.ndarray,
    kind: ModelKind,
    sample: TrainingSample,
    item_embeddings: np.ndarray,
) -> LossGradient:
    """Loss of one training sample (positive plus its sampled negatives).

    Per kind: mf treats the negatives as k label-0 terms; bpr and cml form
    one (positive, negative) pair term per negative; listrank ranks the
    list {positive} + negatives with the positive labeled 1. The user
    vector may be a model row or a transformed source embedding; item
    gradients are keyed by dataset item index.
    """
    u = _as_vec(user_vec)
    if not sample.neg_items:
        raise ValueError("sample has no negatives")
    pos, negs = sample.pos_item, sample.neg_items
    v_pos = item_embeddings[pos]
    V_neg = item_embeddings[list(negs)]
    _check_same_dim(u, v_pos)

    if kind.name == "mf":
        V = np.vstack([v_pos[None, :], V_neg])
        labels = np.zeros(len(negs) + 1)
        labels[0] = 1.0
        s = V @ u
        value = float(np.sum(np.where(labels == 1.0, softplus(-s), softplus(s))))
        coefs = sigmoid(s) - labels
        d_user = coefs @ V
        d_items = tuple(zip((pos, *negs), coefs[:, None] * u))
        return LossGradient(value, d_user, d_items)

    if kind.name == "bpr":
        diff_vecs = v_pos[None, :] - V_neg
        diffs = diff_vecs @ u
        value = float(np.sum(softplus(-diffs)))
        coefs = -sigmoid(-diffs)
        d_user = coefs @ diff_vecs
        d_pos = float(coefs.sum()) * u
        d_items = ((pos, d_pos),) + tuple(zip(negs, -coefs[:, None] * u))
        return LossGradient(value, d_user, d_items)

    if kind.name == "cml":
        dp = u - v_pos
        dn = u - V_neg
        activations = kind.margin + dp @ dp - np.sum(dn * dn, axis=1)
        active = activations > 0
        value = float(np.sum(activations[active]))
        n_active = int(active.sum())
        d_user = 2.0 * (n_active * dp - dn[active].sum(axis=0))
        d_pos = -2.0 * n_active * dp
        d_negs = np.where(active[:, None], 2.0 * dn, 0.0)
        d_items = ((pos, d_pos),) + tuple(zip(negs, d_negs))
        return LossGradient(value, d_user, d_items)

    # listrank
    items = [(v_pos, 1)] + [(V_neg[j], 0) for j in range(len(negs))]
    lg = loss_listrank(u, items)
    remapped = tuple(((pos, *negs)[i], g) for i, g in lg.d_items)
    return LossGradient(lg.value, lg.d_user, remapped)
