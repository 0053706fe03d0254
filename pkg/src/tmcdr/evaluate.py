"""Cold-start ranking evaluation: per-user AUC and NDCG@k.

Each held-out overlap user is ranked against the full target-item catalog
(cold-start users have no target-domain training interactions, so nothing
is excluded); their actual target-domain interactions are the positives.
AUC uses the tie-aware rank formulation (ties count half); rankings break
score ties by ascending item index so runs are reproducible. Metrics are
macro-averaged: computed per user, then averaged over users.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import InteractionDataset, OverlapSet, OverlapUser
from .errors import DataError
from .models import BaseModel
from .network import AffineMap, transform

EmbeddingProvider = Callable[[OverlapUser], np.ndarray]


@dataclass(frozen=True)
class EvalReport:
    """Macro-averaged metrics with the per-user breakdown behind them."""

    auc: float
    ndcg: float
    k: int
    per_user: tuple[tuple[str, float, float], ...]  # (external_id, auc, ndcg)
    num_users: int
    num_skipped: int
    errors: tuple[str, ...] = field(default=())


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks in ascending score order; tied scores share their mean rank."""
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return (starts + (counts - 1) / 2.0 + 1.0)[inverse]


def _auc_from_mask(scores: np.ndarray, pos_mask: np.ndarray) -> float | None:
    n_pos = int(pos_mask.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    return float((ranks[pos_mask].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_per_user(scored_items: Sequence[tuple[int, float]], positives: Iterable[int]) -> float | None:
    """Probability a random (positive, negative) pair is ordered correctly.

    Ties count one half. Returns None when the user has no positive or no
    negative among the scored items (the metric is undefined; callers skip
    such users).
    """
    positives = set(positives)
    scores = np.array([s for _, s in scored_items], dtype=np.float64)
    pos_mask = np.array([item in positives for item, _ in scored_items], dtype=bool)
    return _auc_from_mask(scores, pos_mask)


def ndcg_at_k(ranking: Sequence[int], positives: Iterable[int], k: int) -> float:
    """Binary-gain NDCG over the top k of an already-ordered item list."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    positives = set(positives)
    if not positives:
        raise ValueError("positives set is empty")
    dcg = sum(
        1.0 / np.log2(rank + 1)
        for rank, item in enumerate(ranking[:k], start=1)
        if item in positives
    )
    ideal = sum(1.0 / np.log2(rank + 1) for rank in range(1, min(k, len(positives)) + 1))
    return float(dcg / ideal)


def rank_items(scores: np.ndarray) -> np.ndarray:
    """Item indices sorted by descending score, ties broken by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def affine_embedder(net: AffineMap, source_model: BaseModel) -> EmbeddingProvider:
    """Provider that maps each test user's source embedding through the network."""

    def embed(user: OverlapUser) -> np.ndarray:
        if not 0 <= user.source_index < source_model.num_users:
            raise IndexError(
                f"user {user.external_id!r}: source index {user.source_index} out of range"
            )
        return transform(net, source_model.user_embeddings[user.source_index])

    return embed


def target_oracle_embedder(target_model: BaseModel) -> EmbeddingProvider:
    """Upper-bound provider: the user's true pretrained target embedding."""

    def embed(user: OverlapUser) -> np.ndarray:
        if not 0 <= user.target_index < target_model.num_users:
            raise IndexError(
                f"user {user.external_id!r}: target index {user.target_index} out of range"
            )
        return target_model.user_embeddings[user.target_index]

    return embed


def evaluate_cold_start(
    test_overlap: OverlapSet,
    embed: EmbeddingProvider,
    target_model: BaseModel,
    target_data: InteractionDataset,
    k: int = 10,
) -> EvalReport:
    """Rank the full target catalog for every held-out user and aggregate.

    Scoring follows the target model's kind: dot product, or negative
    squared distance for cml. Users whose embedding lookup fails, or whose
    positives leave no (positive, negative) pair, are skipped and counted.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    items = target_model.item_embeddings
    num_items = items.shape[0]
    item_sq = np.einsum("ij,ij->i", items, items) if target_model.kind.name == "cml" else None
    per_user = []
    errors = []
    skipped = 0
    for user in test_overlap.users:
        try:
            u = np.asarray(embed(user), dtype=np.float64)
        except LookupError as exc:
            errors.append(f"{user.external_id}: {exc}")
            skipped += 1
            continue
        if u.shape != (items.shape[1],):
            raise ValueError(
                f"user {user.external_id!r}: embedding shape {u.shape} does not match item dim"
            )
        if target_model.kind.name == "cml":
            scores = 2.0 * (items @ u) - item_sq - float(u @ u)
        else:
            scores = items @ u
        positives = target_data.per_user_items[user.target_index]
        pos_mask = np.zeros(num_items, dtype=bool)
        pos_mask[list(positives)] = True
        auc = _auc_from_mask(scores, pos_mask)
        if auc is None:
            skipped += 1
            continue
        ndcg = ndcg_at_k(rank_items(scores), positives, k)
        per_user.append((user.external_id, auc, ndcg))
    if not per_user:
        raise DataError("no evaluable users: every test user was skipped")
    return EvalReport(
        auc=float(np.mean([a for _, a, _ in per_user])),
        ndcg=float(np.mean([n for _, _, n in per_user])),
        k=k,
        per_user=tuple(per_user),
        num_users=len(per_user),
        num_skipped=skipped,
        errors=tuple(errors),
    )
