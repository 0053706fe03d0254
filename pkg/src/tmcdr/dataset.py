"""Two-domain interaction data: loading, binarization, overlap, splits, negatives.

A domain's ratings file is reduced to binary implicit feedback: every row
with a positive rating becomes a label-1 interaction, and the 0 class only
ever appears through negative sampling. External user/item ids are mapped
to dense indices in first-appearance order so identical input files always
produce identical datasets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError, SamplingError

_DELIMITERS = {"tsv": "\t", "csv": ","}


class OverlapUser(NamedTuple):
    source_index: int
    target_index: int
    external_id: str


@dataclass(frozen=True)
class InteractionDataset:
    """One domain's binarized interactions with dense id maps.

    Immutable after construction; safe for concurrent reads.
    """

    domain_id: str
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    user_index: dict[str, int]
    item_index: dict[str, int]
    interactions: tuple[tuple[int, int], ...]
    per_user_items: tuple[frozenset[int], ...]

    def __post_init__(self):
        if not self.interactions:
            raise DataError(f"domain {self.domain_id!r}: no interactions")
        if len(self.user_ids) != len(self.user_index) or any(
            self.user_index[u] != i for i, u in enumerate(self.user_ids)
        ):
            raise DataError(f"domain {self.domain_id!r}: user index is not dense")
        if len(self.item_ids) != len(self.item_index) or any(
            self.item_index[it] != i for i, it in enumerate(self.item_ids)
        ):
            raise DataError(f"domain {self.domain_id!r}: item index is not dense")
        if len(set(self.interactions)) != len(self.interactions):
            raise DataError(f"domain {self.domain_id!r}: duplicate interactions")
        inverse = [set() for _ in self.user_ids]
        for u, i in self.interactions:
            inverse[u].add(i)
        if tuple(frozenset(s) for s in inverse) != self.per_user_items:
            raise DataError(
                f"domain {self.domain_id!r}: per_user_items is not the inverse of interactions"
            )

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    @property
    def num_interactions(self) -> int:
        return len(self.interactions)

    @classmethod
    def from_pairs(cls, domain_id: str, pairs: Iterable[tuple[str, str]]) -> "InteractionDataset":
        """Build a dataset from (user_id, item_id) pairs, deduplicating and
        assigning dense indices in first-appearance order."""
        user_index: dict[str, int] = {}
        item_index: dict[str, int] = {}
        seen: set[tuple[int, int]] = set()
        interactions: list[tuple[int, int]] = []
        for user_id, item_id in pairs:
            u = user_index.setdefault(user_id, len(user_index))
            i = item_index.setdefault(item_id, len(item_index))
            if (u, i) not in seen:
                seen.add((u, i))
                interactions.append((u, i))
        per_user: list[set[int]] = [set() for _ in user_index]
        for u, i in interactions:
            per_user[u].add(i)
        return cls(
            domain_id=domain_id,
            user_ids=tuple(user_index),
            item_ids=tuple(item_index),
            user_index=user_index,
            item_index=item_index,
            interactions=tuple(interactions),
            per_user_items=tuple(frozenset(s) for s in per_user),
        )


@dataclass(frozen=True)
class OverlapSet:
    """Users present in both domains, with their dense index in each."""

    users: tuple[OverlapUser, ...]

    def __post_init__(self):
        ids = [u.external_id for u in self.users]
        if len(set(ids)) != len(ids):
            raise DataError("overlap set has duplicate external ids")

    def __len__(self) -> int:
        return len(self.users)

    def external_ids(self) -> tuple[str, ...]:
        return tuple(u.external_id for u in self.users)


@dataclass(frozen=True)
class ColdStartSplit:
    train_overlap: OverlapSet
    test_overlap: OverlapSet
    seed: int
    ratio: float


@dataclass(frozen=True)
class TrainingSample:
    """One positive interaction plus its sampled negatives."""

    user: int
    pos_item: int
    neg_items: tuple[int, ...]


def load_interactions(path, fmt: str = "tsv") -> InteractionDataset:
    """Load one domain's ratings file as binarized interactions.

    Each data row is user_id, item_id, rating (extra columns ignored);
    rows with rating > 0 become label-1 interactions, duplicates collapse.
    Lines starting with '#' and blank lines are skipped.
    """
    if fmt not in _DELIMITERS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {sorted(_DELIMITERS)}")
    delim = _DELIMITERS[fmt]
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split(delim)
            if len(cols) < 3:
                raise DataError(f"{path}:{lineno}: expected at least 3 columns, got {len(cols)}")
            try:
                rating = float(cols[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: rating {cols[2]!r} is not a number") from None
            if rating > 0:
                pairs.append((cols[0], cols[1]))
    if not pairs:
        raise DataError(f"{path}: no interactions found")
    return InteractionDataset.from_pairs(str(path), pairs)


def save_interactions(dataset: InteractionDataset, path, fmt: str = "tsv") -> None:
    """Write a dataset back out as a ratings file (all ratings 1)."""
    if fmt not in _DELIMITERS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {sorted(_DELIMITERS)}")
    delim = _DELIMITERS[fmt]
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in dataset.interactions:
            fh.write(f"{dataset.user_ids[u]}{delim}{dataset.item_ids[i]}{delim}1\n")


def find_overlap(source: InteractionDataset, target: InteractionDataset) -> OverlapSet:
    """External user ids present in both domains, in source order."""
    users = tuple(
        OverlapUser(src_idx, target.user_index[uid], uid)
        for uid, src_idx in source.user_index.items()
        if uid in target.user_index
    )
    if not users:
        raise DataError(
            f"no overlapping users between {source.domain_id!r} and {target.domain_id!r}"
        )
    return OverlapSet(users)


def split_cold_start(overlap: OverlapSet, ratio: float, seed: int) -> ColdStartSplit:
    """Hold out round(ratio * n) overlap users as simulated cold-start users.

    The shuffle is deterministic given the seed; rounding is half-up.
    Both sides keep the original overlap order.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(overlap)
    if n < 2:
        raise DataError(f"cannot split an overlap of {n} user(s)")
    n_test = int(np.floor(ratio * n + 0.5))
    if n_test == 0 or n_test == n:
        raise DataError(f"split of {n} users at ratio {ratio} leaves an empty side")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_pos = set(perm[:n_test].tolist())
    train = tuple(u for i, u in enumerate(overlap.users) if i not in test_pos)
    test = tuple(u for i, u in enumerate(overlap.users) if i in test_pos)
    return ColdStartSplit(
        train_overlap=OverlapSet(train),
        test_overlap=OverlapSet(test),
        seed=seed,
        ratio=ratio,
    )


def sample_negatives(
    dataset: InteractionDataset, user: int, k: int, rng: np.random.Generator
) -> tuple[int, ...]:
    """Draw k items the user has not interacted with, uniformly without replacement."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    positives = dataset.per_user_items[user]
    n_candidates = dataset.num_items - len(positives)
    if n_candidates < k:
        raise SamplingError(
            f"user {dataset.user_ids[user]!r}: {n_candidates} negative candidates, need {k}"
        )
    if n_candidates <= 4 * k:
        # dense user: enumerate the complement
        candidates = np.array(sorted(set(range(dataset.num_items)) - positives))
        chosen = rng.choice(candidates, size=k, replace=False)
        return tuple(int(i) for i in chosen)
    # sparse user: rejection sampling
    drawn: list[int] = []
    taken = set(positives)
    while len(drawn) < k:
        j = int(rng.integers(dataset.num_items))
        if j not in taken:
            taken.add(j)
            drawn.append(j)
    return tuple(drawn)


def build_samples(
    dataset: InteractionDataset,
    positives: Iterable[tuple[int, int]],
    k: int,
    rng: np.random.Generator,
) -> list[TrainingSample]:
    """Attach k fresh negatives to each (user, pos_item) pair."""
    return [
        TrainingSample(user=u, pos_item=i, neg_items=sample_negatives(dataset, u, k, rng))
        for u, i in positives
    ]
