from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmcdr.dataset import (
    InteractionDataset,
    find_overlap,
    load_interactions,
    sample_negatives,
    save_interactions,
    split_cold_start,
)
from tmcdr.errors import DataError, SamplingError

from conftest import make_dataset, random_dataset


def write(tmp_path, text, name="data.tsv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadInteractions:
    def test_positive_ratings_become_interactions(self, tmp_path):
        path = write(tmp_path, "a\tx\t5.0\nb\ty\t1.0\nc\tz\t3.0\n")
        ds = load_interactions(path)
        assert ds.num_interactions == 3
        assert ds.num_users == 3 and ds.num_items == 3

    def test_duplicate_pairs_collapse(self, tmp_path):
        path = write(tmp_path, "a\tx\t5\na\tx\t2\n")
        ds = load_interactions(path)
        assert ds.num_interactions == 1

    def test_dense_indices_first_appearance_order(self, tmp_path):
        path = write(tmp_path, "b\ty\t1\na\tx\t1\nb\tx\t1\n")
        ds = load_interactions(path)
        assert ds.user_ids == ("b", "a")
        assert ds.item_ids == ("y", "x")
        assert ds.user_index == {"b": 0, "a": 1}

    def test_zero_rating_rows_dropped(self, tmp_path):
        path = write(tmp_path, "a\tx\t0\nb\ty\t2\n")
        ds = load_interactions(path)
        assert ds.num_interactions == 1
        assert "a" not in ds.user_index

    def test_comments_blank_lines_and_extra_columns(self, tmp_path):
        path = write(tmp_path, "# header\n\na\tx\t2\t1234567\n")
        ds = load_interactions(path)
        assert ds.num_interactions == 1

    def test_csv_format(self, tmp_path):
        path = write(tmp_path, "a,x,5\nb,y,3\n", "data.csv")
        ds = load_interactions(path, fmt="csv")
        assert ds.num_interactions == 2

    def test_malformed_row_names_line_number(self, tmp_path):
        path = write(tmp_path, "a\tx\t5\nbroken-row\n")
        with pytest.raises(DataError, match=":2:"):
            load_interactions(path)

    def test_non_numeric_rating_names_line_number(self, tmp_path):
        path = write(tmp_path, "a\tx\tfive\n")
        with pytest.raises(DataError, match=":1:.*five"):
            load_interactions(path)

    def test_empty_file_rejected(self, tmp_path):
        path = write(tmp_path, "")
        with pytest.raises(DataError, match="no interactions"):
            load_interactions(path)

    def test_unknown_format_rejected(self, tmp_path):
        path = write(tmp_path, "a\tx\t1\n")
        with pytest.raises(ValueError, match="format"):
            load_interactions(path, fmt="xlsx")

    def test_per_user_sizes_match_independent_recount(self, tmp_path, rng):
        # independent oracle: count distinct positive (user, item) rows by hand
        lines = []
        for _ in range(100):
            u = f"u{rng.integers(12)}"
            i = f"i{rng.integers(20)}"
            r = float(rng.integers(0, 6))
            lines.append(f"{u}\t{i}\t{r}")
        path = write(tmp_path, "\n".join(lines) + "\n")
        distinct = {
            (line.split("\t")[0], line.split("\t")[1])
            for line in lines
            if float(line.split("\t")[2]) > 0
        }
        ds = load_interactions(path)
        assert sum(len(s) for s in ds.per_user_items) == ds.num_interactions == len(distinct)

    def test_round_trip_is_identity(self, tmp_path, rng):
        first = random_dataset(rng, num_users=10, num_items=15)
        path = tmp_path / "out.tsv"
        save_interactions(first, path)
        second = load_interactions(path)
        assert dataclasses.replace(second, domain_id=first.domain_id) == first

    def test_dense_index_bijection(self, rng):
        ds = random_dataset(rng)
        for i, uid in enumerate(ds.user_ids):
            assert ds.user_index[uid] == i
        for i, iid in enumerate(ds.item_ids):
            assert ds.item_index[iid] == i


class TestFindOverlap:
    def test_intersection(self):
        src = make_dataset("s", [("a", "x"), ("b", "x"), ("c", "y")])
        tgt = make_dataset("t", [("b", "p"), ("c", "q"), ("d", "p")])
        overlap = find_overlap(src, tgt)
        assert overlap.external_ids() == ("b", "c")
        for user in overlap.users:
            assert src.user_ids[user.source_index] == user.external_id
            assert tgt.user_ids[user.target_index] == user.external_id

    def test_disjoint_users_rejected(self):
        src = make_dataset("s", [("a", "x")])
        tgt = make_dataset("t", [("b", "y")])
        with pytest.raises(DataError, match="no overlapping users"):
            find_overlap(src, tgt)

    def test_planted_overlap_matches_brute_force(self, rng):
        shared = [f"ov{i}" for i in range(200)]
        src_ids = shared + [f"s{i}" for i in range(800)]
        tgt_ids = shared + [f"t{i}" for i in range(800)]
        rng.shuffle(src_ids)
        rng.shuffle(tgt_ids)
        src = make_dataset("s", [(u, "x") for u in src_ids])
        tgt = make_dataset("t", [(u, "y") for u in tgt_ids])
        overlap = find_overlap(src, tgt)
        brute = {a for a in src_ids for b in tgt_ids if a == b}
        assert set(overlap.external_ids()) == brute == set(shared)


class TestSplitColdStart:
    def overlap(self, n):
        src = make_dataset("s", [(f"u{i}", "x") for i in range(n)])
        tgt = make_dataset("t", [(f"u{i}", "y") for i in range(n)])
        return find_overlap(src, tgt)

    def test_ten_users_ratio_point_two(self):
        split = split_cold_start(self.overlap(10), 0.2, seed=7)
        assert len(split.test_overlap) == 2
        assert len(split.train_overlap) == 8
        assert not set(split.test_overlap.external_ids()) & set(split.train_overlap.external_ids())

    def test_same_seed_same_split(self):
        a = split_cold_start(self.overlap(30), 0.25, seed=3)
        b = split_cold_start(self.overlap(30), 0.25, seed=3)
        assert a == b

    def test_894_users_gives_179_test(self):
        split = split_cold_start(self.overlap(894), 0.2, seed=0)
        assert len(split.test_overlap) == 179

    def test_ratio_bounds(self):
        for ratio in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError, match="ratio"):
                split_cold_start(self.overlap(10), ratio, seed=0)

    def test_degenerate_split_rejected(self):
        with pytest.raises(DataError, match="empty side"):
            split_cold_start(self.overlap(2), 0.1, seed=0)

    @given(n=st.integers(2, 60), ratio=st.floats(0.05, 0.95), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, ratio, seed):
        n_test = int(np.floor(ratio * n + 0.5))
        if n_test in (0, n):
            return
        overlap = self.overlap(n)
        split = split_cold_start(overlap, ratio, seed)
        train = set(split.train_overlap.external_ids())
        test = set(split.test_overlap.external_ids())
        assert train | test == set(overlap.external_ids())
        assert not train & test
        assert len(test) == n_test


class TestSampleNegatives:
    def test_forced_complement(self, rng):
        ds = make_dataset("d", [("u", f"i{i}") for i in range(6)] + [("v", f"i{i}") for i in range(6, 10)])
        got = sample_negatives(ds, ds.user_index["u"], 4, rng)
        assert sorted(got) == [6, 7, 8, 9]

    def test_negatives_never_positive(self, rng):
        ds = random_dataset(rng, num_users=6, num_items=20)
        for u in range(ds.num_users):
            k = min(4, ds.num_items - len(ds.per_user_items[u]))
            if k < 1:
                continue
            negs = sample_negatives(ds, u, k, rng)
            assert len(set(negs)) == k
            assert not set(negs) & ds.per_user_items[u]

    def test_no_candidates_rejected(self, rng):
        ds = make_dataset("d", [("u", f"i{i}") for i in range(3)])
        with pytest.raises(SamplingError, match="candidates"):
            sample_negatives(ds, 0, 1, rng)

    def test_k_validation(self, rng):
        ds = make_dataset("d", [("u", "a"), ("v", "b")])
        with pytest.raises(ValueError, match="k"):
            sample_negatives(ds, 0, 0, rng)

    def test_uniformity_over_candidates(self):
        # one user with 10 positives out of 110 items: 100 candidates
        pairs = [("u", f"i{i}") for i in range(10)]
        pairs += [("w", f"i{i}") for i in range(110)]
        ds = make_dataset("d", pairs)
        rng = np.random.default_rng(3)
        counts = np.zeros(110)
        for _ in range(10_000):
            (j,) = sample_negatives(ds, 0, 1, rng)
            counts[j] += 1
        assert counts[:10].sum() == 0
        expected = 10_000 / 100
        sigma = np.sqrt(10_000 * (1 / 100) * (99 / 100))
        assert np.all(np.abs(counts[10:] - expected) <= 3 * sigma)
        # chi-square statistic with 99 dof should sit well under the 0.999 quantile
        chi2 = float(((counts[10:] - expected) ** 2 / expected).sum())
        assert chi2 < 149.0

    @given(seed=st.integers(0, 10_000), data=st.data())
    @settings(max_examples=50, deadline=None)
    def test_purity_property(self, seed, data):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng, num_users=4, num_items=10, density=0.5)
        user = data.draw(st.integers(0, ds.num_users - 1))
        spare = ds.num_items - len(ds.per_user_items[user])
        if spare < 1:
            return
        k = data.draw(st.integers(1, spare))
        negs = sample_negatives(ds, user, k, rng)
        assert not set(negs) & ds.per_user_items[user]
        assert len(set(negs)) == k
