"""On-disk artifacts: embedding containers, networks, split manifests, reports.

The embedding container is a little-endian binary file:

    magic "TMCE" | u32 version (=1) | u32 dim | u64 count
    count rows of dim float32
    count u64 id hashes (blake2b-8 of the external id)

plus a plain-text sidecar (same path + ".ids") listing the external ids,
one per line, in row order. The hash table lets a loader verify the
sidecar belongs to the binary file. Affine networks reuse the container
with dim+1 rows: the weight matrix rows, then the bias.

Reports and split manifests are line-oriented text: `key value` pairs,
then one row per user after a table header. Floats are written with repr
so loading round-trips exactly and reruns diff cleanly.
"""
from __future__ import annotations

import hashlib
import struct
from typing import Sequence

import numpy as np

from .dataset import ColdStartSplit
from .errors import DataError
from .evaluate import EvalReport
from .network import AffineMap

MAGIC = b"TMCE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def stable_id_hash(external_id: str) -> int:
    digest = hashlib.blake2b(external_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def save_embeddings(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    """Write one embedding table (downcast to float32) and its id sidecar."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-d table, got shape {matrix.shape}")
    if len(ids) != matrix.shape[0]:
        raise ValueError(f"{len(ids)} ids for {matrix.shape[0]} rows")
    rows = np.ascontiguousarray(matrix, dtype="<f4")
    hashes = np.array([stable_id_hash(i) for i in ids], dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[1], matrix.shape[0]))
        fh.write(rows.tobytes())
        fh.write(hashes.tobytes())
    with open(f"{path}.ids", "w", encoding="utf-8") as fh:
        for external_id in ids:
            fh.write(f"{external_id}\n")


def load_embeddings(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Load a table saved by save_embeddings; verifies sizes and id hashes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + count * dim * 4 + count * 8
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(blob)}")
    rows = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=_HEADER.size)
    rows = rows.reshape(count, dim).copy()
    hashes = np.frombuffer(blob, dtype="<u8", count=count, offset=_HEADER.size + count * dim * 4)
    try:
        with open(f"{path}.ids", "r", encoding="utf-8") as fh:
            ids = tuple(line.rstrip("\n") for line in fh)
    except FileNotFoundError:
        raise DataError(f"{path}.ids: id sidecar not found") from None
    if len(ids) != count:
        raise DataError(f"{path}.ids: {len(ids)} ids for {count} rows")
    for row, external_id in enumerate(ids):
        if stable_id_hash(external_id) != int(hashes[row]):
            raise DataError(f"{path}: id sidecar does not match row {row} ({external_id!r})")
    return ids, rows


def save_network(path, net: AffineMap) -> None:
    """Persist an affine map as dim+1 rows: weight rows, then the bias."""
    rows = np.vstack([net.weight, net.bias[None, :]])
    ids = [f"w{i}" for i in range(net.dim)] + ["b"]
    save_embeddings(path, ids, rows)


def load_network(path, cls=AffineMap) -> AffineMap:
    ids, rows = load_embeddings(path)
    count, dim = rows.shape
    if count != dim + 1:
        raise DataError(f"{path}: affine network needs {dim + 1} rows of dim {dim}, found {count}")
    if ids[-1] != "b":
        raise DataError(f"{path}: last row must be the bias, found id {ids[-1]!r}")
    rows = rows.astype(np.float64)
    return cls(rows[:dim], rows[dim])


def write_split_manifest(path, split: ColdStartSplit) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# cold-start split manifest\n")
        fh.write(f"ratio {split.ratio!r}\n")
        fh.write(f"seed {split.seed}\n")
        for user in split.train_overlap.users:
            fh.write(f"train {user.external_id}\n")
        for user in split.test_overlap.users:
            fh.write(f"test {user.external_id}\n")


def read_split_manifest(path) -> tuple[float, int, tuple[str, ...], tuple[str, ...]]:
    """Returns (ratio, seed, train ids, test ids)."""
    ratio = None
    seed = None
    train: list[str] = []
    test: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition(" ")
            if key == "ratio":
                ratio = float(value)
            elif key == "seed":
                seed = int(value)
            elif key == "train":
                train.append(value)
            elif key == "test":
                test.append(value)
            else:
                raise DataError(f"{path}:{lineno}: unknown manifest key {key!r}")
    if ratio is None or seed is None or not train or not test:
        raise DataError(f"{path}: incomplete split manifest")
    return ratio, seed, tuple(train), tuple(test)


def write_report(path, report: EvalReport, method: str, extras: dict | None = None) -> None:
    """Serialize an evaluation report as key/value lines plus a per-user table."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# cold-start evaluation report\n")
        fh.write(f"method {method}\n")
        fh.write(f"auc {report.auc!r}\n")
        fh.write(f"ndcg {report.ndcg!r}\n")
        fh.write(f"k {report.k}\n")
        fh.write(f"num_users {report.num_users}\n")
        fh.write(f"num_skipped {report.num_skipped}\n")
        for key, value in (extras or {}).items():
            fh.write(f"{key} {value}\n")
        for message in report.errors:
            fh.write(f"error {message}\n")
        fh.write("per_user user auc ndcg\n")
        for user, auc, ndcg in report.per_user:
            fh.write(f"{user} {auc!r} {ndcg!r}\n")


def read_report(path) -> tuple[dict[str, str], tuple[tuple[str, float, float], ...]]:
    """Returns (header key/value map, per-user rows)."""
    header: dict[str, str] = {}
    rows: list[tuple[str, float, float]] = []
    in_table = False
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if line.startswith("per_user "):
                in_table = True
                continue
            if in_table:
                user, auc, ndcg = line.split(" ")
                rows.append((user, float(auc), float(ndcg)))
            else:
                key, _, value = line.partition(" ")
                header[key] = value
    return header, tuple(rows)
