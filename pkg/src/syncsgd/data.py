"""Datasets (MNIST IDX files or synthetic clusters), sharding and mini-batches."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (n, d), float32 in [0, 1]
    Y: np.ndarray  # (n, k), one-hot float32
    provenance: str = ""

    def __post_init__(self):
        if len(self.X) != len(self.Y):
            raise ValueError(f"{len(self.X)} feature rows but {len(self.Y)} labels")

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.Y.shape[1]

    def batch(self, indices):
        return self.X[indices], self.Y[indices]

    def subset(self, count: int) -> "Dataset":
        return Dataset(self.X[:count], self.Y[:count], f"{self.provenance}[:{count}]")


@dataclass(frozen=True)
class Shard:
    rank: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.stop)


def one_hot(labels, k) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.size, k), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1.0
    return out


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_header(path, magic, what, fields):
    """Raw bytes plus the header fields; the magic is checked before the length."""
    with _open(path) as f:
        raw = f.read()
    if len(raw) >= 4:
        (found,) = struct.unpack_from(">I", raw)
        if found != magic:
            raise IdxFormatError(f"{path}: bad {what} magic 0x{found:08x}")
    size = 4 * (fields + 1)
    if len(raw) < size:
        raise IdxFormatError(f"{path}: truncated header")
    return raw, struct.unpack_from(">" + "I" * fields, raw, 4), size


def _read_images(path):
    raw, (count, rows, cols), offset = _read_header(path, IDX_IMAGES_MAGIC, "image", 3)
    need = count * rows * cols
    if len(raw) - offset < need:
        raise IdxFormatError(f"{path}: truncated, expected {need} pixel bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=offset).reshape(
        count, rows * cols)


def _read_labels(path):
    raw, (count,), offset = _read_header(path, IDX_LABELS_MAGIC, "label", 1)
    if len(raw) - offset < count:
        raise IdxFormatError(f"{path}: truncated, expected {count} labels")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=offset)


def read_idx_pixels(images_path) -> np.ndarray:
    """Raw uint8 pixels, shape (n, rows*cols)."""
    return _read_images(images_path)


def load_idx(images_path, labels_path, num_classes=10) -> Dataset:
    pixels = _read_images(images_path)
    labels = _read_labels(labels_path)
    if len(pixels) != len(labels):
        raise IdxFormatError(f"{len(pixels)} images but {len(labels)} labels")
    if labels.size and labels.max() >= num_classes:
        raise IdxFormatError(f"label {labels.max()} outside {num_classes} classes")
    X = pixels.astype(np.float32) / np.float32(255.0)
    return Dataset(X, one_hot(labels, num_classes), f"idx:{Path(images_path).name}")


def write_idx(images_path, labels_path, pixels, labels, rows=None, cols=None):
    """Write uint8 pixels (n, rows*cols) and labels as IDX files."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, d = pixels.shape
    if rows is None:
        rows = int(round(np.sqrt(d)))
        cols = d // rows
    if rows * cols != d:
        raise ValueError(f"{rows}x{cols} does not cover {d} pixels")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def synth(n, d, k, seed=0, spread=0.1) -> Dataset:
    """k Gaussian clusters in [0,1]^d with balanced class counts."""
    if n < 1 or d < 1 or k < 1:
        raise ValueError(f"synth needs n, d, k >= 1, got n={n} d={d} k={k}")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.2, 0.8, size=(k, d))
    labels = rng.permutation(np.arange(n) % k)
    X = means[labels] + spread * rng.standard_normal((n, d))
    np.clip(X, 0.0, 1.0, out=X)
    return Dataset(X.astype(np.float32), one_hot(labels, k), f"synth({n},{d},{k},{seed})")


def shard_sizes(n, w) -> list:
    if w < 1:
        raise ValueError(f"need at least one worker, got {w}")
    if n < w:
        raise ValueError(f"cannot split {n} samples over {w} workers")
    base, extra = divmod(n, w)
    return [base + (r < extra) for r in range(w)]


def partition(dataset, w) -> list:
    """Contiguous, balanced shards; ``dataset`` may also be a sample count."""
    n = dataset if isinstance(dataset, int) else dataset.n
    shards, start = [], 0
    for rank, size in enumerate(shard_sizes(n, w)):
        shards.append(Shard(rank, start, start + size))
        start += size
    return shards


def minibatches(shard: Shard, b, seed=0, epoch=0) -> list:
    """Index arrays for one epoch over ``shard``; the last batch may be short."""
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    rng = np.random.default_rng([seed, epoch, shard.rank])
    order = shard.start + rng.permutation(shard.size)
    return [order[i:i + b] for i in range(0, shard.size, b)]


def batches_per_epoch(n, w, b) -> int:
    """Synchronous iterations per epoch: the longest shard sets the pace."""
    return -(-max(shard_sizes(n, w)) // b)
