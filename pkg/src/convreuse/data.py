"""CIFAR-10 binary parsing, deterministic splits, and mini-batch serving.

The binary layout is one 3073-byte record per image: a label byte in
0..9 followed by 3072 pixel bytes (red plane, green plane, blue plane,
each 32x32 row-major). Pixels are normalized to [0, 1] by /255 at parse
time; serialization inverts that exactly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, SplitError
from .seeding import mix64
from .tensor import Tensor

RECORD_BYTES = 3073
PIXEL_BYTES = 3072
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
RECORDS_PER_FILE = 10_000


@dataclass
class Example:
    label: int
    pixels: np.ndarray  # (3, 32, 32) float32 in [0, 1]


@dataclass
class DatasetSplit:
    train: list[Example]
    validation: list[Example]
    source_checksum: int
    subset_fraction: tuple[float, float]
    _train_stack: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    _val_stack: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def train_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (pixels, labels) for the train side, computed once."""
        if self._train_stack is None:
            self._train_stack = _stack(self.train)
        return self._train_stack

    def val_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._val_stack is None:
            self._val_stack = _stack(self.validation)
        return self._val_stack


def _stack(examples: list[Example]) -> tuple[np.ndarray, np.ndarray]:
    pixels = np.stack([e.pixels for e in examples]).astype(np.float32)
    labels = np.array([e.label for e in examples], dtype=np.int64)
    return pixels, labels


def parse_batch_file(raw: bytes) -> list[Example]:
    """Decode 3073-byte records into normalized Examples."""
    if len(raw) == 0 or len(raw) % RECORD_BYTES != 0:
        complete = (len(raw) // RECORD_BYTES) * RECORD_BYTES
        raise DataFormatError(
            f"truncated file: {len(raw)} bytes is not a positive multiple of "
            f"{RECORD_BYTES}; last complete record ends at byte {complete}",
            byte_offset=complete,
        )
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = arr[:, 0]
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        first = int(bad[0])
        raise DataFormatError(
            f"corrupt record {first}: label byte {int(labels[first])} > 9",
            byte_offset=first * RECORD_BYTES,
        )
    pixels = arr[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / np.float32(255)
    return [Example(int(l), p) for l, p in zip(labels, pixels)]


def serialize_examples(examples: list[Example]) -> bytes:
    """Inverse of parse_batch_file; byte-exact round trip."""
    out = bytearray()
    for e in examples:
        out.append(e.label)
        raw = np.rint(e.pixels * 255.0).astype(np.uint8)
        out.extend(raw.tobytes())
    return bytes(out)


def load_directory(data_dir: str | Path,
                   include_test: bool = True) -> tuple[list[Example], list[Example], int]:
    """Read the binary batch files; returns (train, test, crc32-of-all-bytes).

    Per-file byte counts are verified before parsing.
    """
    data_dir = Path(data_dir)
    checksum = 0
    train: list[Example] = []
    names = list(TRAIN_FILES) + ([TEST_FILE] if include_test else [])
    test: list[Example] = []
    for name in names:
        path = data_dir / name
        if not path.is_file():
            raise DataFormatError(f"missing dataset file: {path}")
        raw = path.read_bytes()
        if len(raw) % RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path.name}: {len(raw)} bytes is not a multiple of {RECORD_BYTES}"
            )
        checksum = zlib.crc32(raw, checksum)
        examples = parse_batch_file(raw)
        if name == TEST_FILE:
            test = examples
        else:
            train.extend(examples)
    return train, test, checksum


def make_split(examples: list[Example], train_fraction: float,
               val_fraction: float, seed: int, checksum: int = 0) -> DatasetSplit:
    """Seeded shuffle then prefix slicing into disjoint train/validation."""
    if not 0 < train_fraction <= 1 or not 0 < val_fraction <= 1:
        raise SplitError(
            f"fractions must lie in (0, 1], got {train_fraction}/{val_fraction}"
        )
    if train_fraction + val_fraction > 1 + 1e-9:
        raise SplitError(
            f"fractions {train_fraction}+{val_fraction} exceed the available data"
        )
    n = len(examples)
    n_train = int(round(n * train_fraction))
    n_val = int(round(n * val_fraction))
    if n_train < 1 or n_val < 1:
        raise SplitError(f"empty split: {n_train} train / {n_val} validation")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    train = [examples[i] for i in order[:n_train]]
    val = [examples[i] for i in order[n_train:n_train + n_val]]
    return DatasetSplit(train, val, checksum, (train_fraction, val_fraction))


def make_split_with_holdout(train_pool: list[Example], holdout: list[Example],
                            train_fraction: float, seed: int,
                            checksum: int = 0) -> DatasetSplit:
    """Full-scale protocol: validation is the canonical held-out batch."""
    if not 0 < train_fraction <= 1:
        raise SplitError(f"train fraction must lie in (0, 1], got {train_fraction}")
    if not holdout:
        raise SplitError("holdout validation set is empty")
    n_train = int(round(len(train_pool) * train_fraction))
    if n_train < 1:
        raise SplitError("empty train split")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(train_pool))
    train = [train_pool[i] for i in order[:n_train]]
    return DatasetSplit(train, list(holdout), checksum, (train_fraction, 1.0))


def load_split(data_dir: str | Path, train_fraction: float, val_fraction: float,
               seed: int) -> DatasetSplit:
    """Load the batch files and split them.

    val_fraction > 0 carves validation out of the training pool (desk
    scale); val_fraction == 0 uses the canonical test batch as the
    validation set (full-scale protocol).
    """
    train_pool, test, crc = load_directory(data_dir)
    if val_fraction > 0:
        return make_split(train_pool, train_fraction, val_fraction, seed, crc)
    return make_split_with_holdout(train_pool, test, train_fraction, seed, crc)


def batches(split: DatasetSplit, batch_size: int, epoch_index: int, seed: int):
    """Yield (Tensor[N,3,32,32], labels) over the train side, reshuffled per epoch.

    The final short batch is included. The order depends only on
    (seed, epoch_index), never on prior iteration.
    """
    if batch_size < 1:
        raise SplitError(f"batch_size must be >= 1, got {batch_size}")
    pixels, labels = split.train_arrays()
    n = len(labels)
    rng = np.random.Generator(np.random.PCG64(mix64(seed, "epoch", epoch_index)))
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        pick = order[start:start + batch_size]
        yield Tensor(pixels[pick]), labels[pick]
