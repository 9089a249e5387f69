"""Synthetic stand-in dataset in the CIFAR-10 binary layout.

Each class gets a fixed low-frequency color template; samples are the
template plus pixel noise. The classes are separable enough for a small
CNN to make real progress within a few epochs, which makes the files
useful for demos, CI, and desk-scale experiments when the real dataset
is not on disk. The file format is byte-compatible with the real one.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import TEST_FILE, TRAIN_FILES
from .seeding import mix64

NOISE_SCALE = 0.12
TEMPLATE_WEIGHT = 0.7


def class_template(label: int) -> np.ndarray:
    """Deterministic (3, 32, 32) pattern in [0, 1] for one class."""
    rng = np.random.Generator(np.random.PCG64(mix64(0xC1FA, "template", label)))
    coarse = rng.random((3, 4, 4))
    return np.kron(coarse, np.ones((8, 8)))


def synth_records(n: int, seed: int) -> bytes:
    """n records of (label byte + 3072 pixel bytes), planes R,G,B row-major."""
    rng = np.random.Generator(np.random.PCG64(mix64(seed, "synth-records")))
    templates = np.stack([class_template(c) for c in range(10)])
    labels = rng.integers(0, 10, size=n)
    noise = rng.normal(0.0, NOISE_SCALE, size=(n, 3, 32, 32))
    base = templates[labels] * TEMPLATE_WEIGHT + (1 - TEMPLATE_WEIGHT) / 2
    pixels = np.clip(base + noise, 0.0, 1.0)
    quantized = np.rint(pixels * 255).astype(np.uint8)
    out = bytearray()
    for lab, img in zip(labels, quantized):
        out.append(int(lab))
        out.extend(img.tobytes())
    return bytes(out)


def write_synthetic_dataset(out_dir: str | Path, train_records: int = 10_000,
                            test_records: int = 2_000, seed: int = 0) -> Path:
    """Write data_batch_1..5.bin and test_batch.bin under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_file = [train_records // 5] * 5
    per_file[-1] += train_records - sum(per_file)
    for i, (name, count) in enumerate(zip(TRAIN_FILES, per_file)):
        (out_dir / name).write_bytes(synth_records(count, mix64(seed, "file", i)))
    (out_dir / TEST_FILE).write_bytes(synth_records(test_records, mix64(seed, "file", 99)))
    return out_dir
