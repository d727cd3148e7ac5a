"""Datasets: the synthetic Gaussian cloud and an MNIST-style IDX reader.

Features are float64 row-major matrices (one row per sample). IDX image
files are validated byte-exactly against the format header before any
payload is touched; pixels are scaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError
from .rng import Rng, STREAM_SHUFFLE, STREAM_SYNTH_DATA, derive_seed

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray  # (N, n) float64
    labels: np.ndarray | None
    name: str
    normalization: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ContractError(f"features must be a nonempty 2-d matrix, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise ContractError("features contain non-finite values")
        if self.labels is not None and len(self.labels) != self.features.shape[0]:
            raise ContractError("labels length does not match feature count")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def synth_dataset(n_samples: int = 1000, dim: int = 100, seed: int = 0) -> Dataset:
    """Seeded i.i.d. standard Gaussian features."""
    if n_samples < 1 or dim < 1:
        raise ContractError("synth_dataset needs positive sizes")
    rng = Rng(seed, STREAM_SYNTH_DATA)
    return Dataset(rng.normal_array((n_samples, dim)), None, "synth", "standard_gaussian")


def _read_be_u32(blob: bytes, at: int, what: str) -> int:
    if at + 4 > len(blob):
        raise FormatError(f"truncated while reading {what}", offset=at)
    return int.from_bytes(blob[at:at + 4], "big")


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a flattened [0,1] dataset."""
    with open(images_path, "rb") as f:
        blob = f.read()
    magic = _read_be_u32(blob, 0, "image magic")
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"image magic {magic:#010x} != {IDX_IMAGE_MAGIC:#010x}", offset=0)
    count = _read_be_u32(blob, 4, "image count")
    rows = _read_be_u32(blob, 8, "row count")
    cols = _read_be_u32(blob, 12, "column count")
    expected = count * rows * cols
    payload = blob[16:]
    if len(payload) != expected:
        raise FormatError(
            f"image payload holds {len(payload)} bytes, expected {expected}", offset=16 + min(len(payload), expected)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    features = pixels.reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        lblob = f.read()
    lmagic = _read_be_u32(lblob, 0, "label magic")
    if lmagic != IDX_LABEL_MAGIC:
        raise FormatError(f"label magic {lmagic:#010x} != {IDX_LABEL_MAGIC:#010x}", offset=0)
    lcount = _read_be_u32(lblob, 4, "label count")
    lpayload = lblob[8:]
    if len(lpayload) != lcount:
        raise FormatError(f"label payload holds {len(lpayload)} bytes, expected {lcount}", offset=8 + min(len(lpayload), lcount))
    if lcount != count:
        raise FormatError(f"label count {lcount} != image count {count}", offset=4)
    labels = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels, "mnist", "unit_range")


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """Seeded per-epoch shuffle yielding floor(N/B) full batches."""
    n = dataset.n_samples
    if batch_size > n:
        raise ContractError(f"batch size {batch_size} exceeds dataset size {n}")
    rng = Rng(derive_seed(seed, STREAM_SHUFFLE, epoch))
    perm = rng.permutation(n)
    for start in range(0, (n // batch_size) * batch_size, batch_size):
        yield dataset.features[perm[start:start + batch_size]]
