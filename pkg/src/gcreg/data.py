"""Datasets, deterministic minibatching, synthetic tasks and IDX ingestion."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, DomainError, FormatError
from .tensor import Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SYNTHETIC_KINDS = ("gaussian_clusters", "two_spirals")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int
    split: str = "train"

    def __post_init__(self):
        x = T.as_tensor(self.features)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise DimensionError(f"features {x.shape} and labels {y.shape} disagree")
        if len(y) < 1:
            raise DomainError("a dataset needs at least one sample")
        if y.min() < 0 or y.max() >= self.classes:
            raise DomainError(f"labels must lie in [0, {self.classes})")
        if not np.all(np.isfinite(x)):
            raise DomainError("features must be finite")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "gaussian_clusters"
    classes: int = 10
    per_class: int = 500
    test_per_class: int = 100
    dim: int = 64
    noise: float = 2.0
    seed: int = 0
    informative: int | None = None

    def validate(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r}", "data.kind")
        if self.classes < 2:
            raise ConfigError("need at least 2 classes", "data.classes")
        if self.per_class < 1 or self.test_per_class < 1:
            raise ConfigError("per-class counts must be positive", "data.per_class")
        if self.dim < (2 if self.kind == "two_spirals" else 1):
            raise ConfigError(f"dimension {self.dim} too small for {self.kind}", "data.dim")
        if not self.noise >= 0:
            raise ConfigError("noise must be non-negative", "data.noise")
        if self.informative is not None and not 1 <= self.informative <= self.dim:
            raise ConfigError(f"informative must lie in [1, {self.dim}]", "data.informative")


def _clusters(means, per_class, noise, rng: Rng):
    c, d = means.shape
    labels = np.repeat(np.arange(c), per_class)
    x = (means[labels] + noise * rng.normal((len(labels), d))) / math.sqrt(1.0 + noise * noise)
    return x, labels


def _spirals(classes, per_class, dim, noise, rng: Rng):
    labels = np.repeat(np.arange(classes), per_class)
    t = rng.uniform(len(labels), 0.0, 1.0)
    radius = 0.2 + 0.8 * t
    angle = 2.0 * math.pi * labels / classes + 3.0 * math.pi * t
    x = np.zeros((len(labels), dim))
    x[:, 0] = radius * np.cos(angle)
    x[:, 1] = radius * np.sin(angle)
    x += noise * 0.1 * rng.normal(x.shape)
    return x, labels


def gen_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Train/test split of a synthetic task; each split has its own Rng substream.

    ``gaussian_clusters`` places one standard-normal mean per class, adds
    isotropic noise of scale ``noise`` and divides by ``sqrt(1 + noise**2)``
    so every coordinate has unit variance whatever the noise level.  With
    ``informative = k`` only the first k coordinates carry class signal; the
    rest are pure noise of matching variance.  ``two_spirals`` wraps
    ``classes`` interleaved spiral arms in the first two coordinates.
    """
    spec.validate()
    root = Rng(spec.seed).fork("synthetic")
    if spec.kind == "gaussian_clusters":
        means = root.fork("means").normal((spec.classes, spec.dim))
        if spec.informative is not None:
            means[:, spec.informative:] = 0.0
        train = _clusters(means, spec.per_class, spec.noise, root.fork("train"))
        test = _clusters(means, spec.test_per_class, spec.noise, root.fork("test"))
    else:
        train = _spirals(spec.classes, spec.per_class, spec.dim, spec.noise, root.fork("train"))
        test = _spirals(spec.classes, spec.test_per_class, spec.dim, spec.noise, root.fork("test"))
    return (Dataset(*train, spec.classes, "train"), Dataset(*test, spec.classes, "test"))


def batches(ds: Dataset, batch_size: int, epoch_seed) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled minibatches covering ``ds`` exactly once; the last may be short."""
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    rng = epoch_seed if isinstance(epoch_seed, Rng) else Rng(epoch_seed)
    order = rng.permutation(len(ds))
    return [(ds.features[idx], ds.labels[idx])
            for idx in (order[i:i + batch_size] for i in range(0, len(ds), batch_size))]


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix in (".gz", ".gzip") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, expected_magic: int, name: str):
    if len(raw) < 4:
        raise FormatError(f"{name}: file too short for an IDX header", len(raw))
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise FormatError(f"{name}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{name}: truncated header ({ndim} dimensions)", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    if len(raw) < header + count:
        raise FormatError(f"{name}: truncated payload, need {count} bytes after header, "
                          f"have {len(raw) - header}", len(raw))
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header)
    return dims, data


def load_idx(images_path, labels_path, classes: int | None = None, split: str = "train") -> Dataset:
    """Read an IDX image/label pair (optionally gzip-compressed); pixels scaled to [0, 1]."""
    dims, pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, str(images_path))
    if len(dims) != 3:
        raise FormatError(f"{images_path}: expected 3 image dimensions, got {len(dims)}", 3)
    (n_labels,), labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, str(labels_path))
    n, h, w = dims
    if n != n_labels:
        raise FormatError(f"{images_path} holds {n} images but {labels_path} holds {n_labels} labels", 4)
    x = pixels.reshape(n, h * w).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if classes is None:
        classes = int(y.max()) + 1 if len(y) else 1
    return Dataset(x, y, classes, split)


def write_idx(path, array: np.ndarray) -> Path:
    """Write a uint8 array as IDX (3-d -> images magic, 1-d -> labels magic)."""
    a = np.asarray(array, dtype=np.uint8)
    magic = {3: IDX_IMAGES_MAGIC, 1: IDX_LABELS_MAGIC}.get(a.ndim)
    if magic is None:
        raise DimensionError(f"IDX writer supports 1-d labels or 3-d images, got {a.ndim}-d")
    payload = struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape) + a.tobytes()
    path = Path(path)
    if path.suffix in (".gz", ".gzip"):
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)
    return path
