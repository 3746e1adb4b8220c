"""Dense float64 arrays and the few kernels the rest of the package needs.

A tensor here is simply a C-contiguous ``numpy.ndarray`` of dtype float64.
The helpers below enforce that, raise :class:`DimensionError` on shape
mismatches, and keep reductions in a fixed order so runs are bit-reproducible.
"""
from __future__ import annotations

import hashlib
import operator
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

DTYPE = np.float64

_BINARY_OPS: dict[str, Callable] = {
    "add": operator.add,
    "sub": operator.sub,
    "mul": operator.mul,
    "div": operator.truediv,
    "max": np.maximum,
    "min": np.minimum,
}

_UNARY_OPS: dict[str, Callable] = {
    "abs": np.abs,
    "neg": np.negative,
    "sign": np.sign,
    "square": np.square,
    "exp": np.exp,
    "log": np.log,
}

REDUCTIONS = ("sum", "mean", "abs_mean", "count_nonzero")


def as_tensor(values, shape: Sequence[int] | None = None) -> np.ndarray:
    t = np.ascontiguousarray(values, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != t.size:
            raise DimensionError(f"cannot view {t.size} values as shape {shape}")
        t = t.reshape(shape)
    return t


def zeros(*shape: int) -> np.ndarray:
    return np.zeros(shape, dtype=DTYPE)


def eye(n: int) -> np.ndarray:
    return np.eye(n, dtype=DTYPE)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def ew_map(op: str | Callable, t: np.ndarray) -> np.ndarray:
    fn = _UNARY_OPS[op] if isinstance(op, str) else op
    return as_tensor(fn(t))


def ew_zip(op: str | Callable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise DimensionError(f"element-wise op on shapes {a.shape} and {b.shape}")
    fn = _BINARY_OPS[op] if isinstance(op, str) else op
    return as_tensor(fn(a, b))


def heaviside(t: np.ndarray) -> np.ndarray:
    """Step function with H(0) = 0."""
    return (np.asarray(t) > 0).astype(DTYPE)


def reduce(kind: str, t: np.ndarray) -> float:
    t = np.asarray(t, dtype=DTYPE).ravel()
    if kind == "sum":
        return float(np.sum(t))
    if kind == "count_nonzero":
        return int(np.count_nonzero(t))
    if t.size == 0:
        raise DomainError(f"{kind} of an empty tensor")
    if kind == "mean":
        return float(np.sum(t) / t.size)
    if kind == "abs_mean":
        return float(np.sum(np.abs(t)) / t.size)
    raise ValueError(f"unknown reduction {kind!r}; expected one of {REDUCTIONS}")


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=4).digest(), "little")


class Rng:
    """Seeded PCG64 stream that can be split into labelled substreams.

    ``fork(label)`` derives a child from ``(seed, path + label)`` through
    numpy's ``SeedSequence`` spawn keys, so a substream depends only on the
    root seed and the chain of labels, never on how many draws were taken
    from the parent.
    """

    ALGORITHM = "numpy-PCG64/SeedSequence(spawn_key=blake2b-32(label))"

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_label_key(p) for p in self.path))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    @property
    def label(self) -> str:
        return "/".join((str(self.seed),) + self.path)

    def fork(self, label: str) -> "Rng":
        return Rng(self.seed, self.path + (str(label),))

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, scale, size=size)

    def uniform(self, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self.generator.uniform(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def __repr__(self):
        return f"Rng({self.label!r})"
