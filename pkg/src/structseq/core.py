"""Alphabets, sequences, one-hot encodings and the tensor product."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class StructSeqError(Exception):
    """Base class for all errors raised by this package."""


class InvalidLabelError(StructSeqError, ValueError):
    pass


class DimensionError(StructSeqError, ValueError):
    """Raised on empty inputs or inconsistent array shapes."""


class PairingError(StructSeqError, ValueError):
    """Raised when two sequences that must line up do not."""


class ConfigError(StructSeqError, ValueError):
    pass


class StructureError(StructSeqError, ValueError):
    """Raised for malformed lattices."""


@dataclass(frozen=True)
class PhonemeAlphabet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise ConfigError("alphabet needs at least 2 symbols")
        if any(not n for n in names):
            raise ConfigError("alphabet symbols must be non-empty")
        if len(set(names)) != len(names):
            raise ConfigError("alphabet symbols must be unique")

    @classmethod
    def of_size(cls, K: int) -> "PhonemeAlphabet":
        return cls(tuple(f"p{k}" for k in range(K)))

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def validate(self, labels) -> np.ndarray:
        return as_labels(labels, self.size)


def as_frames(x) -> np.ndarray:
    """Coerce to an (M, D) float64 matrix of finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"acoustic sequence must be a non-empty M x D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("acoustic sequence contains non-finite values")
    return arr


def as_labels(y, K: int | None = None) -> np.ndarray:
    """Coerce to an int64 label vector, checking the range [0, K) when K is given."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise InvalidLabelError(f"label sequence must be 1-d, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise InvalidLabelError("labels must be integers")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise InvalidLabelError(f"negative label {arr.min()}")
    if K is not None and arr.size and arr.max() >= K:
        raise InvalidLabelError(f"label {arr.max()} out of range for K={K}")
    return arr


@dataclass
class Utterance:
    x: np.ndarray
    y_ref: np.ndarray

    def __post_init__(self):
        self.x = as_frames(self.x)
        self.y_ref = as_labels(self.y_ref)
        if len(self.y_ref) != self.x.shape[0]:
            raise PairingError(f"{self.x.shape[0]} frames but {len(self.y_ref)} labels")

    @property
    def M(self) -> int:
        return self.x.shape[0]

    @property
    def D(self) -> int:
        return self.x.shape[1]


def one_hot(label: int, K: int) -> np.ndarray:
    if not 0 <= int(label) < K:
        raise InvalidLabelError(f"label {label} out of range for K={K}")
    v = np.zeros(K)
    v[int(label)] = 1.0
    return v


def tensor_product(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """Tensor product with the first factor varying fastest.

    Component ``i + j * len(a)`` (zero-based) holds ``a[i] * b[j]``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise DimensionError("tensor_product needs non-empty vectors")
    return np.outer(b, a).ravel()
