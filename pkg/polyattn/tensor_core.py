"""Dense linear algebra helpers and overflow-safe powers.

Matrices and vectors are plain ``numpy.ndarray`` objects in row-major (C)
order. ``kron`` and ``vectorize`` share that convention so that

    vectorize(g(A1 @ M @ A2.T)) == g(kron(A1, A2) @ vectorize(M))

holds for any entrywise ``g``.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from scipy.special import logsumexp

from polyattn.exceptions import DomainError, SizeError

# kron refuses to build products with more entries than this
MAX_KRON_ENTRIES = 50_000_000

ArrayLike = Union[np.ndarray, Iterable]


def as_matrix(a: ArrayLike, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array.

    Raises:
        SizeError: if ``a`` is not two-dimensional or has an empty axis
        DomainError: if any entry is NaN or infinite
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise SizeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def as_vector(v: ArrayLike, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite 1-D float64 array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise SizeError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def ones_matrix(d: int) -> np.ndarray:
    return np.ones((d, d), dtype=np.float64)


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=np.float64)


def kron(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Kronecker product.

    Entry ``((i1-1)*n2 + i2, (j1-1)*d2 + j2)`` (1-based) of the result is
    ``a[i1, j1] * b[i2, j2]``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > MAX_KRON_ENTRIES:
        raise SizeError(
            f"kron product of shape {rows}x{cols} exceeds {MAX_KRON_ENTRIES} entries"
        )
    return np.kron(a, b)


def hadamard(x: ArrayLike, u: ArrayLike) -> np.ndarray:
    """Entrywise product of two vectors of equal dimension."""
    x = as_vector(x, "x")
    u = as_vector(u, "u")
    if x.shape != u.shape:
        raise SizeError(f"hadamard needs equal dims, got {x.shape[0]} and {u.shape[0]}")
    return x * u


def vectorize(a: ArrayLike) -> np.ndarray:
    """Row-major flattening of a matrix."""
    return as_matrix(a).reshape(-1).copy()


@dataclass(frozen=True)
class LogScalar:
    """A real number stored as a sign and a natural-log magnitude.

    ``logmag`` is meaningless when ``sign == 0``.
    """

    sign: int
    logmag: float

    @classmethod
    def from_float(cls, value: float) -> "LogScalar":
        if value == 0:
            return cls(0, -math.inf)
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.logmag)

    def __mul__(self, other: "LogScalar") -> "LogScalar":
        if self.sign == 0 or other.sign == 0:
            return LogScalar(0, -math.inf)
        return LogScalar(self.sign * other.sign, self.logmag + other.logmag)


@dataclass(frozen=True)
class LogVector:
    """Entrywise LogScalar storage backed by two arrays."""

    signs: np.ndarray
    logmags: np.ndarray

    def __post_init__(self):
        if self.signs.shape != self.logmags.shape or self.signs.ndim != 1:
            raise SizeError("LogVector signs and logmags must be 1-D and equal length")

    @property
    def dim(self) -> int:
        return int(self.signs.shape[0])

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, i: int) -> LogScalar:
        return LogScalar(int(self.signs[i]), float(self.logmags[i]))

    def to_array(self) -> np.ndarray:
        """Exponentiate back to floats (may overflow to inf for huge entries)."""
        with np.errstate(over="ignore"):
            out = self.signs * np.exp(self.logmags)
        return np.where(self.signs == 0, 0.0, out)

    def total(self) -> LogScalar:
        """Sum of the entries, for vectors whose entries are all positive."""
        if np.any(self.signs <= 0):
            raise DomainError("LogVector.total() needs strictly positive entries")
        return LogScalar(1, float(logsumexp(self.logmags)))

    def normalized(self) -> np.ndarray:
        """Entries divided by their sum, computed after subtracting the max log entry.

        ``np.argmax`` picks the first maximal index on ties.
        """
        if np.any(self.signs <= 0):
            raise DomainError("LogVector.normalized() needs strictly positive entries")
        top = self.logmags[int(np.argmax(self.logmags))]
        weights = np.exp(self.logmags - top)
        return weights / weights.sum()


def pow_log(v: ArrayLike, beta: float) -> LogVector:
    """Entrywise ``v ** beta`` in the log domain.

    Args:
        v: strictly positive vector
        beta: finite, non-negative real exponent

    Raises:
        DomainError: on a non-positive entry or a non-finite / negative beta
    """
    v = as_vector(v, "v")
    if not math.isfinite(beta) or beta < 0:
        raise DomainError(f"beta must be a finite non-negative real, got {beta}")
    if np.any(v <= 0):
        raise DomainError("pow_log needs strictly positive entries")
    logmags = beta * np.log(v)
    return LogVector(np.ones(v.shape[0], dtype=np.int8), logmags)
