"""Polynomial and softmax attention.

Three evaluation paths exist for rows of a SelfAttnInstance:

- ``structured``: closed form ``u[j0, j1] = (r[j0] * r[j1]) ** beta`` from row
  sums, valid only when ``qk`` is the all-ones matrix
- ``product``: ``A @ (A[j0] @ qk)`` through the instance's structured
  matvec, valid for any ``qk`` and never materialises A
- ``dense``: the same product on a materialised A (n <= 4096)

``auto`` picks ``structured`` when it applies and ``product`` otherwise.
"""

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from celery.utils.log import get_logger

from polyattn.datasets import MATERIALIZE_LIMIT, ScoreVector, SelfAttnInstance
from polyattn.exceptions import DomainError, ResourceError, SizeError
from polyattn.tensor_core import (
    ArrayLike,
    LogScalar,
    LogVector,
    as_matrix,
    as_vector,
    identity,
    kron,
    ones_matrix,
    pow_log,
    vectorize,
)

logger = get_logger(__name__)

PATHS = ("auto", "structured", "product", "dense")

# tensor_trick_check refuses inputs with more than this many n^2 d^2 entries
TENSOR_TRICK_LIMIT = 1_000_000


@dataclass(frozen=True)
class AttentionWeights:
    """The fixed attention parameters: the product QK^T and V."""

    qk: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        qk = as_matrix(self.qk, "qk")
        v = as_matrix(self.v, "v")
        if qk.shape[0] != qk.shape[1] or v.shape != qk.shape:
            raise SizeError(f"qk and v must be equal square matrices, got {qk.shape} and {v.shape}")
        object.__setattr__(self, "qk", qk)
        object.__setattr__(self, "v", v)

    @classmethod
    def all_ones(cls, d: int) -> "AttentionWeights":
        """QK^T = all-ones, V = identity."""
        return cls(ones_matrix(d), identity(d))

    @classmethod
    def identity(cls, d: int) -> "AttentionWeights":
        return cls(identity(d), identity(d))

    @property
    def dim(self) -> int:
        return int(self.qk.shape[0])

    @property
    def qk_is_ones(self) -> bool:
        return bool(np.all(self.qk == 1.0))

    def with_v(self, v: ArrayLike) -> "AttentionWeights":
        return AttentionWeights(self.qk, v)


class ScoreAttention(NamedTuple):
    u: LogVector
    alpha: LogScalar
    f: np.ndarray


class BlockAttention(NamedTuple):
    u: LogVector
    f: np.ndarray
    path: str


def _entries(s: Union[ScoreVector, ArrayLike]) -> np.ndarray:
    if isinstance(s, ScoreVector):
        return s.entries
    return as_vector(s, "score vector")


def score_attention(s: Union[ScoreVector, ArrayLike], beta: float) -> ScoreAttention:
    """u = s ** beta, alpha = sum(u), f = u / alpha, all in the log domain."""
    u = pow_log(_entries(s), beta)
    return ScoreAttention(u, u.total(), u.normalized())


def softmax_scores(s: Union[ScoreVector, ArrayLike]) -> np.ndarray:
    """Softmax of a score vector with the same max-subtraction normalisation."""
    entries = _entries(s)
    return LogVector(np.ones(entries.shape[0], dtype=np.int8), entries.copy()).normalized()


def _resolve_path(inst: SelfAttnInstance, w: AttentionWeights, path: str) -> str:
    if path not in PATHS:
        raise ValueError(f"unknown attention path {path!r}, expected one of {PATHS}")
    if w.dim != inst.d:
        raise SizeError(f"weights are {w.dim}x{w.dim} but the instance has d={inst.d}")
    if path == "auto":
        return "structured" if w.qk_is_ones else "product"
    if path == "structured" and not w.qk_is_ones:
        raise ValueError("the structured path needs qk = all-ones")
    if path == "dense" and inst.n > MATERIALIZE_LIMIT:
        raise ResourceError(
            f"dense attention for n={inst.n} exceeds the {MATERIALIZE_LIMIT} row cap"
        )
    return path


def _pre_activations(inst: SelfAttnInstance, w: AttentionWeights, j0: int, path: str) -> np.ndarray:
    if path == "dense":
        matrix = inst.materialize()
        return matrix @ (matrix[j0] @ w.qk)
    return inst.matvec(inst.row(j0) @ w.qk)


def block_attention(
    inst: SelfAttnInstance,
    w: AttentionWeights,
    j0: int,
    beta: float,
    path: str = "auto",
) -> BlockAttention:
    """Row j0 of u_poly and f_poly for A1 = A2 = inst.

    Raises:
        SizeError: j0 out of range or weights of the wrong dimension
        DomainError: a non-positive pre-activation
        ResourceError: ``path="dense"`` with n above the cap
    """
    if not 0 <= j0 < inst.n:
        raise SizeError(f"row index {j0} out of range for n={inst.n}")
    path = _resolve_path(inst, w, path)
    if path == "structured":
        if not np.isfinite(beta) or beta < 0:
            raise DomainError(f"beta must be a finite non-negative real, got {beta}")
        log_r = np.log(inst.row_sums())
        u = LogVector(np.ones(inst.n, dtype=np.int8), beta * (log_r[j0] + log_r))
    else:
        u = pow_log(_pre_activations(inst, w, j0, path), beta)
    logger.debug("attention row %d via %s path", j0, path)
    return BlockAttention(u, u.normalized(), path)


def c_poly(
    inst: SelfAttnInstance,
    w: AttentionWeights,
    j0: int,
    beta: float,
    path: str = "auto",
) -> np.ndarray:
    """Row j0 of c_poly: the inner products of f_poly row j0 with the columns of A3 V."""
    f = block_attention(inst, w, j0, beta, path).f
    return w.v.T @ inst.rmatvec(f)


def rows_are_shared(w: AttentionWeights) -> bool:
    """True when every row of f_poly (and so of c_poly) is the same vector."""
    return w.qk_is_ones


def mixing_matrix(a: ArrayLike, w: AttentionWeights, kind: str = "poly", beta: float = 2.0) -> np.ndarray:
    """Row-stochastic D^-1 g(A QK^T A^T) for ``kind`` in {"poly", "softmax"}."""
    a = as_matrix(a, "A")
    if a.shape[1] != w.dim:
        raise SizeError(f"A has {a.shape[1]} columns but weights are {w.dim}x{w.dim}")
    pre = a @ w.qk @ a.T
    if kind == "softmax":
        logits = pre
    elif kind == "poly":
        if np.any(pre <= 0):
            raise DomainError("polynomial attention needs every entry of A QK^T A^T to be > 0")
        if beta < 0 or not np.isfinite(beta):
            raise DomainError(f"beta must be a finite non-negative real, got {beta}")
        logits = beta * np.log(pre)
    else:
        raise ValueError(f"unknown attention kind {kind!r}")
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    totals = weights.sum(axis=1, keepdims=True)
    if np.any(totals <= 0) or not np.all(np.isfinite(totals)):
        raise DomainError("attention row sum is zero or non-finite")
    return weights / totals


def attention_forward(a: ArrayLike, w: AttentionWeights, kind: str = "poly", beta: float = 2.0) -> np.ndarray:
    """Att(A, Q, K, V) = D^-1 g(A QK^T A^T) A V."""
    a = as_matrix(a, "A")
    return mixing_matrix(a, w, kind, beta) @ (a @ w.v)


def full_attention_matrix(
    inst: SelfAttnInstance,
    w: AttentionWeights,
    beta: float,
    values: str = "f",
    path: str = "auto",
) -> np.ndarray:
    """The n x n matrix of u_poly (``values="u"``) or f_poly (``values="f"``).

    u entries are exponentiated and may overflow to inf for large beta.
    """
    if inst.n > MATERIALIZE_LIMIT:
        raise ResourceError(f"refusing an {inst.n}x{inst.n} attention matrix (cap {MATERIALIZE_LIMIT})")
    if values not in ("u", "f"):
        raise ValueError(f"values must be 'u' or 'f', got {values!r}")
    resolved = _resolve_path(inst, w, path)
    if resolved == "structured":
        row = block_attention(inst, w, 0, beta, resolved)
        if values == "f":
            return np.tile(row.f, (inst.n, 1))
    out = np.empty((inst.n, inst.n), dtype=np.float64)
    for j0 in range(inst.n):
        row = block_attention(inst, w, j0, beta, resolved)
        out[j0] = row.u.to_array() if values == "u" else row.f
    return out


def tensor_trick_check(a1: ArrayLike, a2: ArrayLike, w: AttentionWeights, beta: float) -> float:
    """Largest relative gap between vec(g(A1 QK^T A2^T)) and g(kron(A1, A2) vec(QK^T)).

    Returns:
        max over entries of ``|p1 - p2| / max(1, |p1|)``

    Raises:
        SizeError: when n1 * n2 * d1 * d2 exceeds the size guard
        DomainError: on a non-positive pre-activation
    """
    a1 = as_matrix(a1, "A1")
    a2 = as_matrix(a2, "A2")
    entries = a1.shape[0] * a2.shape[0] * a1.shape[1] * a2.shape[1]
    if entries > TENSOR_TRICK_LIMIT:
        raise SizeError(f"tensor trick check on {entries} entries exceeds {TENSOR_TRICK_LIMIT}")
    if a1.shape[1] != w.dim or a2.shape[1] != w.dim:
        raise SizeError("A1 and A2 must have as many columns as QK^T")
    direct = vectorize(a1 @ w.qk @ a2.T)
    via_kron = kron(a1, a2) @ vectorize(w.qk)
    if np.any(direct <= 0) or np.any(via_kron <= 0):
        raise DomainError("tensor trick check needs positive pre-activations")
    path1 = np.exp(pow_log(direct, beta).logmags)
    path2 = np.exp(pow_log(via_kron, beta).logmags)
    return float(np.max(np.abs(path1 - path2) / np.maximum(1.0, np.abs(path1))))
