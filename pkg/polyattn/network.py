"""The thresholded ReLU readout F_poly and its Rademacher sign matrix."""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from celery.utils.log import get_logger

from polyattn.attention import AttentionWeights, c_poly, rows_are_shared, score_attention, softmax_scores
from polyattn.datasets import ScoreVector, SelfAttnInstance
from polyattn.exceptions import ConfigError, SizeError
from polyattn.seeding import make_rng, normalize_seed
from polyattn.tensor_core import ArrayLike

logger = get_logger(__name__)

DEFAULT_C = 10.0
DEFAULT_LOG_BASE = 2.0

_SIGNS = np.array([-1, 1], dtype=np.int8)


def shifted_relu(z: Union[float, np.ndarray], tau: float) -> Union[float, np.ndarray]:
    """phi_tau(z) = max(z - tau, 0); exactly 0 whenever z <= tau."""
    if np.ndim(z) == 0:
        return max(float(z) - tau, 0.0)
    return np.maximum(np.asarray(z, dtype=np.float64) - tau, 0.0)


@dataclass(frozen=True)
class SignMatrix:
    """A dim x m matrix of Rademacher signs, stored column-major by meaning.

    ``columns[:, l]`` is the l-th sign vector.
    """

    dim: int
    m: int
    columns: np.ndarray
    seed: int

    def __post_init__(self):
        if self.columns.shape != (self.dim, self.m):
            raise SizeError(f"sign matrix shape {self.columns.shape} != ({self.dim}, {self.m})")

    def column(self, index: int) -> np.ndarray:
        return self.columns[:, index]


def sample_signs(dim: int, m: int, seed: int) -> SignMatrix:
    """Draw a dim x m matrix with i.i.d. uniform entries in {-1, +1}."""
    if dim < 1 or m < 0:
        raise SizeError(f"sign matrix needs dim >= 1 and m >= 0, got {dim}x{m}")
    seed = normalize_seed(seed)
    columns = make_rng(seed).choice(_SIGNS, size=(dim, m))
    return SignMatrix(dim, m, columns, seed)


def m_for(n: int, delta: float, C: float = DEFAULT_C, log_base: float = DEFAULT_LOG_BASE) -> int:
    """Column count ceil(C * log(n / delta))."""
    return max(1, math.ceil(C * math.log(n / delta, log_base)))


@dataclass(frozen=True)
class NetworkParams:
    tau: float
    m: int
    beta: float
    delta: float = 0.01

    def __post_init__(self):
        failed = []
        if not math.isfinite(self.tau):
            failed.append(f"tau finite (got {self.tau})")
        if self.m < 1:
            failed.append(f"m >= 1 (got {self.m})")
        if not 0 < self.delta < 0.1:
            failed.append(f"delta in (0, 0.1) (got {self.delta})")
        if not math.isfinite(self.beta) or self.beta < 0:
            failed.append(f"beta finite and >= 0 (got {self.beta})")
        if failed:
            raise ConfigError("invalid network parameters", failed)

    @classmethod
    def for_size(
        cls,
        n: int,
        beta: float,
        tau: float,
        delta: float = 0.01,
        C: float = DEFAULT_C,
        log_base: float = DEFAULT_LOG_BASE,
    ) -> "NetworkParams":
        return cls(tau=tau, m=m_for(n, delta, C, log_base), beta=beta, delta=delta)


def _readout(inner: np.ndarray, tau: float, weight: int = 1) -> float:
    total = float(np.sum(shifted_relu(inner, tau))) * weight
    return shifted_relu(total, 0.0)


def f_network_score(
    s: Union[ScoreVector, ArrayLike],
    y: SignMatrix,
    p: NetworkParams,
    kind: str = "poly",
) -> float:
    """F = phi(sum_l phi_tau(<f(s), y_l>)) with f = f_poly(s; beta) or softmax(s)."""
    if kind == "poly":
        f = score_attention(s, p.beta).f
    elif kind == "softmax":
        f = softmax_scores(s)
    else:
        raise ValueError(f"unknown attention kind {kind!r}")
    if y.dim != f.shape[0]:
        raise SizeError(f"sign matrix has dim {y.dim} but the score vector has {f.shape[0]}")
    return _readout(f @ y.columns, p.tau)


def f_network_selfattn(
    inst: SelfAttnInstance,
    w: AttentionWeights,
    y: SignMatrix,
    p: NetworkParams,
    path: str = "auto",
) -> float:
    """F = phi(sum_j0 sum_l phi_tau(<c_poly row j0, y_l>)).

    When all f_poly rows coincide the row term is computed once and
    counted n times.
    """
    if y.dim != inst.d:
        raise SizeError(f"sign matrix has dim {y.dim} but the instance has d={inst.d}")
    if y.m == 0:
        return 0.0
    if rows_are_shared(w) and path in ("auto", "structured"):
        row = c_poly(inst, w, inst.j3, p.beta, path)
        return _readout(row @ y.columns, p.tau, weight=inst.n)
    total = 0.0
    for j0 in range(inst.n):
        total += _readout(c_poly(inst, w, j0, p.beta, path) @ y.columns, p.tau)
    return shifted_relu(total, 0.0)
