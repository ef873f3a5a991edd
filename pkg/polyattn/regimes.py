"""Beta regimes and the numeric gates checked before any lemma is tested."""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from celery.utils.log import get_logger

from polyattn.datasets import Label
from polyattn.exceptions import ConfigError
from polyattn.network import DEFAULT_C, DEFAULT_LOG_BASE, m_for

logger = get_logger(__name__)

SCORE_TAU = 0.2
SELFATTN_TAU_MARGIN = 0.1

# beta bands on the score dataset, as multiples of log n
BANDS: Dict[str, Tuple[float, float]] = {
    "p4-d0": (0.0, 0.45),
    "p4-d1-low": (0.0, 0.01),
    "p4-d1-high": (1.0 / 3.0, 0.49),
    "s5-high": (1.0 / 3.0, 0.45),
    "s5-low": (0.0, 0.01),
}

C0_BAND_EXP = 0.2
C0_BAND_LIN = 0.1


class Regime(str, Enum):
    HIGH_BETA = "high_beta"
    LOW_BETA = "low_beta"

    @classmethod
    def parse(cls, value: Union[str, "Regime"]) -> "Regime":
        if isinstance(value, Regime):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown regime {value!r}, expected high_beta or low_beta") from None


@dataclass(frozen=True)
class Gate:
    """One concrete inequality and whether it held."""

    text: str
    holds: bool
    value: Optional[float] = None

    def describe(self) -> str:
        if self.value is None:
            return self.text
        return f"{self.text} (got {self.value:.6g})"


def log_n(n: int, base: float = DEFAULT_LOG_BASE) -> float:
    return math.log(n, base)


def derive_c0(n: int, a: float, beta: float) -> float:
    """c0 with (1 + a) ** beta == n ** c0."""
    return beta * math.log1p(a) / math.log(n)


def band_gate(band: str, n: int, beta: float, log_base: float = DEFAULT_LOG_BASE) -> Gate:
    lo, hi = BANDS[band]
    ln = log_n(n, log_base)
    lo_text = "0" if lo == 0 else ("log n / 3" if abs(lo - 1 / 3) < 1e-12 else f"{lo:g} log n")
    return Gate(
        f"β ∈ ({lo_text}, {hi:g} log n)",
        lo * ln < beta < hi * ln,
        beta,
    )


def _c0_gates(n: int, a: float, beta: float, c0: Optional[float], band: float) -> List[Gate]:
    derived = derive_c0(n, a, beta)
    if c0 is None:
        return [Gate(f"c0 ∈ (0, {band:g})", 0 < derived < band, derived)]
    return [
        Gate(f"c0 ∈ (0, {band:g})", 0 < c0 < band, c0),
        Gate("(1+a)^β ≤ n^c0", derived <= c0, derived),
    ]


def selfattn_gates(
    regime: Union[str, Regime],
    label: Union[str, Label],
    n: int,
    a: float,
    beta: float,
    log_base: float = DEFAULT_LOG_BASE,
    clause: str = "f",
    c0: Optional[float] = None,
) -> List[Gate]:
    """Preconditions of the self-attention lemmas for one (regime, label).

    ``clause`` is ``"f"`` (entry formulas), ``"c"`` (c_poly bounds) or
    ``"random"`` (sign concentration). The c_poly bounds of the low-beta D0
    lemma additionally need (1 + a) ** beta <= 1 + a, i.e. beta <= 1.
    Without an explicit ``c0`` the derived one is checked against the band.
    """
    regime = Regime.parse(regime)
    label = Label.parse(label)
    gates: List[Gate] = []
    if regime is Regime.HIGH_BETA:
        gates.append(Gate("β ≥ log n", beta >= log_n(n, log_base), beta))
        if label is Label.D1:
            log_spike = beta * math.log1p(a)
            gates.append(Gate("a ≥ 1", a >= 1, a))
            gates.append(Gate("(a+1)^β ≥ n", log_spike >= math.log(n), math.exp(min(log_spike, 700.0))))
        else:
            gates.append(Gate("a ∈ (0, 0.1)", 0 < a < 0.1, a))
            gates.extend(_c0_gates(n, a, beta, c0, C0_BAND_EXP))
        return gates
    if label is Label.D1:
        gates.append(Gate("a ≥ 0.7", a >= 0.7, a))
    else:
        gates.append(Gate("a ∈ (0, 0.1)", 0 < a < 0.1, a))
    gates.extend(_c0_gates(n, a, beta, c0, C0_BAND_LIN))
    if label is Label.D0 and clause == "c":
        gates.append(Gate("(1+a)^β ≤ 1+a", beta <= 1, beta))
    return gates


def require(gates: Sequence[Gate], context: str) -> None:
    """Raise ConfigError listing every gate that failed."""
    failed = [g.describe() for g in gates if not g.holds]
    if failed:
        raise ConfigError(f"regime gate failed for {context}", failed)
    for gate in gates:
        logger.info("gate passed: %s", gate.describe())


@dataclass(frozen=True)
class RegimeConfig:
    """One beta regime plus everything needed to run its Monte Carlo checks.

    ``tau`` and ``m`` are derived per size when left as None: tau is 0.2 on
    the score dataset and c + 0.1 (times sqrt(log n) when
    ``tau_sqrt_log``) on the self-attention dataset.
    """

    regime: Regime
    beta: float
    c0: Optional[float] = None
    log_base: float = DEFAULT_LOG_BASE
    tau: Optional[float] = None
    m: Optional[int] = None
    delta: float = 0.01
    trials: int = 200
    master_seed: int = 0
    C: float = DEFAULT_C
    hoeffding_C: float = 1.0
    tau_sqrt_log: bool = False
    rate_threshold: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime.parse(self.regime))
        failed = []
        if not math.isfinite(self.beta) or self.beta < 0:
            failed.append(f"beta finite and >= 0 (got {self.beta})")
        if not 0 < self.delta < 0.1:
            failed.append(f"delta in (0, 0.1) (got {self.delta})")
        if self.trials < 1:
            failed.append(f"trials >= 1 (got {self.trials})")
        if self.log_base <= 1:
            failed.append(f"log_base > 1 (got {self.log_base})")
        if self.m is not None and self.m < 1:
            failed.append(f"m >= 1 (got {self.m})")
        if self.c0 is not None and not 0 < self.c0 < C0_BAND_EXP:
            failed.append(f"c0 in (0, {C0_BAND_EXP:g}) (got {self.c0})")
        if not 0 < self.rate_threshold <= 1:
            failed.append(f"rate_threshold in (0, 1] (got {self.rate_threshold})")
        if failed:
            raise ConfigError("invalid regime configuration", failed)

    def m_for(self, n: int) -> int:
        return self.m if self.m is not None else m_for(n, self.delta, self.C, self.log_base)

    def score_tau(self) -> float:
        return self.tau if self.tau is not None else SCORE_TAU

    def selfattn_tau(self, c: float, n: int) -> float:
        if self.tau is not None:
            return self.tau
        tau = c + SELFATTN_TAU_MARGIN
        if self.tau_sqrt_log:
            tau *= math.sqrt(log_n(n, self.log_base))
        return tau

    def c0_for(self, n: int, a: float) -> float:
        """The supplied c0, or the one derived from (n, a, beta)."""
        return self.c0 if self.c0 is not None else derive_c0(n, a, self.beta)

    def with_beta(self, beta: float) -> "RegimeConfig":
        return replace(self, beta=beta)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regime": self.regime.value,
            "beta": self.beta,
            "c0": self.c0,
            "log_base": self.log_base,
            "tau": self.tau,
            "m": self.m,
            "delta": self.delta,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "C": self.C,
            "hoeffding_C": self.hoeffding_C,
            "tau_sqrt_log": self.tau_sqrt_log,
            "rate_threshold": self.rate_threshold,
        }
