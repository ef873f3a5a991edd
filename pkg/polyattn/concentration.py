"""Hoeffding bounds and Monte Carlo checks of the sign-concentration lemmas."""

import math
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from celery.utils.log import get_logger

from polyattn.attention import AttentionWeights, c_poly, score_attention
from polyattn.datasets import Label, ScoreVector, SelfAttnInstance
from polyattn.exceptions import ConfigError, DomainError, SizeError
from polyattn.network import sample_signs
from polyattn.regimes import Regime, RegimeConfig, band_gate, log_n, require, selfattn_gates
from polyattn.report import ExperimentReport, compare
from polyattn.seeding import derive_seed, trial_seed

logger = get_logger(__name__)

SCORE_D0_THRESHOLD = 0.1
SCORE_D1_THRESHOLD = 1.0 / 3.0
SCORE_D1_CLAIM = 0.25
SELFATTN_D1_CLAIM = 0.1
SIGMA_ALLOWANCE = 3.0


def hoeffding_bound(ranges: Sequence[Tuple[float, float]], t: float) -> float:
    """min(1, 2 exp(-2 t^2 / sum (hi - lo)^2)) for independent bounded terms.

    Raises:
        SizeError: on an empty range list
        DomainError: when t <= 0 or some hi < lo
    """
    if len(ranges) == 0:
        raise SizeError("hoeffding_bound needs at least one range")
    if not t > 0:
        raise DomainError(f"hoeffding_bound needs t > 0, got {t}")
    widths = np.array([hi - lo for lo, hi in ranges], dtype=np.float64)
    if np.any(widths < 0):
        raise DomainError("every range needs hi >= lo")
    spread = float(np.sum(widths**2))
    if spread == 0:
        return 0.0
    return min(1.0, 2.0 * math.exp(-2.0 * t * t / spread))


def signed_ranges(coefficients: np.ndarray) -> List[Tuple[float, float]]:
    """Ranges of c_i * sigma_i for Rademacher sigma_i."""
    return [(-abs(float(c)), abs(float(c))) for c in coefficients]


def binomial_allowance(p: float, trials: int, sigmas: float = SIGMA_ALLOWANCE) -> float:
    p = min(max(p, 0.0), 1.0)
    return sigmas * math.sqrt(p * (1.0 - p) / trials)


def union_bound_failure(p: float, m: int) -> float:
    """Probability that at least one of m independent columns hits an event of probability p."""
    if not 0 <= p <= 1:
        raise DomainError(f"p must be a probability, got {p}")
    return 1.0 - (1.0 - p) ** m


def draw_signs(dim: int, cfg: RegimeConfig) -> np.ndarray:
    """trials x dim Rademacher matrix; row i comes from trial i's derived seed."""
    rows = np.empty((cfg.trials, dim), dtype=np.int8)
    for i in range(cfg.trials):
        rows[i] = sample_signs(dim, 1, derive_seed(trial_seed(cfg.master_seed, i), 1)).column(0)
    return rows


def _tail(
    report: ExperimentReport,
    event: str,
    hits: np.ndarray,
    claim: float,
    relation: str,
    cfg: RegimeConfig,
    m: int,
    hoeffding: Optional[float] = None,
) -> float:
    rate = float(np.mean(hits))
    entry: Dict[str, object] = {
        "event": event,
        "empirical": rate,
        "claimed": claim,
        "relation": relation,
        "trials": int(hits.shape[0]),
    }
    report.add(compare(f"Pr[{event}] {relation} {claim:g}", rate, relation, claim))
    if hoeffding is not None:
        tail = 1.0 - rate
        allowance = binomial_allowance(hoeffding, cfg.trials)
        entry.update(
            {
                "complement_empirical": tail,
                "hoeffding": hoeffding,
                "allowance": allowance,
                "union_bound_over_m": union_bound_failure(tail, m),
            }
        )
        report.add(
            compare(
                f"Pr[not {event}] <= hoeffding + 3 sigma",
                tail,
                "<=",
                min(1.0, hoeffding + allowance),
            )
        )
    report.tails.append(entry)
    logger.info("%s: empirical %.4f (claim %s %g)", event, rate, relation, claim)
    return rate


def _score_concentration(s: ScoreVector, beta: float, cfg: RegimeConfig, report: ExperimentReport) -> None:
    n = s.dim
    f = score_attention(s, beta).f
    inner = draw_signs(n, cfg).astype(np.float64) @ f
    m = cfg.m_for(n)
    if s.label is Label.D0:
        require([band_gate("p4-d0", n, beta, cfg.log_base)], "score D0 concentration")
        bound = hoeffding_bound(signed_ranges(f), SCORE_D0_THRESHOLD)
        _tail(report, "|<f,σ>| <= 0.1", np.abs(inner) <= SCORE_D0_THRESHOLD, cfg.rate_threshold, ">=", cfg, m, bound)
        return
    if cfg.regime is Regime.HIGH_BETA:
        require([band_gate("p4-d1-high", n, beta, cfg.log_base)], "score D1 concentration")
        _tail(report, "<f,σ> >= 1/3", inner >= SCORE_D1_THRESHOLD, SCORE_D1_CLAIM, ">=", cfg, m)
        return
    require([band_gate("p4-d1-low", n, beta, cfg.log_base)], "score D1 concentration")
    threshold = (
        cfg.hoeffding_C * math.sqrt(log_n(n / cfg.delta, cfg.log_base)) / math.sqrt(n) * 16.0**beta
    )
    bound = hoeffding_bound(signed_ranges(f), threshold)
    report.notes.append(f"low-beta D1 threshold C sqrt(log(n/δ))/sqrt(n) 16^β = {threshold:.6g}")
    _tail(report, "|<f,σ>| <= C√log(n/δ)/√n·16^β", np.abs(inner) <= threshold, cfg.rate_threshold, ">=", cfg, m, bound)


def _selfattn_concentration(
    inst: SelfAttnInstance, beta: float, cfg: RegimeConfig, report: ExperimentReport
) -> None:
    require(
        selfattn_gates(cfg.regime, inst.label, inst.n, inst.a, beta, cfg.log_base, "random", cfg.c0),
        f"self-attention {inst.label.value} concentration",
    )
    w = AttentionWeights.all_ones(inst.d)
    tau = cfg.selfattn_tau(inst.c, inst.n)
    sigma = draw_signs(inst.d, cfg).astype(np.float64)
    m = cfg.m_for(inst.n)
    rows = {"j0 = j3": inst.j3}
    if inst.n > 1:
        rows["j0 ≠ j3"] = (inst.j3 + 1) % inst.n
    for name, j0 in rows.items():
        coefficients = c_poly(inst, w, j0, beta)
        inner = sigma @ coefficients
        if cfg.regime is Regime.HIGH_BETA and inst.label is Label.D1:
            _tail(report, f"<c_{{{name}}},σ> >= τ", inner >= tau, SELFATTN_D1_CLAIM, ">=", cfg, m)
        else:
            bound = hoeffding_bound(signed_ranges(coefficients), tau)
            _tail(report, f"|<c_{{{name}}},σ>| < τ", np.abs(inner) < tau, cfg.rate_threshold, ">=", cfg, m, bound)
    report.notes.append(f"tau = {tau:.6g}")


def mc_concentration(
    target: Union[ScoreVector, SelfAttnInstance], beta: float, cfg: RegimeConfig
) -> ExperimentReport:
    """Estimate the probability of each lemma event over cfg.trials sign draws.

    Trial i draws its sign vector from ``derive_seed(trial_seed(master, i), 1)``.

    Raises:
        ConfigError: unlabelled target or a failed regime gate
    """
    started = datetime.now(timezone.utc)
    if getattr(target, "label", None) is None:
        raise ConfigError("concentration checks need a labelled D0/D1 target")
    kind = "selfattn" if isinstance(target, SelfAttnInstance) else "score"
    config = {**cfg.to_dict(), "target": kind, "label": target.label.value, "beta": beta}
    if isinstance(target, SelfAttnInstance):
        config["instance"] = target.to_params()
    report = ExperimentReport(kind="concentration", config=config)
    logger.info("concentration check on %s %s, beta=%g, %d trials", kind, target.label.value, beta, cfg.trials)
    if isinstance(target, SelfAttnInstance):
        _selfattn_concentration(target, beta, cfg, report)
    else:
        _score_concentration(target, beta, cfg, report)
    report.stamp(started)
    return report
