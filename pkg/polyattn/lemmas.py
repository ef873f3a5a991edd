"""Deterministic lemma checks and the lemma-id dispatcher.

Lemma ids:

- ``p4-d0``, ``p4-d1``: sign concentration of f_poly on score vectors
  (Monte Carlo) plus the deterministic f bounds
- ``s5-high``, ``s5-low``: the F separation on score vectors
- ``s6-{f,c,random}-{exp,lin}-{d0,d1}``: entry formulas, c_poly bounds and
  sign concentration on the self-attention dataset; ``exp`` is the high-beta
  regime and ``lin`` the low-beta one
"""

import math
from dataclasses import replace
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from celery.utils.log import get_logger

from polyattn.attention import AttentionWeights, block_attention, c_poly, score_attention
from polyattn.concentration import mc_concentration
from polyattn.datasets import Label, ScoreVector, SelfAttnInstance, sample_score
from polyattn.exceptions import ConfigError, SizeError
from polyattn.experiments import separation_experiment
from polyattn.regimes import Regime, RegimeConfig, band_gate, require, selfattn_gates
from polyattn.report import ClauseVerdict, ExperimentReport, compare
from polyattn.seeding import derive_seed
from polyattn.tensor_core import ArrayLike, LogVector, as_matrix, pow_log

logger = get_logger(__name__)

EXACT_TOLERANCE = 1e-12

SCORE_LEMMAS = ("p4-d0", "p4-d1", "s5-high", "s5-low")
SELFATTN_LEMMAS = tuple(
    f"s6-{part}-{family}-{label}"
    for part in ("f", "c", "random")
    for family in ("exp", "lin")
    for label in ("d0", "d1")
)
LEMMA_IDS = SCORE_LEMMAS + SELFATTN_LEMMAS

FAMILY_REGIME = {"exp": Regime.HIGH_BETA, "lin": Regime.LOW_BETA}


def parse_lemma_id(lemma_id: str) -> Tuple[str, Optional[Regime], Optional[Label]]:
    """Split a self-attention lemma id into (part, regime, label)."""
    if lemma_id not in LEMMA_IDS:
        raise ConfigError(f"unknown lemma id {lemma_id!r}, expected one of {', '.join(LEMMA_IDS)}")
    if lemma_id in SCORE_LEMMAS:
        return lemma_id, None, None
    _, part, family, label = lemma_id.split("-")
    return part, FAMILY_REGIME[family], Label.parse(label)


def _case_rows(inst: SelfAttnInstance) -> Dict[str, int]:
    rows = {"j0 = j3": inst.j3}
    if inst.n > 1:
        rows["j0 ≠ j3"] = (inst.j3 + 1) % inst.n
    return rows


def _require_ones(w: AttentionWeights) -> None:
    if not w.qk_is_ones:
        raise ConfigError("self-attention lemmas need QK^T = all-ones", ["QK^T = 1_{d×d}"])


def _u_row(inst: SelfAttnInstance, w: AttentionWeights, j0: int, beta: float, matrix: Optional[np.ndarray]) -> LogVector:
    if matrix is None:
        return block_attention(inst, w, j0, beta, "product").u
    return pow_log(matrix @ (matrix[j0] @ w.qk), beta)


def check_entry_formulas(
    inst: SelfAttnInstance,
    beta: float,
    regime: RegimeConfig,
    weights: Optional[AttentionWeights] = None,
    matrix: Optional[ArrayLike] = None,
) -> ExperimentReport:
    """Compare u_poly / f_poly rows against the closed forms of the regime.

    u is evaluated through the generic product path (or on ``matrix``, an
    explicit n x d stand-in for A1 = A2) and compared in the log domain to
    1, (a+1)^beta and (a+1)^(2 beta). The f bounds are >= 1/2 on the spike
    column and <= 1/n elsewhere in the high-beta D1 case, and <= 1/n^(1-c0)
    on the spike column and <= 1/n elsewhere in every other case.

    Raises:
        ConfigError: a failed regime gate or QK^T not all-ones
    """
    started = datetime.now(timezone.utc)
    w = weights or AttentionWeights.all_ones(inst.d)
    _require_ones(w)
    n, a = inst.n, inst.a
    require(
        selfattn_gates(regime.regime, inst.label, n, a, beta, regime.log_base, "f", regime.c0),
        f"entry formulas ({regime.regime.value}, {inst.label.value})",
    )
    if matrix is not None:
        matrix = as_matrix(matrix, "matrix")
        if matrix.shape != (n, inst.d):
            raise SizeError(f"matrix must be {n}x{inst.d}, got {matrix.shape}")
    c0 = regime.c0_for(n, a)
    report = ExperimentReport(
        kind="entry_formulas",
        config={**regime.to_dict(), "beta": beta, "instance": inst.to_params(), "label": inst.label.value},
    )
    spike_log = beta * math.log1p(a)
    high_d1 = regime.regime is Regime.HIGH_BETA and inst.label is Label.D1
    others = np.arange(n) != inst.j3
    for case, j0 in _case_rows(inst).items():
        u = _u_row(inst, w, j0, beta, matrix)
        f = u.normalized()
        row_log = spike_log if j0 == inst.j3 else 0.0
        expected = np.where(others, row_log, row_log + spike_log)
        deviation = np.abs(u.logmags - expected)
        spike_form = "(a+1)^2β" if j0 == inst.j3 else "(a+1)^β"
        other_form = "(a+1)^β" if j0 == inst.j3 else "1"
        report.add(_exact(f"{case}, j1 = j3: u = {spike_form}", float(deviation[inst.j3])))
        if others.any():
            report.add(_exact(f"{case}, j1 ≠ j3: u = {other_form}", float(deviation[others].max())))
        if high_d1:
            report.add(compare(f"{case}, j1 = j3: f ≥ 1/2", float(f[inst.j3]), ">=", 0.5, EXACT_TOLERANCE))
        else:
            report.add(
                compare(f"{case}, j1 = j3: f ≤ 1/n^(1-c0)", float(f[inst.j3]), "<=", n ** (c0 - 1), EXACT_TOLERANCE)
            )
        if others.any():
            report.add(compare(f"{case}, j1 ≠ j3: f ≤ 1/n", float(f[others].max()), "<=", 1.0 / n, EXACT_TOLERANCE))
    report.notes.append(f"c0 = {c0:.6g}")
    report.stamp(started)
    return report


def _exact(clause: str, deviation: float) -> ClauseVerdict:
    return ClauseVerdict(
        clause, deviation <= EXACT_TOLERANCE, deviation, EXACT_TOLERANCE, "<=", "max |log u - log closed form|"
    )


def check_c_bounds(
    inst: SelfAttnInstance,
    beta: float,
    regime: RegimeConfig,
    weights: Optional[AttentionWeights] = None,
) -> ExperimentReport:
    """Check the Type I, Type II and Type III coordinates of c_poly.

    Coordinates use 1-based names in clause text: i0 = 1 is the Type I
    column and i0 = d the Type III column.

    Raises:
        ConfigError: a failed regime gate, QK^T not all-ones or V not identity
    """
    started = datetime.now(timezone.utc)
    w = weights or AttentionWeights.all_ones(inst.d)
    _require_ones(w)
    if not np.array_equal(w.v, np.eye(inst.d)):
        raise ConfigError("c_poly bounds need V = I_d", ["V = I_d"])
    n, d, t, a, b = inst.n, inst.d, inst.t, inst.a, inst.b
    require(
        selfattn_gates(regime.regime, inst.label, n, a, beta, regime.log_base, "c", regime.c0),
        f"c_poly bounds ({regime.regime.value}, {inst.label.value})",
    )
    c0 = regime.c0_for(n, a)
    shrink = n ** (c0 - 1)
    report = ExperimentReport(
        kind="c_bounds",
        config={**regime.to_dict(), "beta": beta, "instance": inst.to_params(), "label": inst.label.value},
    )
    special = inst.special_column
    rest = [i for i in range(1, d - 1) if i != special]
    high = regime.regime is Regime.HIGH_BETA
    tol = EXACT_TOLERANCE
    for case, j0 in _case_rows(inst).items():
        c = c_poly(inst, w, j0, beta, "product")
        type_ii = c[1:-1]
        rest_max = float(c[rest].max()) if rest else None
        report.add(compare(f"{case}, i0 = d: c = c", float(c[-1]), "==", inst.c, tol))
        if high and inst.label is Label.D1:
            report.add(compare(f"{case}, i0 = 1: c ≥ a/2", float(c[0]), ">=", a / 2, tol))
            report.add(compare(f"{case}, special Type II: c ≥ b/2", float(c[special]), ">=", b / 2, tol))
            if rest_max is not None:
                report.add(compare(f"{case}, other Type II: c ≤ tb/n", rest_max, "<=", t * b / n, tol))
        elif high:
            report.add(compare(f"{case}, i0 = 1: c ≤ a/n^(1-c0)", float(c[0]), "<=", a * shrink, tol))
            report.add(compare(f"{case}, Type II: c ≤ tb/n^(1-c0)", float(type_ii.max()), "<=", t * b * shrink, tol))
            report.add(
                compare(
                    f"{case}, special Type II: c ≤ (1/n^(1-c0) + (t-1)/n) b",
                    float(c[special]),
                    "<=",
                    (shrink + (t - 1) / n) * b,
                    tol,
                )
            )
            if rest_max is not None:
                report.add(compare(f"{case}, other Type II: c ≤ tb/n", rest_max, "<=", t * b / n, tol))
        elif inst.label is Label.D1:
            report.add(compare(f"{case}, i0 = 1: c ≤ a/n^(1-c0)", float(c[0]), "<=", a * shrink, tol))
            report.add(compare(f"{case}, Type II: c ≤ tb/n^(1-c0)", float(type_ii.max()), "<=", t * b * shrink, tol))
        else:
            report.add(compare(f"{case}, i0 = 1: c ≤ (1+a)a/n", float(c[0]), "<=", (1 + a) * a / n, tol))
            report.add(compare(f"{case}, Type II: c ≤ (1+a)tb/n", float(type_ii.max()), "<=", (1 + a) * t * b / n, tol))
    report.notes.append(f"c0 = {c0:.6g}")
    report.stamp(started)
    return report


def check_score_bounds(s: ScoreVector, beta: float, regime: RegimeConfig) -> ExperimentReport:
    """Deterministic f_poly bounds on a labelled score vector.

    Every non-spike entry satisfies f_i <= 2^beta / n. On D1 the spike entry
    is >= 1/2 in the high-beta band and <= 16^beta / n in the low-beta band.
    """
    started = datetime.now(timezone.utc)
    if s.label is None:
        raise ConfigError("score bounds need a labelled D0/D1 score vector")
    n = s.dim
    f = score_attention(s, beta).f
    report = ExperimentReport(
        kind="score_bounds", config={**regime.to_dict(), "beta": beta, "n": n, "label": s.label.value}
    )
    mask = np.ones(n, dtype=bool)
    if s.spike_index is not None:
        mask[s.spike_index] = False
    report.add(compare("non-spike f_i ≤ 2^β/n", float(f[mask].max()), "<=", 2.0**beta / n, EXACT_TOLERANCE))
    if s.label is Label.D1:
        spike = float(f[s.spike_index])
        if regime.regime is Regime.HIGH_BETA:
            require([band_gate("p4-d1-high", n, beta, regime.log_base)], "D1 spike bound")
            report.add(compare("spike f_j ≥ 1/2", spike, ">=", 0.5, EXACT_TOLERANCE))
        else:
            require([band_gate("p4-d1-low", n, beta, regime.log_base)], "D1 spike bound")
            report.add(compare("spike f_j ≤ 16^β/n", spike, "<=", 16.0**beta / n, EXACT_TOLERANCE))
    report.stamp(started)
    return report


def _score_regime(n: int, beta: float, cfg: RegimeConfig) -> Regime:
    """Pick the p4-d1 part whose beta band contains beta."""
    high = band_gate("p4-d1-high", n, beta, cfg.log_base)
    low = band_gate("p4-d1-low", n, beta, cfg.log_base)
    if high.holds:
        return Regime.HIGH_BETA
    if low.holds:
        return Regime.LOW_BETA
    raise ConfigError("regime gate failed for p4-d1", [high.describe(), low.describe()])


def check_lemma(
    lemma_id: str,
    target: Union[ScoreVector, SelfAttnInstance, None],
    beta: float,
    cfg: RegimeConfig,
    n: Optional[int] = None,
    **separation,
) -> ExperimentReport:
    """Run every check belonging to ``lemma_id`` and merge the verdicts.

    Args:
        lemma_id: one of LEMMA_IDS
        target: the instance to check; score lemmas sample one of size ``n``
            from ``cfg.master_seed`` when it is None (the ``s5-*`` ids always
            sample fresh instances per trial)
        beta: the polynomial degree
        cfg: regime configuration (its ``regime`` is set from the lemma id)
        n: score vector size when ``target`` is None
        **separation: forwarded to separation_experiment for ``s5-*``

    Raises:
        ConfigError: unknown id, failed gate, or a target of the wrong kind
    """
    part, regime, label = parse_lemma_id(lemma_id)
    cfg = replace(cfg, beta=beta)
    logger.info("checking %s at beta=%g", lemma_id, beta)
    if lemma_id in ("s5-high", "s5-low"):
        cfg = replace(cfg, regime=Regime.HIGH_BETA if lemma_id == "s5-high" else Regime.LOW_BETA)
        size = target.dim if isinstance(target, ScoreVector) else n
        if size is None:
            raise ConfigError(f"{lemma_id} needs n")
        return separation_experiment(cfg, "score", [size], **separation)

    if lemma_id in ("p4-d0", "p4-d1"):
        want = Label.D0 if lemma_id == "p4-d0" else Label.D1
        if target is None:
            if n is None:
                raise ConfigError(f"{lemma_id} needs n or a score vector")
            target = sample_score(n, want, derive_seed(cfg.master_seed, 0))
        if not isinstance(target, ScoreVector) or target.label is not want:
            raise ConfigError(f"{lemma_id} needs a {want.value} score vector")
        if want is Label.D0:
            require([band_gate("p4-d0", target.dim, beta, cfg.log_base)], lemma_id)
            cfg = replace(cfg, regime=Regime.HIGH_BETA)
        else:
            cfg = replace(cfg, regime=_score_regime(target.dim, beta, cfg))
        report = mc_concentration(target, beta, cfg)
        report.extend(check_score_bounds(target, beta, cfg))
        report.kind = lemma_id
        return report

    if not isinstance(target, SelfAttnInstance):
        raise ConfigError(f"{lemma_id} needs a self-attention instance")
    if target.label is not label:
        raise ConfigError(f"{lemma_id} needs a {label.value} instance, got {target.label.value}")
    cfg = replace(cfg, regime=regime)
    if part == "f":
        report = check_entry_formulas(target, beta, cfg)
    elif part == "c":
        report = check_c_bounds(target, beta, cfg)
    else:
        report = mc_concentration(target, beta, cfg)
    report.kind = lemma_id
    return report


__all__: List[str] = [
    "LEMMA_IDS",
    "check_c_bounds",
    "check_entry_formulas",
    "check_lemma",
    "check_score_bounds",
    "parse_lemma_id",
]
