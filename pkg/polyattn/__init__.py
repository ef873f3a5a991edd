"""Polynomial attention, the synthetic separation datasets and their lemma checks."""

from polyattn.attention import (
    AttentionWeights,
    attention_forward,
    block_attention,
    c_poly,
    full_attention_matrix,
    score_attention,
    softmax_scores,
    tensor_trick_check,
)
from polyattn.datasets import (
    Label,
    ScoreVector,
    SelfAttnInstance,
    build_selfattn_instance,
    sample_score,
    sample_selfattn_instance,
)
from polyattn.exceptions import (
    ConfigError,
    DomainError,
    PolyAttnError,
    ResourceError,
    SizeError,
    ValidationError,
)
from polyattn.experiments import SelfAttnParams, beta_sweep, separation_experiment
from polyattn.lemmas import LEMMA_IDS, check_lemma
from polyattn.network import NetworkParams, f_network_score, f_network_selfattn, sample_signs
from polyattn.regimes import Regime, RegimeConfig
from polyattn.report import ExperimentReport
from polyattn.store import ReportStore

__all__ = [
    "AttentionWeights",
    "ConfigError",
    "DomainError",
    "ExperimentReport",
    "LEMMA_IDS",
    "Label",
    "NetworkParams",
    "PolyAttnError",
    "Regime",
    "RegimeConfig",
    "ReportStore",
    "ResourceError",
    "ScoreVector",
    "SelfAttnInstance",
    "SelfAttnParams",
    "SizeError",
    "ValidationError",
    "attention_forward",
    "beta_sweep",
    "block_attention",
    "build_selfattn_instance",
    "c_poly",
    "check_lemma",
    "f_network_score",
    "f_network_selfattn",
    "full_attention_matrix",
    "sample_score",
    "sample_selfattn_instance",
    "sample_signs",
    "score_attention",
    "separation_experiment",
    "softmax_scores",
    "tensor_trick_check",
]
__version__ = "0.1.0"
