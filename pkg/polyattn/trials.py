"""A single separation trial: sample an instance and a sign matrix, evaluate F.

Cells travel through Celery as plain JSON dicts, so everything here is built
from and reduced to JSON-compatible values.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

from polyattn.attention import AttentionWeights
from polyattn.datasets import Label, SelfAttnInstance, from_document, sample_score, sample_selfattn_instance
from polyattn.network import NetworkParams, f_network_score, f_network_selfattn, sample_signs
from polyattn.seeding import derive_seed, trial_seed

INSTANCE_STREAM = 0
SIGN_STREAM = 1


@dataclass(frozen=True)
class TrialCell:
    """Everything that is fixed across the trials of one (size, regime, label) cell."""

    dataset: str
    n: int
    label: str
    regime: str
    beta: float
    tau: float
    m: int
    delta: float
    seed: int
    d: Optional[int] = None
    t: Optional[int] = None
    a: Optional[float] = None
    b: float = 0.5
    c: float = 0.5
    kind: str = "poly"
    instance: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrialCell":
        return cls(**data)


def _sample_target(cell: TrialCell, seed: int):
    if cell.instance is not None:
        return from_document(cell.instance)
    instance_seed = derive_seed(seed, INSTANCE_STREAM)
    if cell.dataset == "score":
        return sample_score(cell.n, cell.label, instance_seed)
    return sample_selfattn_instance(
        cell.n, cell.d, cell.t, cell.a, cell.b, cell.c, Label.parse(cell.label), instance_seed
    )


def run_trial(cell: TrialCell, trial_index: int) -> Dict[str, Any]:
    """Evaluate F for one trial; the result depends only on (cell, trial_index)."""
    seed = trial_seed(cell.seed, trial_index)
    target = _sample_target(cell, seed)
    params = NetworkParams(tau=cell.tau, m=cell.m, beta=cell.beta, delta=cell.delta)
    if isinstance(target, SelfAttnInstance):
        y = sample_signs(target.d, cell.m, derive_seed(seed, SIGN_STREAM))
        value = f_network_selfattn(target, AttentionWeights.all_ones(target.d), y, params)
    else:
        y = sample_signs(target.dim, cell.m, derive_seed(seed, SIGN_STREAM))
        value = f_network_score(target, y, params, cell.kind)
    return {
        "trial_index": trial_index,
        "label": cell.label,
        "regime": cell.regime,
        "F_value": float(value),
        "seed": seed,
    }
