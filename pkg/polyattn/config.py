"""RunConfig: the JSON document accepted by ``run-separation`` and ``sweep-beta``.

Example::

    {
      "schema_version": 1,
      "dataset": "selfattn",
      "sizes": [1024],
      "trials": 100,
      "regimes": [{"regime": "high_beta", "beta": 11}],
      "selfattn": {"t": 1, "a0": 0.05, "a1": 1.0},
      "output": {"report": "report.json", "trials_csv": "trials.csv"}
    }

The master seed is not part of the document; it always comes from the
command line.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from polyattn.exceptions import ConfigError, PolyAttnError
from polyattn.experiments import DATASETS, SelfAttnParams, parse_sweep
from polyattn.network import DEFAULT_C, DEFAULT_LOG_BASE
from polyattn.regimes import RegimeConfig

CONFIG_SCHEMA_VERSION = 1

TOP_LEVEL_KEYS = {
    "schema_version", "dataset", "sizes", "trials", "delta", "C", "hoeffding_C",
    "log_base", "tau", "m", "tau_sqrt_log", "threads", "rate_threshold", "kind",
    "regimes", "selfattn", "output", "instance", "sweep",
}
REGIME_KEYS = {"regime", "beta", "c0"}
SELFATTN_KEYS = {"t", "d", "a0", "a1", "b", "c"}
OUTPUT_KEYS = {"report", "trials_csv", "sweep_csv"}
SWEEP_KEYS = {"start", "stop", "count"}
KINDS = ("poly", "softmax")


def _unknown(section: str, doc: Dict[str, Any], allowed: set) -> List[str]:
    return [f"unknown key {section}{key!r}" for key in sorted(set(doc) - allowed)]


def _typed(failed: List[str], name: str, value: Any, types, optional: bool = True) -> Any:
    if value is None and optional:
        return None
    # bool is an int subclass; never accept it for a number
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        failed.append(f"{name} has the wrong type (got {value!r})")
        return None
    if not isinstance(value, types):
        failed.append(f"{name} has the wrong type (got {value!r})")
        return None
    return value


@dataclass
class RunConfig:
    """A validated run configuration."""

    dataset: str
    sizes: List[int]
    regimes: List[RegimeConfig]
    trials: Optional[int] = None
    threads: Optional[int] = None
    kind: str = "poly"
    selfattn: Optional[SelfAttnParams] = None
    instance: Optional[str] = None
    output: Dict[str, str] = field(default_factory=dict)
    sweep: Optional[Dict[str, float]] = None

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], seed: int = 0) -> "RunConfig":
        """Validate a parsed document.

        Raises:
            ConfigError: listing every problem found
        """
        if not isinstance(doc, dict):
            raise ConfigError("run configuration must be a JSON object")
        failed = _unknown("", doc, TOP_LEVEL_KEYS)
        version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            failed.append(f"schema_version must be {CONFIG_SCHEMA_VERSION} (got {version!r})")

        dataset = doc.get("dataset")
        if dataset not in DATASETS:
            failed.append(f"dataset must be one of {', '.join(DATASETS)} (got {dataset!r})")
        kind = doc.get("kind", "poly")
        if kind not in KINDS:
            failed.append(f"kind must be one of {', '.join(KINDS)} (got {kind!r})")
        elif dataset == "selfattn" and kind != "poly":
            failed.append(f"kind {kind!r} applies only to the score dataset")

        sizes = doc.get("sizes", [])
        if not isinstance(sizes, list) or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 2 for n in sizes):
            failed.append(f"sizes must be a list of integers >= 2 (got {sizes!r})")
            sizes = []

        trials = _typed(failed, "trials", doc.get("trials"), int)
        threads = _typed(failed, "threads", doc.get("threads"), int)
        if threads is not None and threads < 1:
            failed.append(f"threads must be >= 1 (got {threads})")

        shared = {
            "delta": _typed(failed, "delta", doc.get("delta"), (int, float)),
            "C": _typed(failed, "C", doc.get("C"), (int, float)),
            "hoeffding_C": _typed(failed, "hoeffding_C", doc.get("hoeffding_C"), (int, float)),
            "log_base": _typed(failed, "log_base", doc.get("log_base"), (int, float)),
            "tau": _typed(failed, "tau", doc.get("tau"), (int, float)),
            "m": _typed(failed, "m", doc.get("m"), int),
            "tau_sqrt_log": _typed(failed, "tau_sqrt_log", doc.get("tau_sqrt_log"), bool),
            "rate_threshold": _typed(failed, "rate_threshold", doc.get("rate_threshold"), (int, float)),
            "trials": trials,
        }
        shared = {key: value for key, value in shared.items() if value is not None}
        shared.setdefault("C", DEFAULT_C)
        shared.setdefault("log_base", DEFAULT_LOG_BASE)

        regimes = []
        entries = doc.get("regimes", [])
        if not isinstance(entries, list) or not entries:
            failed.append("regimes must be a non-empty list")
            entries = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                failed.append(f"regimes[{i}] must be an object")
                continue
            failed.extend(_unknown(f"regimes[{i}].", entry, REGIME_KEYS))
            if "regime" not in entry or "beta" not in entry:
                failed.append(f"regimes[{i}] needs regime and beta")
                continue
            try:
                regimes.append(
                    RegimeConfig(
                        regime=entry["regime"],
                        beta=float(entry["beta"]),
                        c0=entry.get("c0"),
                        master_seed=seed,
                        **shared,
                    )
                )
            except ConfigError as exc:
                failed.extend(f"regimes[{i}]: {item}" for item in (exc.failed or [str(exc)]))
            except (TypeError, ValueError) as exc:
                failed.append(f"regimes[{i}]: {exc}")

        selfattn = None
        section = doc.get("selfattn")
        if section is not None:
            if not isinstance(section, dict):
                failed.append("selfattn must be an object")
            else:
                failed.extend(_unknown("selfattn.", section, SELFATTN_KEYS))
                try:
                    selfattn = SelfAttnParams(**{k: v for k, v in section.items() if k in SELFATTN_KEYS})
                except PolyAttnError as exc:
                    failed.append(str(exc))
        elif dataset == "selfattn" and doc.get("instance") is None:
            failed.append("the selfattn dataset needs a selfattn section or an instance")

        output = doc.get("output", {})
        if not isinstance(output, dict):
            failed.append("output must be an object")
            output = {}
        failed.extend(_unknown("output.", output, OUTPUT_KEYS))

        sweep = doc.get("sweep")
        if sweep is not None:
            if not isinstance(sweep, dict) or set(sweep) != SWEEP_KEYS:
                failed.append("sweep must have exactly start, stop and count")
                sweep = None
            elif not isinstance(sweep["count"], int) or sweep["count"] < 1:
                failed.append(f"sweep.count must be an integer >= 1 (got {sweep['count']!r})")

        instance = _typed(failed, "instance", doc.get("instance"), str)

        if failed:
            raise ConfigError("invalid run configuration", failed)
        return cls(
            dataset=dataset,
            sizes=list(sizes),
            regimes=regimes,
            trials=trials,
            threads=threads,
            kind=kind,
            selfattn=selfattn,
            instance=instance,
            output={k: str(v) for k, v in output.items()},
            sweep=sweep,
        )

    @classmethod
    def load(cls, path: Union[str, Path], seed: int = 0) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc, seed)

    def sweep_betas(self, spec: Optional[str] = None) -> Sequence[float]:
        """Betas from ``--sweep-beta start:stop:count`` or the ``sweep`` section."""
        if spec is not None:
            return parse_sweep(spec)
        if self.sweep is None:
            raise ConfigError("no sweep given: pass --sweep-beta or add a sweep section")
        return parse_sweep(f"{self.sweep['start']}:{self.sweep['stop']}:{self.sweep['count']}")
