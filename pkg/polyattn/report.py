"""Experiment reports and their JSON / CSV forms.

Everything in a report except ``meta`` is a function of the configuration
and the master seed, so two runs with the same inputs produce the same
``canonical_bytes()``.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from celery.utils.log import get_logger

logger = get_logger(__name__)

REPORT_SCHEMA_VERSION = 1
TRIALS_CSV_SCHEMA_VERSION = 1
SWEEP_CSV_SCHEMA_VERSION = 1

TRIAL_COLUMNS = ("trial_index", "label", "regime", "F_value", "seed")
SWEEP_COLUMNS = ("beta", "label", "rate_F_positive")


@dataclass(frozen=True)
class ClauseVerdict:
    """Outcome of one lemma clause.

    ``observed`` and ``bound`` are the compared numbers, when the clause is
    numeric; ``relation`` is how they were compared ("<=", ">=", "==").
    """

    clause: str
    passed: bool
    observed: Optional[float] = None
    bound: Optional[float] = None
    relation: Optional[str] = None
    detail: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "clause": self.clause,
            "passed": self.passed,
            "observed": self.observed,
            "bound": self.bound,
            "relation": self.relation,
            "detail": self.detail,
        }


def compare(clause: str, observed: float, relation: str, bound: float, rel_tol: float = 0.0, detail=None) -> ClauseVerdict:
    """Build a verdict for ``observed <relation> bound``.

    ``rel_tol`` widens inequalities by a relative amount and is the
    tolerance of ``==``.
    """
    slack = rel_tol * max(1.0, abs(bound))
    if relation == "<=":
        passed = observed <= bound + slack
    elif relation == ">=":
        passed = observed >= bound - slack
    elif relation == "==":
        passed = abs(observed - bound) <= slack
    else:
        raise ValueError(f"unknown relation {relation!r}")
    return ClauseVerdict(clause, bool(passed), float(observed), float(bound), relation, detail)


@dataclass
class ExperimentReport:
    kind: str
    config: Dict[str, Any]
    verdicts: List[ClauseVerdict] = field(default_factory=list)
    trials: List[Dict[str, Any]] = field(default_factory=list)
    outcomes: List[Dict[str, Any]] = field(default_factory=list)
    tails: List[Dict[str, Any]] = field(default_factory=list)
    sweep: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failed_clauses(self) -> List[str]:
        return [v.clause for v in self.verdicts if not v.passed]

    def add(self, verdict: ClauseVerdict) -> ClauseVerdict:
        self.verdicts.append(verdict)
        logger.debug("clause %s: %s", verdict.clause, "pass" if verdict.passed else "FAIL")
        return verdict

    def extend(self, other: "ExperimentReport", prefix: Optional[str] = None) -> None:
        """Fold another report's verdicts, tails and notes into this one."""
        for v in other.verdicts:
            clause = f"{prefix}: {v.clause}" if prefix else v.clause
            self.verdicts.append(
                ClauseVerdict(clause, v.passed, v.observed, v.bound, v.relation, v.detail)
            )
        self.tails.extend(other.tails)
        self.notes.extend(other.notes)

    def stamp(self, started: datetime) -> None:
        finished = datetime.now(timezone.utc)
        self.meta = {
            "created_at": finished.isoformat(),
            "duration_seconds": (finished - started).total_seconds(),
        }

    def to_dict(self, include_meta: bool = True) -> Dict[str, Any]:
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "csv_schema_versions": {
                "trials": TRIALS_CSV_SCHEMA_VERSION,
                "sweep": SWEEP_CSV_SCHEMA_VERSION,
            },
            "kind": self.kind,
            "config": self.config,
            "passed": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "outcomes": self.outcomes,
            "tails": self.tails,
            "sweep": self.sweep,
            "trials": self.trials,
            "notes": self.notes,
        }
        if include_meta:
            doc["meta"] = self.meta
        return doc

    def canonical_bytes(self) -> bytes:
        """Sorted-key JSON of the report without ``meta``."""
        return json.dumps(self.to_dict(include_meta=False), sort_keys=True).encode("utf-8")

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ExperimentReport":
        return cls(
            kind=doc["kind"],
            config=doc.get("config", {}),
            verdicts=[ClauseVerdict(**v) for v in doc.get("verdicts", [])],
            trials=list(doc.get("trials", [])),
            outcomes=list(doc.get("outcomes", [])),
            tails=list(doc.get("tails", [])),
            sweep=list(doc.get("sweep", [])),
            notes=list(doc.get("notes", [])),
            meta=dict(doc.get("meta", {})),
        )


def config_id(config: Dict[str, Any]) -> str:
    """SHA-256 of the sorted-key JSON of a configuration."""
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def write_json(report: ExperimentReport, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("wrote %s report to %s", report.kind, path)


def _write_rows(path: Union[str, Path], columns: Iterable[str], rows: Iterable[Dict[str, Any]]) -> None:
    columns = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trials_csv(report: ExperimentReport, path: Union[str, Path]) -> None:
    """One row per trial: trial_index, label, regime, F_value, seed."""
    _write_rows(path, TRIAL_COLUMNS, report.trials)
    logger.info("wrote %d trial rows to %s", len(report.trials), path)


def write_sweep_csv(report: ExperimentReport, path: Union[str, Path]) -> None:
    """One row per (beta, label): beta, label, rate_F_positive."""
    _write_rows(path, SWEEP_COLUMNS, report.sweep)
    logger.info("wrote %d sweep rows to %s", len(report.sweep), path)
