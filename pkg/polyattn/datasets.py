"""Synthetic datasets: score vectors and structured self-attention instances.

Python-facing indices (``spike_index``, ``j3``, row indices) are 0-based.
Serialized documents and the CLI use the 1-based convention of the
dataset definition (the n=9, d=5, t=3 example instance has ``j3 = 2`` there and
``j3 = 1`` here).
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from celery.utils.log import get_logger

from polyattn.exceptions import ResourceError, SizeError, ValidationError
from polyattn.seeding import make_rng, normalize_seed
from polyattn.tensor_core import ArrayLike, as_matrix, as_vector

logger = get_logger(__name__)

SCHEMA_VERSION = 1

# dense n x d (or n x n) materialisation is refused above this n
MATERIALIZE_LIMIT = 4096

SCORE_LOW = 2.0
SCORE_HIGH = 4.0
SPIKE_VALUE = 32.0

# tolerance on b + c = 1
SUM_TOLERANCE = 1e-12


class Label(str, Enum):
    D0 = "d0"
    D1 = "d1"

    @classmethod
    def parse(cls, value: Union[str, "Label"]) -> "Label":
        if isinstance(value, Label):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError("label in {d0, d1}", f"got {value!r}") from None


@dataclass(frozen=True)
class ScoreVector:
    """The vector s = Ax of the score datasets.

    ``label`` may be None for an arbitrary positive score vector; when it is
    set the dataset constraints are enforced.
    """

    entries: np.ndarray
    label: Optional[Label] = None
    spike_index: Optional[int] = None

    def __post_init__(self):
        entries = as_vector(self.entries, "score vector")
        object.__setattr__(self, "entries", entries)
        if np.any(entries <= 0):
            raise ValidationError("score entries > 0")
        if self.label is None:
            return
        object.__setattr__(self, "label", Label.parse(self.label))
        in_band = (entries >= SCORE_LOW) & (entries <= SCORE_HIGH)
        if self.label is Label.D0:
            if self.spike_index is not None:
                raise ValidationError("D0 has no spike index")
            if not np.all(in_band):
                raise ValidationError("D0 entries in [2, 4]")
            return
        if self.spike_index is None or not 0 <= self.spike_index < entries.shape[0]:
            raise ValidationError("D1 spike index in [n]", f"got {self.spike_index}")
        if entries[self.spike_index] != SPIKE_VALUE:
            raise ValidationError("D1 spike entry = 32")
        others = np.delete(in_band, self.spike_index)
        if not np.all(others):
            raise ValidationError("D1 non-spike entries in [2, 4]")

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    def scaled(self, factor: float) -> "ScoreVector":
        """Unlabelled copy multiplied by a positive factor."""
        return ScoreVector(self.entries * factor)


@dataclass(frozen=True)
class RealizedPair:
    """A matrix/weight pair whose product is a given score vector."""

    matrix: np.ndarray
    weight: np.ndarray

    def product(self) -> np.ndarray:
        return self.matrix @ self.weight


def sample_score(n: int, label: Union[str, Label], seed: int) -> ScoreVector:
    """Draw a score vector from D0 or D1.

    Entries are i.i.d. uniform on [2, 4]; a D1 vector then has one uniformly
    chosen index overwritten with exactly 32.
    """
    label = Label.parse(label)
    if n < 2:
        raise ValidationError("n >= 2", f"got n={n}")
    rng = make_rng(seed)
    entries = rng.uniform(SCORE_LOW, SCORE_HIGH, size=n)
    spike = None
    if label is Label.D1:
        spike = int(rng.integers(n))
        entries[spike] = SPIKE_VALUE
    return ScoreVector(entries, label, spike)


def realize_matrix(s: ScoreVector, d: int) -> RealizedPair:
    """Canonical witness for a score vector: s in column 0, x = e_0."""
    if d < 1:
        raise SizeError(f"d must be >= 1, got {d}")
    matrix = np.zeros((s.dim, d), dtype=np.float64)
    matrix[:, 0] = s.entries
    weight = np.zeros(d, dtype=np.float64)
    weight[0] = 1.0
    return RealizedPair(matrix, weight)


@dataclass(frozen=True)
class SelfAttnInstance:
    """Structured matrix A = A1 = A2 = A3 of the self-attention datasets.

    Column 0 is ``a * e_{j3}``, columns 1..d-2 are t stacked copies of
    ``b * I_{d-2}``, column d-1 is ``c * 1_n``. The matrix is never stored;
    rows, products and row sums are computed from the parameters.
    """

    n: int
    d: int
    t: int
    j3: int
    a: float
    b: float
    c: float
    label: Label

    @property
    def type_ii_width(self) -> int:
        return self.d - 2

    def type_ii_column(self, row: int) -> int:
        """Index of the Type II column holding ``b`` in ``row``."""
        return 1 + row % self.type_ii_width

    @property
    def special_column(self) -> int:
        """The Type II column whose support contains the spike row."""
        return self.type_ii_column(self.j3)

    def row(self, j: int) -> np.ndarray:
        if not 0 <= j < self.n:
            raise SizeError(f"row index {j} out of range for n={self.n}")
        out = np.zeros(self.d, dtype=np.float64)
        if j == self.j3:
            out[0] = self.a
        out[self.type_ii_column(j)] = self.b
        out[-1] = self.c
        return out

    def row_sums(self) -> np.ndarray:
        sums = np.full(self.n, self.b + self.c, dtype=np.float64)
        sums[self.j3] = self.a + self.b + self.c
        return sums

    def matvec(self, v: ArrayLike) -> np.ndarray:
        """A @ v without building A."""
        v = as_vector(v, "v")
        if v.shape[0] != self.d:
            raise SizeError(f"matvec needs a {self.d}-vector, got {v.shape[0]}")
        type_ii = v[1:-1]
        out = self.b * np.tile(type_ii, self.t) + self.c * v[-1]
        out[self.j3] += self.a * v[0]
        return out

    def rmatvec(self, w: ArrayLike) -> np.ndarray:
        """A.T @ w without building A."""
        w = as_vector(w, "w")
        if w.shape[0] != self.n:
            raise SizeError(f"rmatvec needs an {self.n}-vector, got {w.shape[0]}")
        out = np.empty(self.d, dtype=np.float64)
        out[0] = self.a * w[self.j3]
        out[1:-1] = self.b * w.reshape(self.t, self.type_ii_width).sum(axis=0)
        out[-1] = self.c * w.sum()
        return out

    def materialize(self, limit: int = MATERIALIZE_LIMIT) -> np.ndarray:
        if self.n > limit:
            raise ResourceError(f"refusing to materialize n={self.n} rows (limit {limit})")
        matrix = np.zeros((self.n, self.d), dtype=np.float64)
        matrix[self.j3, 0] = self.a
        matrix[:, 1:-1] = self.b * np.tile(np.eye(self.type_ii_width), (self.t, 1))
        matrix[:, -1] = self.c
        return matrix

    def to_params(self) -> Dict[str, Any]:
        """Parameters in the 1-based document convention."""
        return {
            "n": self.n,
            "d": self.d,
            "t": self.t,
            "j3": self.j3 + 1,
            "a": self.a,
            "b": self.b,
            "c": self.c,
        }


def selfattn_shape(
    n: Optional[int] = None, d: Optional[int] = None, t: Optional[int] = None
) -> Tuple[int, int, int]:
    """Complete (n, d, t) from any two of them using n = (d - 2) * t."""
    if d is not None and t is not None:
        derived = (d - 2) * t
        if n is not None and n != derived:
            raise ValidationError("n = (d - 2) * t", f"got n={n}, d={d}, t={t}")
        return derived, d, t
    if n is not None and t is not None:
        if t < 1 or n % t:
            raise ValidationError("n = (d - 2) * t", f"t={t} does not divide n={n}")
        return n, n // t + 2, t
    if n is not None and d is not None:
        if d < 3 or n % (d - 2):
            raise ValidationError("n = (d - 2) * t", f"d - 2 = {d - 2} does not divide n={n}")
        return n, d, n // (d - 2)
    raise ValidationError("n = (d - 2) * t", "two of n, d, t are required")


def build_selfattn_instance(
    n: int,
    d: int,
    t: int,
    j3: int,
    a: float,
    b: float,
    c: float,
    label: Union[str, Label],
) -> SelfAttnInstance:
    """Validate parameters and return a SelfAttnInstance.

    Raises:
        ValidationError: naming the first violated constraint
    """
    label = Label.parse(label)
    for name, value in (("n", n), ("d", d), ("t", t)):
        if int(value) != value or value < 1:
            raise ValidationError(f"{name} is a positive integer", f"got {value}")
    n, d, t = int(n), int(d), int(t)
    if d < 3:
        raise ValidationError("d >= 3", f"got d={d}")
    if n != (d - 2) * t:
        raise ValidationError("n = (d - 2) * t", f"got n={n}, d={d}, t={t}")
    if int(j3) != j3 or not 0 <= j3 < n:
        raise ValidationError("j3 in [n]", f"got j3={j3} (0-based), n={n}")
    for name, value in (("a", a), ("b", b), ("c", c)):
        if not math.isfinite(value):
            raise ValidationError(f"{name} is finite", f"got {value}")
    if abs(b + c - 1.0) > SUM_TOLERANCE:
        raise ValidationError("b + c = 1", f"got b={b}, c={c}")
    if b < 0.1:
        raise ValidationError("b >= 0.1", f"got b={b}")
    if c < 0.1:
        raise ValidationError("c >= 0.1", f"got c={c}")
    if label is Label.D0 and not 0 < a < 0.1:
        raise ValidationError("a0 in (0, 0.1)", f"got a={a}")
    if label is Label.D1 and not a >= 0.7:
        raise ValidationError("a1 >= 0.7", f"got a={a}")
    return SelfAttnInstance(n, d, t, int(j3), float(a), float(b), float(c), label)


def sample_selfattn_instance(
    n: int, d: int, t: int, a: float, b: float, c: float, label: Union[str, Label], seed: int
) -> SelfAttnInstance:
    """Build an instance whose spike row j3 is drawn uniformly from [n]."""
    j3 = int(make_rng(seed).integers(n))
    return build_selfattn_instance(n, d, t, j3, a, b, c, label)


def instance_from_matrices(
    a1: ArrayLike, a2: ArrayLike, a3: ArrayLike, label: Union[str, Label]
) -> SelfAttnInstance:
    """Recover and validate an instance from three explicit matrices.

    Raises:
        ValidationError: if the matrices differ or do not have the
            Type I / II / III column layout
    """
    m1, m2, m3 = (as_matrix(m, name) for m, name in ((a1, "A1"), (a2, "A2"), (a3, "A3")))
    if not (m1.shape == m2.shape == m3.shape and np.array_equal(m1, m2) and np.array_equal(m2, m3)):
        raise ValidationError("A1 = A2 = A3")
    n, d = m1.shape
    if d < 3 or n % (d - 2):
        raise ValidationError("n = (d - 2) * t", f"got shape {n}x{d}")
    nonzero = np.flatnonzero(m1[:, 0])
    if nonzero.shape[0] != 1:
        raise ValidationError("Type I column is a * e_j3")
    j3 = int(nonzero[0])
    instance = build_selfattn_instance(
        n, d, n // (d - 2), j3, float(m1[j3, 0]), float(m1[0, 1]), float(m1[0, -1]), label
    )
    if not np.array_equal(instance.materialize(limit=max(n, MATERIALIZE_LIMIT)), m1):
        raise ValidationError("Type II / III column layout")
    return instance


def to_document(item: Union[ScoreVector, SelfAttnInstance], seed: int) -> Dict[str, Any]:
    """Serializable description of a dataset instance."""
    if isinstance(item, SelfAttnInstance):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "selfattn",
            "params": item.to_params(),
            "seed": normalize_seed(seed),
            "label": item.label.value,
        }
    params: Dict[str, Any] = {"n": item.dim, "entries": [float(x) for x in item.entries]}
    if item.spike_index is not None:
        params["spike_index"] = item.spike_index + 1
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "score",
        "params": params,
        "seed": normalize_seed(seed),
        "label": item.label.value if item.label else None,
    }


_SELFATTN_PARAMS = (("n", int), ("d", int), ("t", int), ("j3", int), ("a", float), ("b", float), ("c", float))


def _param(params: Dict[str, Any], key: str, kind: type) -> Any:
    """``params[key]``, checked to be present and of the given numeric kind."""
    if key not in params:
        raise ValidationError(f"params.{key} present")
    value = params[key]
    accepted = (int,) if kind is int else (int, float)
    if isinstance(value, bool) or not isinstance(value, accepted):
        raise ValidationError(f"params.{key} is {'an integer' if kind is int else 'a number'}", f"got {value!r}")
    return value


def from_document(doc: Dict[str, Any]) -> Union[ScoreVector, SelfAttnInstance]:
    """Rebuild the instance a document describes.

    Raises:
        ValidationError: naming the missing field or violated constraint
    """
    if not isinstance(doc, dict):
        raise ValidationError("document is a JSON object", f"got {type(doc).__name__}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"schema_version = {SCHEMA_VERSION}", f"got {doc.get('schema_version')}")
    kind = doc.get("kind")
    params = doc.get("params")
    if not isinstance(params, dict):
        raise ValidationError("params is a JSON object", f"got {params!r}")
    label = doc.get("label")
    if kind == "selfattn":
        n, d, t, j3, a, b, c = (_param(params, key, kind_) for key, kind_ in _SELFATTN_PARAMS)
        return build_selfattn_instance(n, d, t, j3 - 1, a, b, c, label)
    if kind == "score":
        if "entries" not in params:
            seed = doc.get("seed")
            if isinstance(seed, bool) or not isinstance(seed, int):
                raise ValidationError("seed present when params.entries is absent", f"got {seed!r}")
            return sample_score(_param(params, "n", int), label, seed)
        entries = params["entries"]
        if not isinstance(entries, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in entries):
            raise ValidationError("params.entries is a list of numbers")
        spike = params.get("spike_index")
        if spike is not None:
            spike = _param(params, "spike_index", int)
        return ScoreVector(
            np.asarray(entries, dtype=np.float64),
            Label.parse(label) if label else None,
            spike - 1 if spike is not None else None,
        )
    raise ValidationError("kind in {score, selfattn}", f"got {kind!r}")


def write_document(doc: Dict[str, Any], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %s instance to %s", doc["kind"], path)


def load_document(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("instance file is valid JSON", f"{path}: {exc}") from None


def read_document(path: Union[str, Path]) -> Union[ScoreVector, SelfAttnInstance]:
    return from_document(load_document(path))


def write_matrix_csv(matrix: ArrayLike, path: Union[str, Path]) -> None:
    """Row-major CSV, one matrix row per line, no header."""
    np.savetxt(path, as_matrix(matrix), delimiter=",", fmt="%.17g", encoding="utf-8")


def read_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """Inverse of ``write_matrix_csv``."""
    try:
        return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise ValidationError("matrix CSV holds numbers only", f"{path}: {exc}") from None
