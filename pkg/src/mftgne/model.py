"""Problem data for N-player scalar LQ mean-field-type difference games.

All per-stage arrays are stage-major: ``b[k, i]`` is player ``i``'s input
coefficient at stage ``k``.  Controls live on stages ``0..K-1`` and states on
``0..K``, so state-cost arrays carry ``K + 1`` entries.

Constraint rows of player ``i`` at stage ``k`` read::

    m_bar[k] * E[x_k] + sum_j n_bar[k, j] . E[u_k^j] + p[k] >= 0

with ``m_bar[k]``, ``n_bar[k, j]`` and ``p[k]`` vectors of length ``rows``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import MissingFieldError, SpecError, SpecFormatError, SpecShapeError, UnknownFieldError

FORMAT_VERSION = 1


def _frozen(value) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (ValueError, TypeError) as exc:
        raise SpecShapeError(f"ragged or non-numeric array: {exc}") from None
    arr.setflags(write=False)
    return arr


class _ArrayRecord:
    """Field-wise equality for frozen dataclasses holding numpy arrays."""

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(np.asarray(a), np.asarray(b)):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DynamicsSpec(_ArrayRecord):
    horizon: int
    players: int
    a: np.ndarray
    a_bar: np.ndarray
    b: np.ndarray
    b_bar: np.ndarray
    c: np.ndarray
    sigma: np.ndarray
    initial_mean: float
    initial_variance: float
    noise_second_moment: np.ndarray

    def __post_init__(self):
        for name in ("a", "a_bar", "b", "b_bar", "c", "sigma", "noise_second_moment"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "players", int(self.players))
        object.__setattr__(self, "initial_mean", float(self.initial_mean))
        object.__setattr__(self, "initial_variance", float(self.initial_variance))
        if self.horizon < 1 or self.players < 1:
            raise SpecError("horizon and players must be positive")
        if self.initial_variance < 0:
            raise SpecError("initial_variance must be nonnegative")
        if np.any(self.noise_second_moment < 0):
            raise SpecError("noise_second_moment must be nonnegative at every stage")

    @property
    def b_total(self) -> np.ndarray:
        """Mean-channel input coefficients ``b + b_bar``, shape (K, N)."""
        return self.b + self.b_bar


@dataclass(frozen=True, eq=False)
class CostSpec(_ArrayRecord):
    """One player's weights.  ``r[k, j]`` weighs player ``j``'s control."""

    q: np.ndarray
    q_bar: np.ndarray
    r: np.ndarray
    r_bar: np.ndarray

    def __post_init__(self):
        for name in ("q", "q_bar", "r", "r_bar"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class ConstraintSpec(_ArrayRecord):
    """One player's constraint rows; ``n_bar[k, j]`` multiplies ``E[u_k^j]``."""

    rows: int
    m_bar: np.ndarray
    n_bar: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", int(self.rows))
        for name in ("m_bar", "n_bar", "p"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class GameSpec(_ArrayRecord):
    dynamics: DynamicsSpec
    costs: tuple
    constraints: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def K(self) -> int:
        return self.dynamics.horizon

    @property
    def N(self) -> int:
        return self.dynamics.players

    @property
    def rows(self) -> tuple:
        return tuple(con.rows for con in self.constraints)

    @property
    def row_offsets(self) -> np.ndarray:
        """Start of each player's rows inside one stage's block of constraints."""
        return np.concatenate([[0], np.cumsum(self.rows)]).astype(int)

    @property
    def rows_per_stage(self) -> int:
        return int(sum(self.rows))

    @property
    def num_constraints(self) -> int:
        return self.K * self.rows_per_stage


def check_shapes(spec: GameSpec) -> None:
    """Raise :class:`SpecShapeError` unless every array matches ``K`` and ``N``."""
    dyn = spec.dynamics
    K, N = dyn.horizon, dyn.players

    def expect(path, arr, shape):
        if arr.shape != shape:
            raise SpecShapeError(f"{path}: expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise SpecShapeError(f"{path}: non-finite entries")

    for name in ("a", "a_bar", "c", "sigma", "noise_second_moment"):
        expect(f"dynamics.{name}", getattr(dyn, name), (K,))
    expect("dynamics.b", dyn.b, (K, N))
    expect("dynamics.b_bar", dyn.b_bar, (K, N))
    if not (math.isfinite(dyn.initial_mean) and math.isfinite(dyn.initial_variance)):
        raise SpecShapeError("dynamics: initial moments must be finite")
    if len(spec.costs) != N:
        raise SpecShapeError(f"costs: expected {N} player entries, got {len(spec.costs)}")
    if len(spec.constraints) != N:
        raise SpecShapeError(f"constraints: expected {N} player entries, got {len(spec.constraints)}")
    for i, cost in enumerate(spec.costs):
        expect(f"costs[{i}].q", cost.q, (K + 1,))
        expect(f"costs[{i}].q_bar", cost.q_bar, (K + 1,))
        expect(f"costs[{i}].r", cost.r, (K, N))
        expect(f"costs[{i}].r_bar", cost.r_bar, (K, N))
    for i, con in enumerate(spec.constraints):
        s = con.rows
        if s < 0:
            raise SpecShapeError(f"constraints[{i}].rows must be nonnegative")
        expect(f"constraints[{i}].m_bar", con.m_bar, (K, s))
        expect(f"constraints[{i}].n_bar", con.n_bar, (K, N, s))
        expect(f"constraints[{i}].p", con.p, (K, s))
    if spec.rows_per_stage == 0:
        raise SpecShapeError("constraints: at least one row is required")


def _normalized(spec: GameSpec) -> GameSpec:
    # s = 0 rows load as empty arrays of the wrong rank; give them their canonical shape.
    K, N = spec.K, spec.N
    fixed = []
    for con in spec.constraints:
        s = con.rows
        if con.m_bar.size == 0 and s == 0:
            con = ConstraintSpec(0, np.zeros((K, 0)), np.zeros((K, N, 0)), np.zeros((K, 0)))
        fixed.append(con)
    if all(a is b for a, b in zip(fixed, spec.constraints)):
        return spec
    return GameSpec(spec.dynamics, spec.costs, tuple(fixed), spec.meta)


@dataclass(frozen=True)
class Violation:
    rule: str
    player: int
    stage: int
    row: int | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def lines(self) -> list:
        return [
            f"{v.rule}: player {v.player}, stage {v.stage}"
            + (f", row {v.row}" if v.row is not None else "")
            + f": {v.message}"
            for v in self.violations
        ]


RULE_OWN_COEFFICIENT = "own-coefficient-nonzero"
RULE_CONVEXITY = "cost-convexity"


def validate_spec(spec: GameSpec, relaxed: bool = False) -> ValidationReport:
    """List every violated standing assumption of the instance.

    Checked: every entry of a player's own constraint coefficient ``n_bar[k, i]``
    is nonzero (constraint qualification), and, unless ``relaxed``, the
    cost-convexity sign conditions ``q >= 0``, ``q + q_bar >= 0``,
    ``r_ii > 0``, ``r_ii + r_bar_ii > 0``.  In relaxed mode only the weaker
    positivity test inside :func:`mftgne.recursion.backward_pass` applies.
    Non-emptiness of the joint feasible set is not checkable from the data and
    is not examined here.
    """
    check_shapes(spec)
    out = []
    for i, con in enumerate(spec.constraints):
        own = con.n_bar[:, i, :]
        for k, row in zip(*np.nonzero(own == 0.0)):
            out.append(Violation(RULE_OWN_COEFFICIENT, i, int(k), int(row),
                                 "own mean-control coefficient of a constraint row is zero"))
    if not relaxed:
        for i, cost in enumerate(spec.costs):
            for k in np.nonzero(cost.q < 0)[0]:
                out.append(Violation(RULE_CONVEXITY, i, int(k), None, f"q = {cost.q[k]:.6g} < 0"))
            total = cost.q + cost.q_bar
            for k in np.nonzero(total < 0)[0]:
                out.append(Violation(RULE_CONVEXITY, i, int(k), None, f"q + q_bar = {total[k]:.6g} < 0"))
            r_own = cost.r[:, i]
            for k in np.nonzero(r_own <= 0)[0]:
                out.append(Violation(RULE_CONVEXITY, i, int(k), None, f"r_ii = {r_own[k]:.6g} <= 0"))
            r_tot = cost.r[:, i] + cost.r_bar[:, i]
            for k in np.nonzero(r_tot <= 0)[0]:
                out.append(Violation(RULE_CONVEXITY, i, int(k), None, f"r_ii + r_bar_ii = {r_tot[k]:.6g} <= 0"))
    return ValidationReport(tuple(out))


# -- instance files -----------------------------------------------------------

_DYNAMICS_KEYS = ("horizon", "players", "a", "a_bar", "b", "b_bar", "c", "sigma",
                  "initial_mean", "initial_variance", "noise_second_moment")
_COST_KEYS = ("q", "q_bar", "r", "r_bar")
_CONSTRAINT_KEYS = ("rows", "m_bar", "n_bar", "p")
_TOP_KEYS = ("format", "meta", "dynamics", "costs", "constraints")


def _take(obj: Any, keys, path: str, strict: bool, optional=()) -> dict:
    if not isinstance(obj, dict):
        raise SpecFormatError("expected an object", path)
    for key in keys:
        if key not in obj and key not in optional:
            raise MissingFieldError(f"missing field '{key}'", f"{path}.{key}" if path else key)
    if strict:
        extra = sorted(set(obj) - set(keys))
        if extra:
            raise UnknownFieldError(f"unknown field '{extra[0]}'", f"{path}.{extra[0]}" if path else extra[0])
    return obj


def _numeric(value, path):
    try:
        return _frozen(value)
    except SpecShapeError as exc:
        raise SpecFormatError(str(exc), path) from None


def load_spec(text: str | bytes, strict: bool = True) -> GameSpec:
    """Parse an instance document and check its shapes."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if text.strip():
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecFormatError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    else:
        doc = {}
    if not isinstance(doc, dict):
        raise SpecFormatError("top level must be an object", "")
    for key in ("dynamics", "costs", "constraints", "format"):
        if key not in doc:
            raise MissingFieldError(f"missing field '{key}'", key)
    _take(doc, _TOP_KEYS, "", strict, optional=("meta",))
    if doc["format"] != FORMAT_VERSION:
        raise SpecFormatError(f"unsupported format version {doc['format']!r}", "format")

    d = _take(doc["dynamics"], _DYNAMICS_KEYS, "dynamics", strict)
    try:
        dynamics = DynamicsSpec(
            horizon=d["horizon"], players=d["players"],
            **{k: _numeric(d[k], f"dynamics.{k}") for k in
               ("a", "a_bar", "b", "b_bar", "c", "sigma", "noise_second_moment")},
            initial_mean=d["initial_mean"], initial_variance=d["initial_variance"],
        )
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(str(exc), "dynamics") from None

    if not isinstance(doc["costs"], list):
        raise SpecFormatError("expected an array", "costs")
    if not isinstance(doc["constraints"], list):
        raise SpecFormatError("expected an array", "constraints")
    costs = []
    for i, c in enumerate(doc["costs"]):
        path = f"costs[{i}]"
        _take(c, _COST_KEYS, path, strict)
        costs.append(CostSpec(**{k: _numeric(c[k], f"{path}.{k}") for k in _COST_KEYS}))
    constraints = []
    for i, c in enumerate(doc["constraints"]):
        path = f"constraints[{i}]"
        _take(c, _CONSTRAINT_KEYS, path, strict)
        if not isinstance(c["rows"], int):
            raise SpecFormatError("rows must be an integer", f"{path}.rows")
        constraints.append(ConstraintSpec(
            rows=c["rows"], **{k: _numeric(c[k], f"{path}.{k}") for k in ("m_bar", "n_bar", "p")}))
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SpecFormatError("expected an object", "meta")
    spec = _normalized(GameSpec(dynamics, tuple(costs), tuple(constraints), meta))
    check_shapes(spec)
    return spec


def _to_jsonable(arr: np.ndarray):
    return arr.tolist()


def spec_to_dict(spec: GameSpec) -> dict:
    dyn = spec.dynamics
    return {
        "format": FORMAT_VERSION,
        "meta": dict(spec.meta),
        "dynamics": {
            "horizon": dyn.horizon,
            "players": dyn.players,
            **{k: _to_jsonable(getattr(dyn, k)) for k in ("a", "a_bar", "b", "b_bar", "c", "sigma")},
            "initial_mean": dyn.initial_mean,
            "initial_variance": dyn.initial_variance,
            "noise_second_moment": _to_jsonable(dyn.noise_second_moment),
        },
        "costs": [{k: _to_jsonable(getattr(c, k)) for k in _COST_KEYS} for c in spec.costs],
        "constraints": [
            {"rows": c.rows, **{k: _to_jsonable(getattr(c, k)) for k in ("m_bar", "n_bar", "p")}}
            for c in spec.constraints
        ],
    }


def _dump(obj, indent: int, depth: int = 0) -> str:
    # Objects are expanded one key per line; arrays of plain values stay on one line.
    pad = " " * (indent * (depth + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(v, indent, depth + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + " " * (indent * depth) + "}"
    if isinstance(obj, list) and any(isinstance(v, dict) for v in obj):
        items = [pad + _dump(v, indent, depth + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + " " * (indent * depth) + "]"
    return json.dumps(obj, allow_nan=False, separators=(", ", ": "))


def save_spec(spec: GameSpec) -> str:
    """Canonical text form; floats use shortest round-trip decimals."""
    return _dump(spec_to_dict(spec), indent=2) + "\n"
