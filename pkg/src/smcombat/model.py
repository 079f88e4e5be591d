"""State space, coefficients, and the drift/diffusion of the coupled attrition equations.

The rate of change of unit count ``m[G]`` is

    dm[G]/dt = sum_S x[G,S] m[S] + sum_S y[G,S] m[S] m[G] + z[G] m[G] eta[G]

with point-fire (``x``) and area-fire (``y``) drift terms and diagonal
multiplicative white noise ``eta``.  A :class:`ModelSpec` says which drift
terms exist; a :class:`CoefficientSet` holds their values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DomainError, SpecificationError

RED = "Red"
BLUE = "Blue"
SIDES = (RED, BLUE)

POINT = "Point"
AREA = "Area"
KINDS = (POINT, AREA)

DEFAULT_BOUNDS = {"x": (-0.1, 0.1), "y": (-0.1, 0.1), "z": (1e-5, 0.1)}


@dataclass(frozen=True)
class Unit:
    name: str
    side: str


@dataclass(frozen=True)
class Term:
    target: str
    source: str
    kind: str = POINT

    @property
    def letter(self) -> str:
        return "x" if self.kind == POINT else "y"

    @property
    def param_name(self) -> str:
        return f"{self.letter}.{self.target}.{self.source}"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Which units exist, which drift terms couple them, and the fit box.

    ``bounds`` may be given as a mapping keyed by parameter name (``x.RT.BT``,
    ``z.RT``) and/or by coefficient letter (``x``, ``y``, ``z``) for per-kind
    defaults; it is normalized to a tuple of ``(lower, upper)`` pairs in
    canonical parameter order (drift terms as declared, then noise units).
    """

    units: tuple
    terms: tuple
    noise: tuple
    bounds: tuple = None
    dt: float = 5.0
    name: str = "custom"

    def __post_init__(self):
        units = tuple(u if isinstance(u, Unit) else Unit(*u) for u in self.units)
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "noise", tuple(self.noise))
        object.__setattr__(self, "dt", float(self.dt))
        self._validate_structure()
        object.__setattr__(self, "bounds", self._normalize_bounds(self.bounds))

    def _validate_structure(self):
        names = [u.name for u in self.units]
        if not names:
            raise SpecificationError("model has no units")
        if len(set(names)) != len(names):
            raise SpecificationError(f"duplicate unit names in {names}")
        for u in self.units:
            if not u.name.isidentifier():
                raise SpecificationError(f"unit name {u.name!r} is not an identifier")
            if u.side not in SIDES:
                raise SpecificationError(f"unit {u.name!r}: side must be one of {SIDES}, got {u.side!r}")
        seen = set()
        for t in self.terms:
            if t.kind not in KINDS:
                raise SpecificationError(f"term {t}: kind must be one of {KINDS}")
            for ref in (t.target, t.source):
                if ref not in names:
                    raise SpecificationError(f"term {t} references undeclared unit {ref!r}")
            if t.target == t.source:
                raise SpecificationError(f"term {t}: target and source must differ")
            key = (t.target, t.source, t.kind)
            if key in seen:
                raise SpecificationError(f"duplicate term {t}")
            seen.add(key)
        if sorted(self.noise) != sorted(names) or len(self.noise) != len(names):
            raise SpecificationError("every unit must appear in noise exactly once")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise SpecificationError(f"dt must be positive, got {self.dt}")

    def _normalize_bounds(self, bounds):
        names = self.param_names
        if bounds is not None and not isinstance(bounds, Mapping):
            pairs = tuple(tuple(map(float, b)) for b in bounds)
            if len(pairs) != len(names):
                raise SpecificationError(f"expected {len(names)} bounds, got {len(pairs)}")
        else:
            given = dict(bounds or {})
            per_kind = {k: given.pop(k, v) for k, v in DEFAULT_BOUNDS.items()}
            unknown = set(given) - set(names)
            if unknown:
                raise SpecificationError(f"bounds for unknown parameters: {sorted(unknown)}")
            pairs = tuple(tuple(map(float, given.get(n, per_kind[n[0]]))) for n in names)
        for n, b in zip(names, pairs):
            if len(b) != 2 or not all(map(math.isfinite, b)) or not b[0] < b[1]:
                raise SpecificationError(f"bounds for {n} must be finite with lower < upper, got {b}")
        return pairs

    # --- structure -----------------------------------------------------

    @property
    def n_units(self) -> int:
        return len(self.units)

    @cached_property
    def unit_names(self) -> tuple:
        return tuple(u.name for u in self.units)

    @cached_property
    def index(self) -> dict:
        return {n: i for i, n in enumerate(self.unit_names)}

    @cached_property
    def param_names(self) -> tuple:
        return tuple(t.param_name for t in self.terms) + tuple(f"z.{u}" for u in self.noise)

    @property
    def n_params(self) -> int:
        return len(self.terms) + len(self.noise)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @cached_property
    def _layout(self):
        idx = self.index
        pt = [(k, idx[t.target], idx[t.source]) for k, t in enumerate(self.terms) if t.kind == POINT]
        ar = [(k, idx[t.target], idx[t.source]) for k, t in enumerate(self.terms) if t.kind == AREA]

        def cols(rows):
            a = np.array(rows, dtype=np.intp).reshape(-1, 3)
            return a[:, 0], a[:, 1], a[:, 2]

        nt = len(self.terms)
        # z parameter for unit i lives at vector position noise_pos[i]
        noise_pos = np.array([nt + self.noise.index(n) for n in self.unit_names], dtype=np.intp)
        return cols(pt), cols(ar), noise_pos

    def has_term(self, target: str, source: str, kind: str | None = None) -> bool:
        return any(t.target == target and t.source == source and (kind is None or t.kind == kind)
                   for t in self.terms)

    def with_bounds(self, overrides: Mapping) -> "ModelSpec":
        merged = dict(zip(self.param_names, self.bounds))
        for key, b in overrides.items():
            if key in DEFAULT_BOUNDS:
                for n in self.param_names:
                    if n[0] == key:
                        merged[n] = tuple(b)
            else:
                merged[key] = tuple(b)
        return ModelSpec(self.units, self.terms, self.noise, merged, self.dt, self.name)

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (self.units, self.terms, self.noise, self.bounds, self.dt) == \
            (other.units, other.terms, other.noise, other.bounds, other.dt)

    def __hash__(self):
        return hash((self.units, self.terms, self.noise, self.bounds, self.dt))

    # --- serialization -------------------------------------------------

    def to_json(self) -> dict:
        return {
            "units": [{"name": u.name, "side": u.side} for u in self.units],
            "terms": [{"target": t.target, "source": t.source, "kind": t.kind} for t in self.terms],
            "noise": list(self.noise),
            "bounds": {n: list(b) for n, b in zip(self.param_names, self.bounds)},
            "dt": self.dt,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ModelSpec":
        if "builtin" in doc:
            extra = set(doc) - {"builtin", "bounds", "dt"}
            if extra:
                raise SpecificationError(f"unknown model keys: {sorted(extra)}")
            spec = builtin(doc["builtin"])
            if "dt" in doc:
                spec = ModelSpec(spec.units, spec.terms, spec.noise, spec.bounds, doc["dt"], spec.name)
            return spec.with_bounds(doc.get("bounds", {}))
        allowed = {"units", "terms", "noise", "bounds", "dt", "name"}
        extra = set(doc) - allowed
        if extra:
            raise SpecificationError(f"unknown model keys: {sorted(extra)}")
        try:
            units = [Unit(u["name"], u["side"]) for u in doc["units"]]
            terms = [Term(t["target"], t["source"], t.get("kind", POINT)) for t in doc.get("terms", [])]
            noise = doc.get("noise", [u.name for u in units])
        except (KeyError, TypeError) as exc:
            raise SpecificationError(f"malformed model document: {exc!r}") from None
        return cls(units, terms, noise, doc.get("bounds"), doc.get("dt", 5.0), doc.get("name", "custom"))


def janus5(bounds: Mapping | None = None) -> ModelSpec:
    """Two Red and three Blue systems, cross-side point fire only, 5-minute epochs."""
    red = ("RT", "RBMP")
    blue = ("BT", "BAPC", "BTOW")
    units = [Unit(n, RED) for n in red] + [Unit(n, BLUE) for n in blue]
    terms = [Term(t, s, POINT) for t in red for s in blue]
    terms += [Term(t, s, POINT) for t in blue for s in red]
    return ModelSpec(units, terms, red + blue, bounds, dt=5.0, name="janus5")


BUILTINS = {"janus5": janus5}


def builtin(name: str) -> ModelSpec:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise SpecificationError(f"unknown builtin model {name!r}; known: {sorted(BUILTINS)}") from None


@dataclass(frozen=True)
class StateVector:
    t: float
    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.ndim != 1:
            raise SpecificationError("state counts must be a vector")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise SpecificationError(f"unit counts must be finite and >= 0, got {m}")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_mapping(cls, spec: ModelSpec, counts: Mapping[str, float], t: float = 0.0) -> "StateVector":
        missing = set(spec.unit_names) - set(counts)
        extra = set(counts) - set(spec.unit_names)
        if missing or extra:
            raise SpecificationError(f"state units mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        return cls(t, [counts[n] for n in spec.unit_names])


@dataclass(frozen=True)
class CoefficientSet:
    """Fit parameters: ``x[(target, source)]``, ``y[(target, source)]``, ``z[unit]``."""

    x: Mapping = field(default_factory=dict)
    y: Mapping = field(default_factory=dict)
    z: Mapping = field(default_factory=dict)

    def check(self, spec: ModelSpec) -> None:
        want_x = {(t.target, t.source) for t in spec.terms if t.kind == POINT}
        want_y = {(t.target, t.source) for t in spec.terms if t.kind == AREA}
        for label, have, want in (("x", set(self.x), want_x), ("y", set(self.y), want_y),
                                  ("z", set(self.z), set(spec.noise))):
            if have != want:
                raise SpecificationError(
                    f"{label} coefficients do not match the model: missing {sorted(want - have)}, "
                    f"extra {sorted(have - want)}")

    def vector(self, spec: ModelSpec) -> np.ndarray:
        self.check(spec)
        vals = [(self.x if t.kind == POINT else self.y)[(t.target, t.source)] for t in spec.terms]
        vals += [self.z[u] for u in spec.noise]
        return np.array(vals, dtype=float)

    @classmethod
    def from_vector(cls, spec: ModelSpec, vec: Sequence[float]) -> "CoefficientSet":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.n_params,):
            raise SpecificationError(f"expected {spec.n_params} parameters, got shape {vec.shape}")
        x, y = {}, {}
        for t, v in zip(spec.terms, vec):
            (x if t.kind == POINT else y)[(t.target, t.source)] = float(v)
        z = {u: float(v) for u, v in zip(spec.noise, vec[len(spec.terms):])}
        return cls(x, y, z)

    def scaled_noise(self, factor: float) -> "CoefficientSet":
        return CoefficientSet(dict(self.x), dict(self.y), {k: v * factor for k, v in self.z.items()})

    def to_json(self) -> dict:
        def nest(d):
            out = {}
            for (t, s), v in d.items():
                out.setdefault(t, {})[s] = v
            return out
        return {"x": nest(self.x), "y": nest(self.y), "z": dict(self.z)}

    @classmethod
    def from_json(cls, doc: Mapping) -> "CoefficientSet":
        extra = set(doc) - {"x", "y", "z"}
        if extra:
            raise SpecificationError(f"unknown coefficient keys: {sorted(extra)}")

        def flat(d):
            return {(t, s): float(v) for t, row in d.items() for s, v in row.items()}
        try:
            return cls(flat(doc.get("x", {})), flat(doc.get("y", {})),
                       {k: float(v) for k, v in doc.get("z", {}).items()})
        except (AttributeError, TypeError, ValueError) as exc:
            raise SpecificationError(f"malformed coefficient document: {exc!r}") from None


def table1_coefficients() -> CoefficientSet:
    """The published janus5 fit. Noise magnitudes only; the variance sees z**2."""
    x = {
        ("RT", "BT"): -8.6e-5, ("RT", "BAPC"): -5.9e-3, ("RT", "BTOW"): -3.6e-2,
        ("RBMP", "BT"): -2.7e-3, ("RBMP", "BAPC"): -2.2e-2, ("RBMP", "BTOW"): -3.1e-2,
        ("BT", "RT"): -6.7e-4, ("BT", "RBMP"): -4.7e-3,
        ("BAPC", "RT"): -1.0e-4, ("BAPC", "RBMP"): -4.0e-3,
        ("BTOW", "RT"): -2.1e-3, ("BTOW", "RBMP"): -1.2e-6,
    }
    z = {"RT": 3.7e-3, "RBMP": 4.3e-3, "BT": 7.9e-3, "BAPC": 6.7e-3, "BTOW": 1.3e-2}
    return CoefficientSet(x, {}, z)


# janus5 starting strengths, 30 minutes into the engagement
JANUS5_INITIAL = {"RT": 40.0, "RBMP": 85.0, "BT": 27.0, "BAPC": 31.0, "BTOW": 6.0}


# --- evaluation ----------------------------------------------------------

Theta = Union[CoefficientSet, np.ndarray, Sequence[float]]
State = Union[StateVector, np.ndarray, Sequence[float]]


def theta_vector(theta: Theta, spec: ModelSpec) -> np.ndarray:
    if isinstance(theta, CoefficientSet):
        return theta.vector(spec)
    vec = np.asarray(theta, dtype=float)
    if vec.shape != (spec.n_params,):
        raise SpecificationError(f"expected {spec.n_params} parameters, got shape {vec.shape}")
    return vec


def counts(state: State, spec: ModelSpec) -> np.ndarray:
    m = state.m if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    if m.shape[-1:] != (spec.n_units,):
        raise SpecificationError(f"state has shape {m.shape}, model has {spec.n_units} units")
    return m


def coupling_matrices(vec: np.ndarray, spec: ModelSpec):
    """Dense (target, source) matrices of point and area coefficients."""
    (pk, pt, ps), (ak, at, as_), _ = spec._layout
    n = spec.n_units
    xm = np.zeros((n, n))
    ym = np.zeros((n, n))
    xm[pt, ps] = vec[pk]
    ym[at, as_] = vec[ak]
    return xm, ym


def noise_by_unit(vec: np.ndarray, spec: ModelSpec) -> np.ndarray:
    return vec[spec._layout[2]]


def drift_arrays(m: np.ndarray, vec: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Batched drift; ``m`` has shape (..., n_units)."""
    xm, ym = coupling_matrices(vec, spec)
    g = m @ xm.T
    if len(spec._layout[1][0]):
        g = g + (m @ ym.T) * m
    return g


def drift(state: State, theta: Theta, spec: ModelSpec) -> np.ndarray:
    """Per-minute deterministic rates g[G] at ``state``."""
    return drift_arrays(counts(state, spec), theta_vector(theta, spec), spec)


def diffusion(state: State, theta: Theta, spec: ModelSpec):
    """Return ``(ghat, cov)``: noise amplitudes z*m and the diagonal covariance."""
    m = counts(state, spec)
    ghat = noise_by_unit(theta_vector(theta, spec), spec) * m
    return ghat, np.diag(ghat * ghat)


def drift_jacobian(state: State, theta: Theta, spec: ModelSpec) -> np.ndarray:
    m = counts(state, spec)
    xm, ym = coupling_matrices(theta_vector(theta, spec), spec)
    return xm + ym * m[:, None] + np.diag(ym @ m)


def log_transform(state: State) -> np.ndarray:
    m = state.m if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    if np.any(~(m > 0)):
        raise DomainError(f"log transform needs strictly positive counts, got {m}")
    return np.log(m)


def exp_transform(x: Iterable[float]) -> np.ndarray:
    return np.exp(np.asarray(x, dtype=float))
