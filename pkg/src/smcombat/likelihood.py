"""Short-time transition density, prepoint Lagrangian and the dynamic cost function.

For one epoch the increment dM = M(t+dt) - M(t) is Gaussian with mean g*dt and
covariance Cov*dt, both evaluated at the prepoint M(t).  With residual
delta = dM/dt - g the Lagrangian is L = delta' Cov^-1 delta / 2 and the cost

    C = L*dt + (N/2) ln(2 pi dt) + (1/2) ln det Cov

is exactly -ln of that density.  Fitting minimizes the sum of C over every
transition in an ensemble.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, DomainError, SpecificationError, UsageError
from .model import ModelSpec, StateVector, Theta, counts, drift_arrays, noise_by_unit, theta_vector
from .trajectory import EnsembleLike, stack_transitions

COUNT_FLOOR = 1e-6
COORDINATES = ("M", "logM")
# chunk boundaries at multiples of this keep vectorized math bit-identical across thread counts
_CHUNK_ALIGN = 64


@dataclass(frozen=True)
class EpochTransition:
    m_from: np.ndarray
    m_to: np.ndarray
    dt: float
    t: float = 0.0

    def __post_init__(self):
        a = self.m_from.m if isinstance(self.m_from, StateVector) else self.m_from
        b = self.m_to.m if isinstance(self.m_to, StateVector) else self.m_to
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise SpecificationError(f"transition endpoints have shapes {a.shape} and {b.shape}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise UsageError(f"transition dt must be positive, got {self.dt}")
        object.__setattr__(self, "m_from", a)
        object.__setattr__(self, "m_to", b)
        if isinstance(self.m_from, StateVector) and self.t == 0.0:
            object.__setattr__(self, "t", self.m_from.t)
        if not np.all(np.isfinite(self.rate)):
            raise UsageError("transition implies a non-finite rate")

    @property
    def rate(self) -> np.ndarray:
        return (self.m_to - self.m_from) / self.dt


@dataclass(frozen=True)
class LagrangianReport:
    L: float
    sigma: float
    momenta_residual: np.ndarray
    n_active: int


def prepoint_variance(m_from: np.ndarray, vec: np.ndarray, spec: ModelSpec,
                      count_floor: float = COUNT_FLOOR) -> np.ndarray:
    """Diagonal covariance entries (z m)^2 at the clamped prepoint; shape like ``m_from``."""
    z = noise_by_unit(vec, spec)
    m = np.maximum(m_from, count_floor) if count_floor > 0 else m_from
    var = (z * m) ** 2
    if not np.all(var > 0):
        bad = np.nonzero(~(var > 0))
        unit = spec.unit_names[bad[-1][0]]
        raise DegenerateMetricError(unit)
    return var


def _residual_and_var(m_from, m_to, dt, vec, spec, count_floor, coordinates):
    if coordinates == "M":
        rate = (m_to - m_from) / dt
        g = drift_arrays(m_from, vec, spec)
        var = prepoint_variance(m_from, vec, spec, count_floor)
    elif coordinates == "logM":
        if np.any(~(m_from > 0)) or np.any(~(m_to > 0)):
            raise DomainError("log coordinates need strictly positive counts")
        rate = (np.log(m_to) - np.log(m_from)) / dt
        z = noise_by_unit(vec, spec)
        # Ito: d ln M = dM/M - z^2/2 dt
        g = drift_arrays(m_from, vec, spec) / m_from - 0.5 * z * z
        var = np.broadcast_to(z * z, rate.shape)
        if not np.all(var > 0):
            raise DegenerateMetricError(spec.unit_names[int(np.argmin(z * z))])
    else:
        raise UsageError(f"coordinates must be one of {COORDINATES}, got {coordinates!r}")
    return rate - g, var


def lagrangian(tr: EpochTransition, theta: Theta, spec: ModelSpec,
               count_floor: float = COUNT_FLOOR, coordinates: str = "M") -> LagrangianReport:
    vec = theta_vector(theta, spec)
    counts(tr.m_from, spec)
    delta, var = _residual_and_var(tr.m_from, tr.m_to, tr.dt, vec, spec, count_floor, coordinates)
    L = 0.5 * float(np.sum(delta * delta / var))
    sigma = float(np.prod(var))
    return LagrangianReport(L, sigma, delta, int(np.count_nonzero(var)))


def _costs(delta, var, dt):
    n = delta.shape[-1]
    L = 0.5 * np.sum(delta * delta / var, axis=-1)
    return L * dt + 0.5 * n * math.log(2 * math.pi * dt) + 0.5 * np.sum(np.log(var), axis=-1)


def epoch_cost(tr: EpochTransition, theta: Theta, spec: ModelSpec,
               count_floor: float = COUNT_FLOOR, coordinates: str = "M") -> float:
    vec = theta_vector(theta, spec)
    counts(tr.m_from, spec)
    delta, var = _residual_and_var(tr.m_from, tr.m_to, tr.dt, vec, spec, count_floor, coordinates)
    return float(_costs(delta, var, tr.dt))


def pairwise_sum(values: np.ndarray) -> float:
    """Sum by a fixed binary tree over the index (zero-padded to a power of two)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    size = 1 << (v.size - 1).bit_length()
    if size != v.size:
        v = np.concatenate([v, np.zeros(size - v.size)])
    while v.size > 1:
        v = v[0::2] + v[1::2]
    return float(v[0])


class TransitionCost:
    """Total cost over a fixed ensemble, as a function of the parameter vector.

    Transitions are stacked once up front so each evaluation is a handful of
    vectorized operations.  ``threads > 1`` splits the per-transition work;
    the reduction order is fixed so the result does not depend on it.
    """

    def __init__(self, ensemble: EnsembleLike, spec: ModelSpec, coordinates: str = "M",
                 count_floor: float = COUNT_FLOOR, threads: int = 1):
        if coordinates not in COORDINATES:
            raise UsageError(f"coordinates must be one of {COORDINATES}, got {coordinates!r}")
        self.spec = spec
        self.coordinates = coordinates
        self.count_floor = count_floor
        self.m_from, self.m_to, self.t_from = stack_transitions(ensemble, spec)
        self.n_transitions = len(self.m_from)
        self.clamp_events = int(np.count_nonzero(self.m_from <= count_floor)) if coordinates == "M" else 0
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        if self._pool is not None:
            per = -(-self.n_transitions // self.threads)
            per = -(-per // _CHUNK_ALIGN) * _CHUNK_ALIGN
            self._chunks = [slice(i, i + per) for i in range(0, self.n_transitions, per)]

    def _block(self, vec, sl):
        delta, var = _residual_and_var(self.m_from[sl], self.m_to[sl], self.spec.dt, vec, self.spec,
                                       self.count_floor, self.coordinates)
        return _costs(delta, var, self.spec.dt)

    def per_transition(self, theta: Theta) -> np.ndarray:
        vec = theta_vector(theta, self.spec)
        if self._pool is None:
            return self._block(vec, slice(None))
        parts = list(self._pool.map(lambda sl: self._block(vec, sl), self._chunks))
        return np.concatenate(parts)

    def __call__(self, theta: Theta) -> float:
        return pairwise_sum(self.per_transition(theta))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def total_cost(ensemble: EnsembleLike, theta: Theta, spec: ModelSpec, count_floor: float = COUNT_FLOOR,
               coordinates: str = "M", threads: int = 1) -> float:
    with TransitionCost(ensemble, spec, coordinates, count_floor, threads) as cost:
        return cost(theta)
