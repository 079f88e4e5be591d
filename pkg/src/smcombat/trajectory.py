"""Uniformly sampled unit-count time series and their epoch transitions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import FormatError, SpecificationError, UsageError
from .model import ModelSpec

DT_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One run: ``t`` has shape (n_states,), ``m`` has shape (n_states, n_units)."""

    run_id: int
    t: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        m = np.array(self.m, dtype=float)
        if t.ndim != 1 or m.ndim != 2 or m.shape[0] != t.shape[0]:
            raise FormatError(f"run {self.run_id}: t shape {t.shape} does not match counts shape {m.shape}")
        t.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "m", m)

    @property
    def n_states(self) -> int:
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.run_id == other.run_id and np.array_equal(self.t, other.t)
                and np.array_equal(self.m, other.m))


@dataclass(eq=False)
class Ensemble:
    units: tuple
    runs: list

    def __post_init__(self):
        self.units = tuple(self.units)
        self.runs = list(self.runs)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.runs)

    def __len__(self) -> int:
        return len(self.runs)

    def __getitem__(self, i) -> Trajectory:
        return self.runs[i]

    def __eq__(self, other):
        if not isinstance(other, Ensemble):
            return NotImplemented
        return self.units == other.units and self.runs == other.runs

    def mean_counts(self) -> np.ndarray:
        lengths = {r.n_states for r in self.runs}
        if len(lengths) != 1:
            raise FormatError(f"ragged run lengths {sorted(lengths)}")
        return np.mean([r.m for r in self.runs], axis=0)


EnsembleLike = Union[Ensemble, Sequence[Trajectory]]


def check_uniform_dt(traj: Trajectory, dt: float | None = None) -> float:
    if traj.n_states < 2:
        raise FormatError(f"run {traj.run_id} has fewer than 2 states")
    steps = np.diff(traj.t)
    step = steps[0] if dt is None else dt
    if not step > 0 or np.any(np.abs(steps - step) > DT_RTOL * abs(step)):
        want = "" if dt is None else f" (expected dt = {dt})"
        raise FormatError(f"run {traj.run_id} has non-uniform time steps{want}")
    return float(step)


def stack_transitions(ensemble: EnsembleLike, spec: ModelSpec):
    """Concatenate every consecutive-state pair in canonical (run order, time) order.

    Returns ``(m_from, m_to, t_from)`` arrays; dt is ``spec.dt`` for every pair.
    """
    runs = list(ensemble)
    if not runs:
        raise UsageError("empty ensemble")
    froms, tos, ts = [], [], []
    for r in runs:
        if r.m.shape[1] != spec.n_units:
            raise SpecificationError(f"run {r.run_id} has {r.m.shape[1]} units, model has {spec.n_units}")
        check_uniform_dt(r, spec.dt)
        froms.append(r.m[:-1])
        tos.append(r.m[1:])
        ts.append(r.t[:-1])
    return np.concatenate(froms), np.concatenate(tos), np.concatenate(ts)
