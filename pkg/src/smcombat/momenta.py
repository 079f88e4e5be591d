"""Canonical momenta indicators (CMI) and the companion mechanical quantities.

Everything is evaluated on the prepoint Lagrangian used for fitting, with
Mdot = (M(t+dt) - M(t))/dt held as the velocity:

    momentum  Pi = dL/dMdot = Cov^-1 (Mdot - g)
    mass      Cov^-1
    force     dL/dM at the prepoint
    energy    Pi' Cov Pi / 2  (identically L)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, UsageError
from .likelihood import COUNT_FLOOR, EpochTransition, prepoint_variance
from .model import ModelSpec, State, Theta, counts, coupling_matrices, drift_arrays, theta_vector
from .trajectory import EnsembleLike, check_uniform_dt


@dataclass(frozen=True, eq=False)
class CmiSeries:
    """Per-epoch quantities for one run (``label = "run_<k>"``) or the run average (``"mean"``).

    Arrays are indexed by epoch (the transition starting at ``t[k]``);
    ``el_residual`` covers interior epochs only, so it has one row fewer.
    """

    label: str
    t: np.ndarray
    pi: np.ndarray
    energy: np.ndarray
    mass: np.ndarray
    force: np.ndarray
    el_residual: np.ndarray

    @property
    def n_epochs(self) -> int:
        return len(self.t)


def _prepoint(m_from, m_to, dt, vec, spec, count_floor):
    delta = (m_to - m_from) / dt - drift_arrays(m_from, vec, spec)
    var = prepoint_variance(m_from, vec, spec, count_floor)
    return delta, var


def momenta(tr: EpochTransition, theta: Theta, spec: ModelSpec, count_floor: float = COUNT_FLOOR) -> np.ndarray:
    vec = theta_vector(theta, spec)
    counts(tr.m_from, spec)
    delta, var = _prepoint(tr.m_from, tr.m_to, tr.dt, vec, spec, count_floor)
    return delta / var


def mass(state: State, theta: Theta, spec: ModelSpec, count_floor: float = COUNT_FLOOR) -> np.ndarray:
    var = prepoint_variance(counts(state, spec), theta_vector(theta, spec), spec, count_floor)
    return np.diag(1.0 / var)


def _force_arrays(m_from, delta, var, vec, spec, count_floor):
    """dL/dM for batched prepoints; ``m_from``, ``delta``, ``var`` are (..., N)."""
    xm, ym = coupling_matrices(vec, spec)
    w = delta / var
    # drift part: -sum_G w_G dg_G/dM_H
    if np.any(ym):
        jac = xm + ym * m_from[..., :, None] + np.einsum("gh,...h->...g", ym, m_from)[..., :, None] * np.eye(len(xm))
        f = -np.einsum("...g,...gh->...h", w, jac)
    else:
        f = -(w @ xm)
    # covariance part: d/dM of delta^2 / (2 z^2 M^2) is -delta^2 / (z^2 M^3), zero where the floor is active
    live = m_from > count_floor
    m_safe = np.where(live, m_from, 1.0)
    f = f - np.where(live, delta * delta / (var * m_safe), 0.0)
    return f


def force(tr: EpochTransition, theta: Theta, spec: ModelSpec, count_floor: float = COUNT_FLOOR) -> np.ndarray:
    vec = theta_vector(theta, spec)
    counts(tr.m_from, spec)
    delta, var = _prepoint(tr.m_from, tr.m_to, tr.dt, vec, spec, count_floor)
    return _force_arrays(tr.m_from, delta, var, vec, spec, count_floor)


def energy_density(tr: EpochTransition, theta: Theta, spec: ModelSpec, count_floor: float = COUNT_FLOOR) -> float:
    vec = theta_vector(theta, spec)
    pi = momenta(tr, vec, spec, count_floor)
    var = prepoint_variance(tr.m_from, vec, spec, count_floor)
    return 0.5 * float(np.sum(pi * var * pi))


def _el(force_k, pi, dt):
    return force_k[:-1] - (pi[1:] - pi[:-1]) / dt


def el_residual(transitions: Sequence[EpochTransition], theta: Theta, spec: ModelSpec,
                count_floor: float = COUNT_FLOOR) -> np.ndarray:
    """F - m a at each interior epoch, with a forward difference for dPi/dt."""
    transitions = list(transitions)
    if len(transitions) < 2:
        raise UsageError("el_residual needs at least 2 consecutive transitions")
    dts = {tr.dt for tr in transitions}
    if len(dts) != 1:
        raise FormatError("el_residual needs a uniform dt")
    vec = theta_vector(theta, spec)
    pi = np.array([momenta(tr, vec, spec, count_floor) for tr in transitions])
    f = np.array([force(tr, vec, spec, count_floor) for tr in transitions])
    return _el(f, pi, transitions[0].dt)


def run_cmi(t: np.ndarray, m: np.ndarray, vec: np.ndarray, spec: ModelSpec, label: str,
            count_floor: float = COUNT_FLOOR) -> CmiSeries:
    dt = spec.dt
    m_from, m_to = m[:-1], m[1:]
    delta, var = _prepoint(m_from, m_to, dt, vec, spec, count_floor)
    pi = delta / var
    f = _force_arrays(m_from, delta, var, vec, spec, count_floor)
    el = _el(f, pi, dt) if len(pi) >= 2 else np.empty((0, spec.n_units))
    return CmiSeries(label, np.asarray(t[:-1], dtype=float), pi, 0.5 * np.sum(pi * var * pi, axis=-1),
                     1.0 / var, f, el)


def ensemble_cmi(ensemble: EnsembleLike, theta: Theta, spec: ModelSpec,
                 count_floor: float = COUNT_FLOOR) -> list:
    """One :class:`CmiSeries` per run (ordered by run id) followed by the ``mean`` series."""
    runs = sorted(ensemble, key=lambda r: r.run_id)
    if not runs:
        raise UsageError("empty ensemble")
    lengths = {r.n_states for r in runs}
    if len(lengths) != 1:
        raise FormatError(f"ragged run lengths {sorted(lengths)}")
    for r in runs:
        check_uniform_dt(r, spec.dt)
    vec = theta_vector(theta, spec)
    series = [run_cmi(r.t, r.m, vec, spec, f"run_{r.run_id}", count_floor) for r in runs]
    fields = ("pi", "energy", "mass", "force", "el_residual")
    means = {f: np.mean([getattr(s, f) for s in series], axis=0) for f in fields}
    series.append(CmiSeries("mean", series[0].t, **means))
    return series

