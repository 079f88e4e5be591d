"""Seeded Euler-Maruyama ensembles of the attrition equations.

Run ``r`` draws from its own PCG64 stream seeded with ``mix_seed(master_seed, r)``
(a SplitMix64 finalizer applied to ``master_seed + (r + 1) * golden``), so a
run is reproducible on its own and independent of how many siblings it has.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .model import (JANUS5_INITIAL, CoefficientSet, ModelSpec, StateVector, Theta, counts, drift_arrays,
                    janus5, noise_by_unit, table1_coefficients, theta_vector)
from .trajectory import Ensemble, Trajectory

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15
STEPPING = ("M", "logM")


def mix_seed(master_seed: int, run_index: int) -> int:
    z = (int(master_seed) + (int(run_index) + 1) * GOLDEN64) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def run_rng(master_seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix_seed(master_seed, run_index)))


@dataclass(frozen=True)
class SimConfig:
    spec: ModelSpec = field(default_factory=janus5)
    theta: CoefficientSet = field(default_factory=table1_coefficients)
    initial: StateVector = None
    n_runs: int = 6
    n_epochs: int = 10
    substeps_per_epoch: int = 10
    master_seed: int = 1
    count_floor: float = 0.0
    stepping: str = "M"

    def __post_init__(self):
        if self.initial is None:
            object.__setattr__(self, "initial", StateVector.from_mapping(self.spec, JANUS5_INITIAL))
        counts(self.initial, self.spec)
        theta_vector(self.theta, self.spec)
        if self.n_runs < 1 or self.n_epochs < 1 or self.substeps_per_epoch < 1:
            raise UsageError("n_runs, n_epochs and substeps_per_epoch must all be >= 1")
        if not (0 <= self.master_seed <= MASK64):
            raise UsageError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if self.count_floor < 0:
            raise UsageError("count_floor must be >= 0")
        if self.stepping not in STEPPING:
            raise UsageError(f"stepping must be one of {STEPPING}, got {self.stepping!r}")
        if self.stepping == "logM" and np.any(self.initial.m <= 0):
            raise UsageError("log-space stepping needs strictly positive initial counts")


def step(state: StateVector, theta: Theta, spec: ModelSpec, h: float, noise_draws,
         count_floor: float = 0.0) -> StateVector:
    """One prepoint (Ito) step of length ``h`` minutes in M-space."""
    if not h > 0:
        raise UsageError(f"step length must be positive, got {h}")
    xi = np.asarray(noise_draws, dtype=float)
    m = counts(state, spec)
    if xi.shape != m.shape:
        raise UsageError(f"noise draws have shape {xi.shape}, expected {m.shape}")
    if not np.all(np.isfinite(xi)):
        raise UsageError("non-finite noise draw")
    vec = theta_vector(theta, spec)
    t = state.t if isinstance(state, StateVector) else 0.0
    return StateVector(t + h, _advance(m, vec, spec, h, xi, count_floor))


def _advance(m, vec, spec, h, xi, count_floor):
    z = noise_by_unit(vec, spec)
    return np.maximum(count_floor, m + drift_arrays(m, vec, spec) * h + z * m * math.sqrt(h) * xi)


def _advance_log(m, vec, spec, h, xi, count_floor):
    # exact log-normal noise: X = ln M gets constant diffusion z
    z = noise_by_unit(vec, spec)
    live = m > 0
    ms = np.where(live, m, 1.0)
    dx = (drift_arrays(m, vec, spec) / ms - 0.5 * z * z) * h + z * math.sqrt(h) * xi
    return np.maximum(count_floor, np.where(live, ms * np.exp(dx), 0.0))


def run(config: SimConfig, run_index: int) -> Trajectory:
    spec = config.spec
    vec = theta_vector(config.theta, spec)
    rng = run_rng(config.master_seed, run_index)
    h = spec.dt / config.substeps_per_epoch
    advance = _advance if config.stepping == "M" else _advance_log
    m = np.maximum(config.initial.m.astype(float), config.count_floor)
    states = [m]
    for _ in range(config.n_epochs):
        for _ in range(config.substeps_per_epoch):
            m = advance(m, vec, spec, h, rng.standard_normal(spec.n_units), config.count_floor)
        states.append(m)
    t = config.initial.t + spec.dt * np.arange(config.n_epochs + 1)
    return Trajectory(run_index, t, np.array(states))


def ensemble(config: SimConfig, threads: int = 1) -> Ensemble:
    indices = range(config.n_runs)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(lambda r: run(config, r), indices))
    else:
        runs = [run(config, r) for r in indices]
    return Ensemble(config.spec.unit_names, runs)
