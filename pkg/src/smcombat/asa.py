"""Adaptive simulated annealing (very fast reannealing) for bounded boxes.

Each parameter ``i`` has a generating temperature

    T_i(k_i) = T0_i * exp(-c_i * k_i ** (1/D))

and candidates are drawn from the heavy-tailed VFSR distribution scaled by
``T_i``.  Acceptance is Metropolis at a separately annealed temperature.
Every ``reanneal_every`` acceptances the per-parameter temperatures are
rescaled by cost sensitivities at the best point.

Only cost *differences* ever enter the schedule, so ``f`` and ``f + const``
take the same path.  To make that hold bit for bit despite rounding in
``f + const``, derived scales (initial and reannealed acceptance temperature,
sensitivity ratios) are rounded to powers of two, and cost differences below
``t0_accept * 2**-RESOLUTION_BITS`` count as ties.
The generator is numpy's PCG64 seeded with the 64-bit ``seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, UsageError

PENALTY = 1e30
# c = -ln(ratio_scale) * exp(-ln(anneal_scale) / D), the usual ASA parametrization
TEMPERATURE_RATIO_SCALE = math.exp(-40.0)
TEMPERATURE_ANNEAL_SCALE = 100.0
SENSITIVITY_FLOOR = 1e-12
MAX_REDRAWS = 1000
T0_PROBES = 10
# cost differences within t0_accept * 2**-RESOLUTION_BITS are treated as ties
RESOLUTION_BITS = 30


class Infeasible(Exception):
    """Raised by a cost function to reject a point; scored as :data:`PENALTY`."""


@dataclass(frozen=True)
class AsaConfig:
    t0_gen: float | Sequence[float] = 1.0
    t0_accept: float | None = None
    c: float | Sequence[float] | None = None
    reanneal_every: int = 100
    max_generated: int = 200_000
    cost_repeat_eps: float = 1e-8
    cost_repeat_count: int = 8
    seed: int = 0

    def annealing_scale(self, dim: int) -> np.ndarray:
        c = default_annealing_scale(dim) if self.c is None else self.c
        return np.broadcast_to(np.asarray(c, dtype=float), (dim,)).copy()

    def validate(self, dim: int) -> None:
        if dim < 1:
            raise UsageError("ASA needs at least one parameter")
        for name, value in (("t0_gen", self.t0_gen), ("c", self.annealing_scale(dim))):
            try:
                v = np.broadcast_to(np.asarray(value, dtype=float), (dim,))
            except ValueError:
                raise UsageError(f"{name} must be a scalar or have {dim} entries") from None
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise UsageError(f"{name} must be positive, got {value}")
        if self.t0_accept is not None and not (math.isfinite(self.t0_accept) and self.t0_accept > 0):
            raise UsageError(f"t0_accept must be positive, got {self.t0_accept}")
        if self.reanneal_every < 1 or self.max_generated < 1 or self.cost_repeat_count < 1:
            raise UsageError("reanneal_every, max_generated and cost_repeat_count must be >= 1")
        if not self.cost_repeat_eps > 0:
            raise UsageError("cost_repeat_eps must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")


@dataclass
class AsaState:
    lower: np.ndarray
    upper: np.ndarray
    t0_gen: np.ndarray
    c: np.ndarray
    t0_accept: float
    c_accept: float
    k_gen: np.ndarray
    k_accept: float
    current: np.ndarray
    current_cost: float
    best: np.ndarray
    best_cost: float
    rng: np.random.Generator
    resolution: float = 0.0
    generated: int = 0
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0
    trace: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def log_gen_temperatures(self) -> np.ndarray:
        return log_temperature(self.t0_gen, self.c, self.k_gen, self.dim)

    @property
    def gen_temperatures(self) -> np.ndarray:
        return np.exp(self.log_gen_temperatures)

    @property
    def log_accept_temperature(self) -> float:
        return float(log_temperature(self.t0_accept, self.c_accept, self.k_accept, self.dim))

    @property
    def accept_temperature(self) -> float:
        return math.exp(self.log_accept_temperature)


@dataclass
class AsaResult:
    x: np.ndarray
    cost: float
    trace: list
    generated: int
    accepted: int
    rejected: int
    evaluations: int
    stopped_by: str
    path: list = None


def default_annealing_scale(dim: int) -> float:
    return -math.log(TEMPERATURE_RATIO_SCALE) * math.exp(-math.log(TEMPERATURE_ANNEAL_SCALE) / dim)


def log_temperature(t0, c, k, dim):
    # kept in logs: with c ~ 20 the schedule leaves double range within a few dozen acceptances
    return np.log(t0) - c * np.power(k, 1.0 / dim)


def temperature(t0, c, k, dim):
    return np.exp(log_temperature(t0, c, k, dim))


def anneal_index(t0, c, log_temp, dim):
    """Inverse of :func:`log_temperature`: the k at which the schedule reaches ``exp(log_temp)``."""
    return np.power(np.maximum(np.log(t0) - log_temp, 0.0) / c, dim)


def pow2_round(v: float) -> float:
    """Nearest power of two (in log terms); makes derived scales immune to last-bit noise."""
    return math.ldexp(1.0, round(math.log2(v)))


def generate_step(u, temp=None, log_temp=None):
    """Map uniform ``u`` in [0, 1] to a VFSR step in [-1, 1] at temperature ``temp``.

    Evaluates sgn(u - 1/2) T ((1 + 1/T)^|2u - 1| - 1) in a form that stays
    finite for temperatures far below the double range.
    """
    u = np.asarray(u, dtype=float)
    lt = np.log(temp) if log_temp is None else np.asarray(log_temp, dtype=float)
    a = np.abs(2.0 * u - 1.0)
    lp = np.log1p(np.exp(lt))
    span = lp - lt  # ln(1 + 1/T)
    mag = np.exp((1.0 - a) * lt + a * lp) * -np.expm1(-a * span)
    return np.sign(u - 0.5) * mag


def step_cdf(y, temp):
    """Closed-form CDF of :func:`generate_step` for uniform ``u``."""
    y = np.asarray(y, dtype=float)
    return 0.5 + np.sign(y) * np.log1p(np.abs(y) / temp) / (2.0 * np.log1p(1.0 / temp))


def generate_candidate(state: AsaState, lower=None, upper=None) -> np.ndarray:
    lower = state.lower if lower is None else lower
    upper = state.upper if upper is None else upper
    span = upper - lower
    lt = state.log_gen_temperatures
    cand = state.current + generate_step(state.rng.random(state.dim), log_temp=lt) * span
    for i in np.nonzero((cand < lower) | (cand > upper))[0]:
        for _ in range(MAX_REDRAWS):
            v = state.current[i] + float(generate_step(state.rng.random(), log_temp=lt[i])) * span[i]
            if lower[i] <= v <= upper[i]:
                break
        cand[i] = min(max(v, lower[i]), upper[i])
    return cand


def accept(state: AsaState, candidate_cost: float) -> bool:
    """Metropolis test against the current point; always consumes one uniform draw."""
    u = state.rng.random()
    delta = candidate_cost - state.current_cost
    if delta <= state.resolution:
        return True
    return u < math.exp(-delta / state.accept_temperature) if state.log_accept_temperature > -700 else False


def evaluate(cost_fn, x) -> float:
    try:
        value = cost_fn(x)
    except Infeasible:
        return PENALTY
    if value is None or not math.isfinite(value):
        return PENALTY
    return float(value)


def sensitivities(state: AsaState, cost_fn: Callable) -> np.ndarray:
    """|dC/dx_i| at the best point by central differences (floored)."""
    s = np.full(state.dim, SENSITIVITY_FLOOR)
    h = 1e-6 * (state.upper - state.lower)
    for i in range(state.dim):
        lo = state.best.copy()
        hi = state.best.copy()
        hi[i] = min(hi[i] + h[i], state.upper[i])
        lo[i] = max(lo[i] - h[i], state.lower[i])
        try:
            f_hi, f_lo = cost_fn(hi), cost_fn(lo)
        except Exception:
            continue
        finally:
            state.evaluations += 2
        if f_hi is None or f_lo is None or not (math.isfinite(f_hi) and math.isfinite(f_lo)):
            continue
        # differences below the cost resolution are unresolved, not zero
        df = max(abs(f_hi - f_lo), state.resolution)
        s[i] = max(df / (hi[i] - lo[i]), SENSITIVITY_FLOOR)
    return s


def reanneal(state: AsaState, cost_fn: Callable, cost_scale: float | None = None) -> AsaState:
    """Rescale generating temperatures by relative insensitivity, then re-derive k.

    The factor max_j(s_j)/s_i is rounded to a power of two, which keeps the
    schedule immune to last-bit noise in the cost.  The acceptance schedule is
    restarted below ``cost_scale`` (a cost difference) when one is given.
    """
    if cost_scale is not None and math.isfinite(cost_scale) and cost_scale > 0:
        current = state.log_accept_temperature
        state.t0_accept = min(state.t0_accept, pow2_round(cost_scale))
        state.k_accept = float(anneal_index(state.t0_accept, state.c_accept,
                                            min(current, math.log(state.t0_accept)), state.dim))
    s = sensitivities(state, cost_fn)
    log_ratio = np.round(np.log2(s.max() / s)) * math.log(2.0)
    lt = np.minimum(state.log_gen_temperatures + log_ratio, np.log(state.t0_gen))
    state.k_gen = anneal_index(state.t0_gen, state.c, lt, state.dim)
    return state


def init_state(cost_fn: Callable, lower, upper, config: AsaConfig, x0=None) -> AsaState:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = len(lower)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise UsageError("bounds must be two vectors of equal length")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)) and np.all(lower < upper)):
        raise UsageError("bounds must be finite with lower < upper")
    config.validate(dim)
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    x = rng.uniform(lower, upper) if x0 is None else np.clip(np.asarray(x0, dtype=float), lower, upper)
    cost = evaluate(cost_fn, x)
    if cost >= PENALTY:
        raise UsageError("cost is not finite at the initial point; choose another start or bounds")
    t0_accept = config.t0_accept
    evaluations = 1
    if t0_accept is None:
        probes = [evaluate(cost_fn, rng.uniform(lower, upper)) for _ in range(T0_PROBES)]
        evaluations += T0_PROBES
        diffs = [abs(p - cost) for p in probes if p < PENALTY]
        t0_accept = float(np.mean(diffs)) if diffs and np.mean(diffs) > 0 else 1.0
    t0_accept = pow2_round(t0_accept)
    c = config.annealing_scale(dim)
    state = AsaState(
        lower=lower, upper=upper,
        t0_gen=np.broadcast_to(np.asarray(config.t0_gen, dtype=float), (dim,)).copy(),
        c=c, t0_accept=t0_accept, c_accept=float(np.mean(c)),
        k_gen=np.zeros(dim), k_accept=0.0,
        current=x.copy(), current_cost=cost, best=x.copy(), best_cost=cost,
        rng=rng, resolution=math.ldexp(t0_accept, -RESOLUTION_BITS), evaluations=evaluations,
    )
    state.trace.append((0, 0, cost))
    return state


def minimize(cost_fn: Callable[[np.ndarray], float], bounds, config: AsaConfig | None = None,
             x0=None, record_path: bool = False) -> AsaResult:
    """Minimize ``cost_fn`` over the box ``bounds`` = (lower, upper) or [(lo, hi), ...].

    Stops after ``max_generated`` candidates, or once the best cost has
    improved by less than ``cost_repeat_eps`` over each of ``cost_repeat_count``
    consecutive reannealing intervals.
    """
    config = config or AsaConfig()
    lower, upper = _split_bounds(bounds)
    state = init_state(cost_fn, lower, upper, config, x0)
    path = [] if record_path else None
    repeats = 0
    stopped_by = "budget"
    since_reanneal_lo = since_reanneal_hi = checkpoint_cost = state.current_cost
    while state.generated < config.max_generated:
        cand = generate_candidate(state)
        state.generated += 1
        cost = evaluate(cost_fn, cand)
        state.evaluations += 1
        ok = accept(state, cost)
        if path is not None:
            path.append((cand, ok))
        if not ok:
            state.rejected += 1
            continue
        state.accepted += 1
        state.k_accept += 1
        state.k_gen += 1
        state.current, state.current_cost = cand, cost
        since_reanneal_lo = min(since_reanneal_lo, cost)
        since_reanneal_hi = max(since_reanneal_hi, cost)
        if cost < state.best_cost - state.resolution:
            state.best, state.best_cost = cand.copy(), cost
            state.trace.append((state.generated, state.accepted, cost))
        if state.accepted % config.reanneal_every == 0:
            gain = checkpoint_cost - state.best_cost
            repeats = repeats + 1 if gain < max(config.cost_repeat_eps, state.resolution) else 0
            checkpoint_cost = state.best_cost
            if repeats >= config.cost_repeat_count:
                stopped_by = "cost_repeat"
                break
            scale = max(state.current_cost - state.best_cost, since_reanneal_hi - since_reanneal_lo)
            reanneal(state, cost_fn, scale)
            since_reanneal_lo = since_reanneal_hi = state.current_cost
    if state.trace[-1][0] != state.generated:
        state.trace.append((state.generated, state.accepted, state.best_cost))
    return AsaResult(state.best, state.best_cost, state.trace, state.generated, state.accepted,
                     state.rejected, state.evaluations, stopped_by, path)


def _split_bounds(bounds):
    if len(bounds) == 2 and np.ndim(bounds[0]) == 1 and np.ndim(bounds[1]) == 1:
        return np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float)
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise UsageError("bounds must be (lower, upper) vectors or a list of (lo, hi) pairs")
    return arr[:, 0], arr[:, 1]


# --- benchmark functions -------------------------------------------------

def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x) + 10.0))


def bowl(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - 0.3) ** 2))


BENCHMARKS = {
    "rastrigin": (rastrigin, (-5.12, 5.12)),
    "bowl": (bowl, (-1.0, 1.0)),
}
