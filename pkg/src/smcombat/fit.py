"""Maximum-likelihood fit of a CoefficientSet: ASA over the box, then a simplex polish."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as local_minimize

from . import asa
from .errors import DegenerateDataError, DegenerateMetricError, DomainError
from .likelihood import COUNT_FLOOR, TransitionCost
from .model import CoefficientSet, ModelSpec
from .trajectory import EnsembleLike

log = logging.getLogger(__name__)

# a local polish approaches a bound but rarely lands on it exactly
BOUND_RTOL = 1e-3


@dataclass
class FitReport:
    spec: ModelSpec
    theta: CoefficientSet
    cost: float
    generated: int
    accepted: int
    evaluations: int
    stopped_by: str
    bounds_hit: dict
    clamp_events: int
    n_transitions: int
    coordinates: str
    asa_cost: float
    polish_evaluations: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def vector(self) -> np.ndarray:
        return self.theta.vector(self.spec)


def check_informative(cost: TransitionCost) -> None:
    """Refuse data on which some unit never moves: its noise coefficient would run to the floor."""
    moved = np.any(cost.m_to != cost.m_from, axis=0)
    if not np.any(moved):
        raise DegenerateDataError("all trajectories are constant; nothing to fit")
    if not np.all(moved):
        stuck = [u for u, ok in zip(cost.spec.unit_names, moved) if not ok]
        raise DegenerateDataError(f"units {stuck} never change; their noise coefficients are unidentifiable")


def _bounds_hit(vec, spec):
    span = spec.upper - spec.lower
    hits = {}
    for name, v, lo, hi, s in zip(spec.param_names, vec, spec.lower, spec.upper, span):
        if v - lo <= BOUND_RTOL * s:
            hits[name] = "lower"
        elif hi - v <= BOUND_RTOL * s:
            hits[name] = "upper"
    return hits


def fit_ensemble(ensemble: EnsembleLike, spec: ModelSpec, config: asa.AsaConfig | None = None,
                 coordinates: str = "M", count_floor: float = COUNT_FLOOR, threads: int = 1,
                 polish: bool = True, max_polish: int = 100_000) -> FitReport:
    config = config or asa.AsaConfig()
    start = time.perf_counter()
    with TransitionCost(ensemble, spec, coordinates, count_floor, threads) as cost:
        check_informative(cost)

        def objective(vec):
            try:
                return cost(vec)
            except (DegenerateMetricError, DomainError):
                raise asa.Infeasible from None

        result = asa.minimize(objective, (spec.lower, spec.upper), config)
        log.info("asa: cost %.10g after %d generated (%s)", result.cost, result.generated, result.stopped_by)
        best, best_cost, polish_evals = result.x, result.cost, 0
        if polish:
            res = local_minimize(lambda v: asa.evaluate(objective, v), best, method="Nelder-Mead",
                                 bounds=list(zip(spec.lower, spec.upper)),
                                 options={"adaptive": True, "xatol": 1e-13, "fatol": 1e-12, "maxfev": max_polish})
            polish_evals = int(res.nfev)
            polished = np.clip(res.x, spec.lower, spec.upper)
            polished_cost = asa.evaluate(objective, polished)
            if polished_cost < best_cost:
                best, best_cost = polished, polished_cost
            log.info("polish: cost %.10g after %d evaluations", best_cost, polish_evals)
        clamp_events = cost.clamp_events
        n_transitions = cost.n_transitions
    return FitReport(
        spec=spec, theta=CoefficientSet.from_vector(spec, best), cost=best_cost,
        generated=result.generated, accepted=result.accepted, evaluations=result.evaluations + polish_evals,
        stopped_by=result.stopped_by, bounds_hit=_bounds_hit(best, spec), clamp_events=clamp_events,
        n_transitions=n_transitions, coordinates=coordinates, asa_cost=result.cost,
        polish_evaluations=polish_evals, wall_time=time.perf_counter() - start)
