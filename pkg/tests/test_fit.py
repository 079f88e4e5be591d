import numpy as np
import pytest
from numpy.testing import assert_allclose

from smcombat import asa
from smcombat.errors import DegenerateDataError
from smcombat.fit import BOUND_RTOL, _bounds_hit, fit_ensemble
from smcombat.likelihood import total_cost
from smcombat.model import janus5
from smcombat.simulator import SimConfig, ensemble
from smcombat.trajectory import Ensemble, Trajectory


def wls_oracle(ens, spec):
    """Closed-form maximum likelihood for point-fire models with diagonal z*M noise.

    Dividing each target's rate by its own count makes the residuals homoscedastic,
    so the drift coefficients are an ordinary least-squares fit and z**2 * dt is
    the mean squared residual.
    """
    m_from = np.concatenate([r.m[:-1] for r in ens])
    m_to = np.concatenate([r.m[1:] for r in ens])
    dt = spec.dt
    vec = np.zeros(spec.n_params)
    idx = spec.index
    for k, unit in enumerate(spec.unit_names):
        cols = [(p, idx[t.source]) for p, t in enumerate(spec.terms) if t.target == unit]
        b = (m_to[:, k] - m_from[:, k]) / dt / m_from[:, k]
        a = np.column_stack([m_from[:, j] / m_from[:, k] for _, j in cols])
        coef, *_ = np.linalg.lstsq(a, b, rcond=None)
        res = b - a @ coef
        for (p, _), c in zip(cols, coef):
            vec[p] = c
        vec[spec.param_names.index(f"z.{unit}")] = np.sqrt(np.mean(res ** 2) * dt)
    return vec


@pytest.mark.parametrize("seed", [0, 1])
def test_fit_matches_closed_form_optimum(seed):
    spec = janus5()
    ens = ensemble(SimConfig(n_runs=6, master_seed=seed))
    oracle = wls_oracle(ens, spec)
    assert np.all(oracle > spec.lower) and np.all(oracle < spec.upper)
    report = fit_ensemble(ens, spec, asa.AsaConfig(seed=0))
    oracle_cost = total_cost(ens, oracle, spec)
    assert report.cost <= oracle_cost + 1e-6 * abs(oracle_cost)
    assert_allclose(report.vector, oracle, rtol=1e-4, atol=1e-7)
    assert report.bounds_hit == {}


def test_bounds_hit_flags():
    spec = janus5()
    span = spec.upper - spec.lower
    vec = (spec.lower + spec.upper) / 2
    vec[0] = spec.lower[0]
    vec[1] = spec.upper[1] - 0.5 * BOUND_RTOL * span[1]
    vec[2] = spec.upper[2] - 2 * BOUND_RTOL * span[2]
    assert _bounds_hit(vec, spec) == {"x.RT.BT": "lower", "x.RT.BAPC": "upper"}


def test_fit_flags_agree_with_values():
    spec = janus5(bounds={"z": (1e-6, 1e-4)})
    ens = ensemble(SimConfig(n_runs=2, master_seed=4))
    report = fit_ensemble(ens, spec, asa.AsaConfig(seed=0, max_generated=3000), max_polish=5000)
    vec = report.vector
    assert np.all(vec >= spec.lower) and np.all(vec <= spec.upper)
    assert report.bounds_hit == _bounds_hit(vec, spec)
    assert report.bounds_hit


def test_fit_refuses_stuck_unit():
    spec = janus5()
    r = ensemble(SimConfig(n_runs=1, master_seed=2))[0]
    m = r.m.copy()
    m[:, 0] = m[0, 0]
    with pytest.raises(DegenerateDataError):
        fit_ensemble(Ensemble(spec.unit_names, [Trajectory(0, r.t, m)]), spec)
