import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from smcombat.errors import DegenerateMetricError, FormatError, UsageError
from smcombat.likelihood import (EpochTransition, TransitionCost, epoch_cost, lagrangian, pairwise_sum,
                                 prepoint_variance, total_cost)
from smcombat.model import BLUE, RED, ModelSpec, Term, Unit, drift, janus5, table1_coefficients
from smcombat.simulator import SimConfig, ensemble
from smcombat.trajectory import Ensemble, Trajectory


def toy_spec():
    # one unit with constant drift -1 is not expressible; use two units where B stays at 1
    # and drives A at x = -0.1, so g_A = -0.1 * 10 = -1 when B = 10
    return ModelSpec([Unit("A", RED), Unit("B", BLUE)], [Term("A", "B", "Point")], ["A", "B"], dt=1.0)


def gaussian_nll(dm, mean, var):
    """-ln N(dm; mean, diag(var)) by explicit diagonal inversion."""
    n = len(dm)
    inv = np.diag(1.0 / var)
    r = dm - mean
    return 0.5 * r @ inv @ r + 0.5 * n * math.log(2 * math.pi) + 0.5 * math.log(np.prod(var))


def random_transition(rng, spec):
    # m_to drawn from the model itself, so costs stay O(10) as on real data
    m_from = rng.uniform(1, 100, spec.n_units)
    vec = rng.uniform(spec.lower, spec.upper)
    vec[len(spec.terms):] = rng.uniform(1e-3, 0.1, spec.n_units)
    z = vec[len(spec.terms):]
    m_to = m_from + drift(m_from, vec, spec) * spec.dt + z * m_from * math.sqrt(spec.dt) * rng.normal(size=spec.n_units)
    return EpochTransition(m_from, m_to, spec.dt), vec


def test_drift_matched_zero_lagrangian():
    spec = janus5()
    th = table1_coefficients()
    m = np.array([40.0, 85, 27, 31, 6])
    tr = EpochTransition(m, m + drift(m, th, spec) * spec.dt, spec.dt)
    rep = lagrangian(tr, th, spec)
    assert rep.L == pytest.approx(0.0, abs=1e-24)


def test_one_unit_toy():
    spec = toy_spec()
    vec = np.array([-0.1, 0.1, 0.1])
    tr = EpochTransition([10.0, 10.0], [8.0, 10.0], 1.0)  # rate -2 vs drift -1
    rep = lagrangian(tr, vec, spec)
    assert_allclose(rep.momenta_residual[0], -1.0, rtol=1e-14)
    assert_allclose(rep.L, 0.5, rtol=1e-14)


def test_epoch_cost_normalization_constant():
    # L = 0, N = 1, dt = 5, variance 1: C = 0.5 ln(10 pi)
    spec = ModelSpec([Unit("A", RED)], [], ["A"], dt=5.0)
    tr = EpochTransition([1.0], [1.0], 5.0)
    c = epoch_cost(tr, [1.0], spec)
    assert_allclose(c, 0.5 * math.log(10 * math.pi), rtol=1e-14)
    assert_allclose(c, 1.72365749, rtol=1e-8)


def test_epoch_cost_monotone_in_residual():
    spec = janus5()
    th = table1_coefficients()
    m = np.array([40.0, 85, 27, 31, 6])
    base = m + drift(m, th, spec) * spec.dt
    costs = [epoch_cost(EpochTransition(m, base + s * np.array([1, -1, 0.5, 0, 0.2]), 5.0), th, spec)
             for s in np.linspace(0, 2, 9)]
    assert np.all(np.diff(costs) > 0)


def test_epoch_cost_matches_gaussian_oracle():
    spec = janus5()
    rng = np.random.default_rng(5)
    for _ in range(100):
        tr, vec = random_transition(rng, spec)
        z = vec[12:]
        var = (z * tr.m_from) ** 2 * spec.dt
        mean = drift(tr.m_from, vec, spec) * spec.dt
        assert_allclose(epoch_cost(tr, vec, spec), gaussian_nll(tr.m_to - tr.m_from, mean, var), rtol=0, atol=1e-10)


def test_lagrangian_matches_explicit_quadratic_form():
    spec = janus5()
    rng = np.random.default_rng(6)
    for _ in range(50):
        tr, vec = random_transition(rng, spec)
        g = drift(tr.m_from, vec, spec)
        d = tr.rate - g
        cov = np.diag((vec[12:] * tr.m_from) ** 2)
        rep = lagrangian(tr, vec, spec)
        assert_allclose(rep.L, 0.5 * d @ np.linalg.inv(cov) @ d, rtol=1e-12)
        assert_allclose(rep.sigma, np.prod(np.diag(cov)), rtol=1e-12)
        assert rep.L >= 0


def test_log_coordinates_cost_matches_lognormal_oracle():
    spec = janus5()
    rng = np.random.default_rng(7)
    for _ in range(20):
        tr, vec = random_transition(rng, spec)
        tr = EpochTransition(tr.m_from, np.abs(tr.m_to) + 1e-3, spec.dt)
        z = vec[12:]
        g = drift(tr.m_from, vec, spec)
        mean = (g / tr.m_from - 0.5 * z * z) * spec.dt
        dx = np.log(tr.m_to) - np.log(tr.m_from)
        oracle = gaussian_nll(dx, mean, z * z * spec.dt)
        assert_allclose(epoch_cost(tr, vec, spec, coordinates="logM"), oracle, rtol=0, atol=1e-10)


def test_degenerate_metric_names_unit():
    spec = janus5()
    vec = table1_coefficients().vector(spec)
    vec[12 + 2] = 0.0
    tr = EpochTransition(np.full(5, 10.0), np.full(5, 9.0), 5.0)
    with pytest.raises(DegenerateMetricError) as info:
        lagrangian(tr, vec, spec)
    assert info.value.unit == "BT"


def test_count_floor_keeps_cost_finite():
    spec = janus5()
    th = table1_coefficients()
    m = np.array([0.0, 10, 10, 10, 10])
    tr = EpochTransition(m, m, 5.0)
    assert math.isfinite(epoch_cost(tr, th, spec))
    var = prepoint_variance(m, th.vector(spec), spec, 1e-6)
    assert_allclose(var[0], (3.7e-3 * 1e-6) ** 2)


def make_ensemble(n_runs=6, seed=1):
    return ensemble(SimConfig(n_runs=n_runs, master_seed=seed))


def test_total_cost_regime_and_additivity():
    spec = janus5()
    th = table1_coefficients()
    ens = make_ensemble()
    with TransitionCost(ens, spec) as cost:
        assert cost.n_transitions == 60
        per = cost.per_transition(th)
    direct = [epoch_cost(EpochTransition(r.m[k], r.m[k + 1], 5.0), th, spec) for r in ens for k in range(10)]
    assert_allclose(per, direct, rtol=1e-13)
    total = total_cost(ens, th, spec)
    assert_allclose(total, sum(direct), rtol=1e-12)
    doubled = Ensemble(ens.units, list(ens.runs) + list(ens.runs))
    assert_allclose(total_cost(doubled, th, spec), 2 * total, rtol=1e-13)


def test_total_cost_single_transition():
    spec = janus5()
    th = table1_coefficients()
    r = make_ensemble(1)[0]
    one = Trajectory(0, r.t[:2], r.m[:2])
    assert total_cost([one], th, spec) == epoch_cost(EpochTransition(r.m[0], r.m[1], 5.0), th, spec)


def test_total_cost_permutation_invariant():
    spec = janus5()
    th = table1_coefficients()
    ens = make_ensemble()
    rev = Ensemble(ens.units, ens.runs[::-1])
    assert_allclose(total_cost(rev, th, spec), total_cost(ens, th, spec), rtol=1e-13)


def test_total_cost_thread_count_bit_identical():
    spec = janus5()
    th = table1_coefficients()
    ens = make_ensemble(64)
    one = total_cost(ens, th, spec, threads=1)
    for n in (2, 3, 4):
        assert total_cost(ens, th, spec, threads=n) == one


def test_total_cost_errors():
    spec = janus5()
    th = table1_coefficients()
    with pytest.raises(UsageError):
        total_cost([], th, spec)
    bad = Trajectory(0, [0.0, 5.0, 11.0], np.ones((3, 5)))
    with pytest.raises(FormatError):
        total_cost([bad], th, spec)
    with pytest.raises(UsageError):
        total_cost(make_ensemble(1), th, spec, coordinates="lnM")


def test_pairwise_sum():
    assert pairwise_sum([]) == 0.0
    assert pairwise_sum([1.5]) == 1.5
    v = np.random.default_rng(0).normal(size=1001)
    assert_allclose(pairwise_sum(v), math.fsum(v), rtol=1e-12)
