import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from smcombat.errors import DomainError, SpecificationError
from smcombat.model import (AREA, BLUE, POINT, RED, CoefficientSet, ModelSpec, StateVector, Term, Unit,
                            builtin, diffusion, drift, drift_jacobian, exp_transform, janus5,
                            log_transform, table1_coefficients)

M_EXAMPLE = {"RT": 10, "RBMP": 20, "BT": 30, "BAPC": 15, "BTOW": 5}


def example_state(spec):
    return StateVector.from_mapping(spec, M_EXAMPLE)


def random_theta(rng, spec):
    vec = rng.uniform(spec.lower, spec.upper)
    return vec


def test_janus5_structure():
    spec = janus5()
    assert spec.unit_names == ("RT", "RBMP", "BT", "BAPC", "BTOW")
    assert len(spec.terms) == 12
    assert spec.n_params == 17
    assert all(t.kind == POINT for t in spec.terms)
    # cross-side only: no fratricide terms
    side = {u.name: u.side for u in spec.units}
    assert all(side[t.target] != side[t.source] for t in spec.terms)


def test_dash_mask_by_enumeration():
    spec = janus5()
    red, blue = ("RT", "RBMP"), ("BT", "BAPC", "BTOW")
    for target in spec.unit_names:
        for source in spec.unit_names:
            expected = (target in red) != (source in red)
            assert spec.has_term(target, source) == expected
    # perturbing every coefficient at a dash position is impossible: no parameter exists there
    for t in spec.terms:
        assert (t.target in blue) == (t.source in red)


def test_drift_table1_examples():
    spec = janus5()
    g = drift(example_state(spec), table1_coefficients(), spec)
    assert_allclose(g[spec.index["BT"]], -0.1007, rtol=1e-12)
    assert_allclose(g[spec.index["RT"]], -0.27108, rtol=1e-12)


def test_drift_zero_state():
    spec = janus5()
    assert_array_equal(drift(np.zeros(5), table1_coefficients(), spec), np.zeros(5))
    _, cov = diffusion(np.zeros(5), table1_coefficients(), spec)
    assert_array_equal(cov, np.zeros((5, 5)))


def test_diffusion_examples():
    spec = janus5()
    ghat, cov = diffusion(example_state(spec), table1_coefficients(), spec)
    i = spec.index["BTOW"]
    assert_allclose(abs(ghat[i]), 0.065, rtol=1e-12)
    assert_allclose(cov[i, i], 4.225e-3, rtol=1e-12)
    # a negative z gives the signed amplitude but the same covariance
    th = table1_coefficients()
    neg = CoefficientSet(th.x, th.y, {**th.z, "BTOW": -1.3e-2})
    ghat_neg, cov_neg = diffusion(example_state(spec), neg, spec)
    assert_allclose(ghat_neg[i], -0.065, rtol=1e-12)
    assert_allclose(cov_neg, cov, rtol=0, atol=0)

    m = np.ones(5)
    _, cov1 = diffusion(m, table1_coefficients(), spec)
    assert_allclose(cov1[0, 0], 1.369e-5, rtol=1e-12)
    assert np.count_nonzero(cov1 - np.diag(np.diag(cov1))) == 0

    zero = table1_coefficients().scaled_noise(0.0)
    _, cov0 = diffusion(example_state(spec), zero, spec)
    assert_array_equal(cov0, np.zeros((5, 5)))


def test_drift_linear_in_coefficients():
    spec = janus5()
    rng = np.random.default_rng(3)
    for _ in range(20):
        vec = random_theta(rng, spec)
        m = rng.uniform(0, 100, 5)
        alpha = rng.uniform(-3, 3)
        scaled = vec.copy()
        scaled[:12] *= alpha
        assert_allclose(drift(m, scaled, spec), alpha * drift(m, vec, spec), rtol=1e-12, atol=1e-14)


def test_jacobian_point_term_is_constant():
    spec = janus5()
    th = table1_coefficients()
    rng = np.random.default_rng(0)
    for _ in range(5):
        jac = drift_jacobian(rng.uniform(0, 50, 5), th, spec)
        assert jac[spec.index["BT"], spec.index["RT"]] == -6.7e-4


def test_jacobian_no_terms_is_zero():
    spec = ModelSpec([Unit("A", RED), Unit("B", BLUE)], [], ["A", "B"])
    assert_array_equal(drift_jacobian([3.0, 4.0], np.array([0.1, 0.1]), spec), np.zeros((2, 2)))


def test_jacobian_area_term_product_rule():
    spec = ModelSpec([Unit("T", RED), Unit("S", BLUE)], [Term("T", "S", AREA)], ["T", "S"])
    vec = np.array([2.0, 0.1, 0.1])
    m = np.array([4.0, 3.0])  # target 4, source 3
    jac = drift_jacobian(m, vec, spec)
    assert_allclose(jac[0, 1], 8.0)
    assert_allclose(jac[0, 0], 6.0)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (drift(m + e, vec, spec) - drift(m - e, vec, spec)) / (2 * h)
        assert_allclose(jac[:, j], fd, rtol=1e-6, atol=1e-9)


def test_jacobian_matches_finite_differences_mixed_spec():
    units = [Unit("R1", RED), Unit("R2", RED), Unit("B1", BLUE), Unit("B2", BLUE)]
    terms = [Term("R1", "B1", POINT), Term("R1", "B2", AREA), Term("R2", "B1", AREA),
             Term("B1", "R1", POINT), Term("B1", "R2", AREA), Term("B2", "R2", POINT),
             Term("B2", "B1", AREA)]
    spec = ModelSpec(units, terms, ["R1", "R2", "B1", "B2"])
    rng = np.random.default_rng(11)
    for _ in range(100):
        vec = rng.uniform(spec.lower, spec.upper)
        m = rng.uniform(1, 100, 4)
        jac = drift_jacobian(m, vec, spec)
        for j in range(4):
            h = 1e-6 * max(1.0, m[j])
            e = np.zeros(4)
            e[j] = h
            fd = (drift(m + e, vec, spec) - drift(m - e, vec, spec)) / (2 * h)
            assert_allclose(jac[:, j], fd, rtol=1e-6, atol=1e-9 * np.abs(jac).max())


def test_log_transform_examples():
    assert_array_equal(log_transform([1.0]), [0.0])
    assert_allclose(log_transform([math.e]), [1.0], rtol=1e-15)
    x = log_transform([10.0, 20.0])
    assert_allclose(x, [math.log(10), math.log(20)], rtol=1e-15)
    # e**x by repeated squaring of a Taylor series for e**(x/2**10), independent of numpy's exp
    def pow_sq(v):
        w = v / 2**10
        y = sum(w**n / math.factorial(n) for n in range(10))
        for _ in range(10):
            y *= y
        return y
    assert_allclose([pow_sq(v) for v in x], [10.0, 20.0], rtol=1e-12)
    assert_allclose(exp_transform(x), [10.0, 20.0], rtol=1e-12)


@pytest.mark.parametrize("bad", [[0.0, 1.0], [-1.0, 2.0]])
def test_log_transform_domain(bad):
    with pytest.raises(DomainError):
        log_transform(bad)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-8, 1e8), min_size=1, max_size=6))
def test_log_round_trip(m):
    assert_allclose(exp_transform(log_transform(m)), m, rtol=1e-12)


def test_dimension_mismatch():
    spec = janus5()
    with pytest.raises(SpecificationError):
        drift(np.ones(4), table1_coefficients(), spec)
    with pytest.raises(SpecificationError):
        drift(np.ones(5), np.ones(16), spec)
    with pytest.raises(SpecificationError):
        CoefficientSet({("RT", "BT"): 1.0}, {}, {}).vector(spec)


def test_spec_validation():
    with pytest.raises(SpecificationError):
        ModelSpec([Unit("A", RED), Unit("A", BLUE)], [], [])
    with pytest.raises(SpecificationError):
        ModelSpec([Unit("A", RED)], [Term("A", "Z", POINT)], [])
    with pytest.raises(SpecificationError):
        ModelSpec([Unit("A", "Green")], [], [])
    with pytest.raises(SpecificationError):
        builtin("nope")


def test_spec_json_round_trip():
    spec = janus5({"x": (-0.2, 0.2)})
    again = ModelSpec.from_json(spec.to_json())
    assert again == spec
    assert_array_equal(again.lower[:12], -0.2)
    assert ModelSpec.from_json({"builtin": "janus5"}) == janus5()


def test_coefficients_json_round_trip():
    spec = janus5()
    th = table1_coefficients()
    again = CoefficientSet.from_json(th.to_json())
    assert_array_equal(again.vector(spec), th.vector(spec))
    assert_array_equal(CoefficientSet.from_vector(spec, th.vector(spec)).vector(spec), th.vector(spec))
