import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exotic_holonomy.models import (
    SIGMA,
    ModelError,
    ModelSpec,
    analytic_eigensystem,
    chi_angle,
    default_spec,
    eta_angle,
    f_matrix,
    gauge_function_f,
    gauge_function_g,
    hamiltonian,
    n_level_rank_one,
    numeric_eigensystem,
    rt_rs_rc,
    sigma_general,
    three_level,
    two_level,
    xi_angle,
)

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("spec", [two_level(), three_level(), sigma_general(), n_level_rank_one()])
def test_vanishes_at_pi(spec):
    assert np.abs(hamiltonian(spec, math.pi)).max() < 1e-15


def test_value_at_zero():
    assert np.allclose(hamiltonian(two_level(), 0.0), np.diag([1, -1]))
    assert np.allclose(hamiltonian(three_level(), 0.0), np.diag([1, 0, -1]))


def test_two_level_frame_at_zero():
    es = analytic_eigensystem(two_level(), np.array([0.0]))
    assert np.allclose(es.values[0], [-1, 1])
    assert np.allclose(es.vectors[0][:, 1], [1, 0])


def test_degenerate_at_pi():
    es = analytic_eigensystem(two_level(), np.array([math.pi]))
    assert np.allclose(es.values, 0, atol=1e-15)


def test_rt_rs_rc_special_values():
    assert np.allclose(rt_rs_rc(0.0), (0, 0, 1))
    assert np.allclose(rt_rs_rc(math.pi), (0, 0, -1), atol=1e-7)
    rt, rs, rc = rt_rs_rc(math.pi / 4)
    assert rs == pytest.approx(3**-0.25 * 2**-0.25)
    assert rc == pytest.approx(2**-0.25)
    assert rt == pytest.approx(3**-0.25)
    rt, _, _ = rt_rs_rc(np.array([math.pi / 2, -math.pi / 2]))
    # cos(pi/2) is 6e-17 rather than 0, so Rt is merely huge there
    assert np.all(np.abs(rt) > 1e7)


@given(st.floats(-20, 20))
def test_rt_rs_rc_periodic(xi):
    a = np.array(rt_rs_rc(xi))
    b = np.array(rt_rs_rc(xi + TWO_PI))
    assert np.allclose(a[1:], b[1:], atol=1e-7)


def test_f_symmetric_with_peak_at_pi():
    spec = two_level()
    theta = np.linspace(0.01, TWO_PI - 0.01, 1001)
    f = gauge_function_f(spec, theta)
    assert np.allclose(f, gauge_function_f(spec, TWO_PI - theta), atol=1e-10)
    # v < 1 puts the maximum 1 / (4 v) at theta = pi
    assert theta[np.argmax(f)] == pytest.approx(math.pi, abs=1e-2)
    assert f.max() == pytest.approx(1 / (4 * spec.v), rel=1e-5)


def test_f_matches_finite_difference_of_frame():
    spec = two_level()
    theta = np.linspace(0.1, 6.0, 50)
    h = 1e-5
    p = analytic_eigensystem(spec, theta).vectors
    dp = (analytic_eigensystem(spec, theta + h).vectors - analytic_eigensystem(spec, theta - h).vectors) / (2 * h)
    a12 = 1j * np.einsum("ki,ki->k", p[:, :, 0].conj(), dp[:, :, 1])
    assert np.allclose(a12, -1j * gauge_function_f(spec, theta), atol=1e-8)


def test_g_finite_and_translates_distinct():
    spec = three_level()
    theta = np.linspace(0.0, TWO_PI, 400, endpoint=False) + 1e-3
    g = gauge_function_g(spec, theta)
    g_up = gauge_function_g(spec, theta + TWO_PI)
    g_dn = gauge_function_g(spec, theta - TWO_PI)
    assert np.all(np.isfinite(g))
    assert np.abs(g - g_up).max() > 1e-2
    assert np.abs(g - g_dn).max() > 1e-2
    assert np.abs(g_up - g_dn).max() > 1e-2


def test_g_matches_finite_difference_of_frame():
    spec = three_level()
    theta = np.linspace(0.1, 6.0, 40)
    h = 1e-5
    p = analytic_eigensystem(spec, theta).vectors
    dp = (analytic_eigensystem(spec, theta + h).vectors - analytic_eigensystem(spec, theta - h).vectors) / (2 * h)
    g_fd = np.einsum("ki,ki->k", p[:, :, 0].conj(), dp[:, :, 2]).real
    assert np.allclose(g_fd, gauge_function_g(spec, theta), atol=1e-7)


def test_sigma_matrices():
    assert np.allclose(f_matrix(sigma_general(0, 0, 0)), np.eye(3))
    assert np.allclose(f_matrix(sigma_general(1, 1, 1)), np.ones((3, 3)))
    for k, s in SIGMA.items():
        assert np.allclose(s, s.T)


@pytest.mark.parametrize("spec", [two_level(), three_level()])
def test_closed_form_matches_numeric(spec, rng):
    theta = rng.uniform(0, 4 * math.pi, 1000)
    theta = theta[np.abs(np.cos(theta / 2)) > 1e-6]
    es = analytic_eigensystem(spec, theta).sorted()
    num = numeric_eigensystem(spec, theta)
    assert np.allclose(es.values, num.values, atol=1e-9)
    h = hamiltonian(spec, theta)
    resid = h @ es.vectors - es.vectors * es.values[:, None, :]
    assert np.abs(resid).max() < 1e-9


@pytest.mark.parametrize("spec", [two_level(), three_level()])
def test_closed_form_frame_is_continuous(spec):
    theta = np.linspace(0.0, 4 * math.pi, 8001)
    vecs = analytic_eigensystem(spec, theta).vectors
    assert np.abs(np.diff(vecs, axis=0)).max() < 1e-2


def test_eigenvalue_exchange_over_one_cycle():
    spec = two_level()
    theta = np.linspace(0.2, 3.0, 20)
    e0 = analytic_eigensystem(spec, theta).values
    e1 = analytic_eigensystem(spec, theta + TWO_PI).values
    assert np.allclose(e1[:, 0], e0[:, 1], atol=1e-12)
    assert np.allclose(e1[:, 1], e0[:, 0], atol=1e-12)


def test_eigenvector_periodicities():
    theta = np.linspace(0.2, 3.0, 20)
    p = analytic_eigensystem(two_level(), theta).vectors
    assert np.allclose(analytic_eigensystem(two_level(), theta + 4 * math.pi).vectors, -p, atol=1e-12)
    assert np.allclose(analytic_eigensystem(two_level(), theta + 8 * math.pi).vectors, p, atol=1e-12)
    q = analytic_eigensystem(three_level(), theta).vectors
    assert np.allclose(analytic_eigensystem(three_level(), theta + 6 * math.pi).vectors, q, atol=1e-10)


@pytest.mark.parametrize("family", ["two_level", "three_level", "sigma_general", "n_level_rank_one"])
def test_envelope_periodicity(family):
    theta = np.linspace(0, 3, 7)
    spec = default_spec(family)
    assert np.allclose(hamiltonian(spec, theta + TWO_PI), hamiltonian(spec, theta), atol=1e-12)
    unit = ModelSpec.from_text(spec.to_text().replace("cos_half", "unit"))
    assert np.allclose(hamiltonian(unit, theta + TWO_PI), -hamiltonian(unit, theta), atol=1e-12)


def test_angles_monotone():
    theta = np.linspace(0, TWO_PI, 2001)[:-1]
    for angle in (chi_angle(theta, 1 / math.sqrt(3)), eta_angle(theta, 1.0), xi_angle(theta, 1.0)):
        assert np.all(np.diff(angle) > 0)
        assert angle[0] == pytest.approx(0.0, abs=1e-12)
        assert angle[-1] < TWO_PI


def test_hamiltonian_accepts_complex_theta():
    z = 0.4 + 0.7j
    h = hamiltonian(two_level(), z)
    c, s = np.cos(z / 2), np.sin(z / 2)
    v = 1 / math.sqrt(3)
    assert np.allclose(h, c * (c * np.diag([1, -1]) + v * s * np.ones((2, 2))))


def test_validation():
    with pytest.raises(ModelError):
        analytic_eigensystem(two_level(0.0), np.array([0.1]))
    with pytest.raises(ModelError):
        ModelSpec("two_level", 3, 1.0)
    with pytest.raises(ModelError):
        ModelSpec("five_level", 5, 1.0)
    with pytest.raises(ModelError):
        ModelSpec("n_level_rank_one", 3, 1.0, w=(1.0, 0.0, 0.0), z=(1.0, 0.0, -1.0))
    with pytest.raises(ModelError):
        ModelSpec("n_level_rank_one", 2, 1.0, w=(1.0, 1.0), z=(1.0, -1.0))
    with pytest.raises(ModelError):
        ModelSpec("n_level_rank_one", 2, 1.0, w=(0.6, 0.8), z=(1.0, 1.0))
    with pytest.raises(ModelError):
        ModelSpec("two_level", 2, math.nan)


@pytest.mark.parametrize(
    "spec",
    [two_level(), three_level(-0.3, "unit"), sigma_general(0.7, 1.0, 1.3, 0.05), n_level_rank_one(n=5, v=0.1 + 0.2)],
)
def test_text_round_trip(spec):
    assert ModelSpec.from_text(spec.to_text()) == spec


def test_from_text_missing_key():
    with pytest.raises(ModelError):
        ModelSpec.from_text("family=two_level\nN=2\n")
