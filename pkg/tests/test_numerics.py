import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exotic_holonomy.numerics import (
    NumericsError,
    contour_integral,
    eig_hermitian,
    eig_hermitian_batch,
    expm_hermitian,
    is_unitary,
    midpoints,
    ordered_product_exponential,
    path_ordered_exp,
    rk4_complex_ode,
)
from exotic_holonomy.models import gauge_function_f, hamiltonian, two_level

SIGMA_Y = np.array([[0, -1j], [1j, 0]])


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def test_diagonal_input_sorted():
    es = eig_hermitian(np.diag([1.0, -1.0]))
    assert np.allclose(es.values, [-1, 1])
    assert np.allclose(es.vectors[:, 0], [0, 1])
    assert np.allclose(es.vectors[:, 1], [1, 0])


def test_three_level_diagonal():
    es = eig_hermitian(np.diag([1.0, 0.0, -1.0]))
    assert np.allclose(es.values, [-1, 0, 1])


def test_matches_closed_form_two_level():
    spec = two_level()
    theta = math.pi / 2
    es = eig_hermitian(hamiltonian(spec, theta))
    # bracket eigenvalues v s -+ sqrt(c^2 + v^2 s^2), scaled by the envelope c
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    rho = math.hypot(c, spec.v * s)
    assert np.allclose(es.values, [c * (spec.v * s - rho), c * (spec.v * s + rho)], atol=1e-10)


def test_rejects_non_hermitian():
    with pytest.raises(NumericsError):
        eig_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_rejects_non_square():
    with pytest.raises(NumericsError):
        eig_hermitian_batch(np.zeros((2, 3)))


def test_batch_agrees_with_lapack(rng):
    h = np.stack([random_hermitian(rng, 4) for _ in range(200)])
    es = eig_hermitian_batch(h)
    assert np.allclose(es.values, np.linalg.eigvalsh(h), atol=1e-12)
    resid = h @ es.vectors - es.vectors * es.values[:, None, :]
    assert np.abs(resid).max() < 1e-12
    assert is_unitary(es.vectors)


def test_phase_convention(rng):
    es = eig_hermitian(random_hermitian(rng, 3))
    lead = es.vectors[0]
    assert np.all(np.abs(lead.imag) < 1e-14) and np.all(lead.real > 0)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_eigensolver_residual_property(n, seed):
    h = random_hermitian(np.random.default_rng(seed), n)
    es = eig_hermitian(h)
    scale = max(1.0, np.abs(h).max())
    assert np.abs(h @ es.vectors - es.vectors * es.values).max() < 1e-10 * scale
    assert np.all(np.diff(es.values) >= 0)
    assert is_unitary(es.vectors)


def test_expm_matches_scipy(rng):
    from scipy.linalg import expm

    a = random_hermitian(rng, 3)
    assert np.allclose(expm_hermitian(a, 0.7), expm(-0.7j * a), atol=1e-13)


def test_single_zero_sample_is_identity():
    u = ordered_product_exponential(np.array([0.0, 1.0]), np.zeros((1, 2, 2)))
    assert np.allclose(u, np.eye(2))


def test_constant_generator_quarter_turn():
    # exp(-i (pi/2) sigma_y) = -i sigma_y
    edges = np.linspace(0, math.pi / 2, 9)
    u = ordered_product_exponential(edges, np.broadcast_to(SIGMA_Y, (8, 2, 2)))
    assert np.allclose(u, [[0, -1], [1, 0]], atol=1e-14)


def test_two_level_gauge_integral_gives_exchange():
    spec = two_level()
    gen = lambda t: gauge_function_f(spec, t)[:, None, None] * SIGMA_Y
    u = path_ordered_exp(gen, 0.0, 2 * math.pi, 10_000)
    # the total angle is pi/2, and A commutes with itself along the path
    assert np.allclose(u, [[0, -1], [1, 0]], atol=1e-6)


def test_reverse_is_adjoint_of_negated_forward(rng):
    edges = np.sort(rng.uniform(0, 3, 65))
    gens = np.stack([random_hermitian(rng, 3) for _ in range(64)])
    rev = ordered_product_exponential(edges, gens, "reverse")
    fwd = ordered_product_exponential(edges, -gens, "forward")
    assert np.allclose(rev, fwd.conj().T, atol=1e-10)


def test_forward_order_is_later_left():
    a, b = random_hermitian(np.random.default_rng(0), 2), random_hermitian(np.random.default_rng(1), 2)
    u = ordered_product_exponential(np.array([0.0, 0.3, 0.5]), np.stack([a, b]))
    assert np.allclose(u, expm_hermitian(b, 0.2) @ expm_hermitian(a, 0.3))


def test_chunking_does_not_change_product(rng):
    edges = np.linspace(0, 1, 101)
    gens = np.stack([random_hermitian(rng, 2) for _ in range(100)])
    whole = ordered_product_exponential(edges, gens)
    parts = ordered_product_exponential(edges, gens, chunk=7)
    assert np.allclose(whole, parts, atol=1e-13)


def test_refinement_is_second_order():
    def gen(t):
        t = np.asarray(t)
        return np.cos(t)[:, None, None] * SIGMA_Y + np.sin(2 * t)[:, None, None] * np.diag([1.0, -1.0])

    ref = path_ordered_exp(gen, 0.0, 2.0, 8192)
    e1 = np.abs(path_ordered_exp(gen, 0.0, 2.0, 64) - ref).max()
    e2 = np.abs(path_ordered_exp(gen, 0.0, 2.0, 128) - ref).max()
    assert e1 / e2 >= 3.5


def test_grid_validation():
    with pytest.raises(NumericsError):
        ordered_product_exponential(np.array([0.0, 1.0, 0.5]), np.zeros((2, 2, 2)))
    with pytest.raises(NumericsError):
        ordered_product_exponential(np.array([0.0, 1.0]), np.zeros((2, 2, 2)))
    with pytest.raises(NumericsError):
        ordered_product_exponential(np.array([0.0, 1.0]), np.zeros((1, 2, 2)), "sideways")


def test_midpoints():
    assert np.allclose(midpoints([0.0, 1.0, 3.0]), [0.5, 2.0])


def test_rk4_rotation():
    y0 = np.array([1.0, 0.5j])
    _, ys = rk4_complex_ode(lambda t, y: -1j * y, y0, (0.0, math.pi), 2000)
    assert np.allclose(ys[-1], -y0, atol=1e-9)


def test_rk4_zero_rhs_is_constant():
    y0 = np.array([0.3 + 0.1j, 2.0])
    _, ys = rk4_complex_ode(lambda t, y: np.zeros_like(y), y0, (0.0, 5.0), 10)
    assert np.all(ys == y0)


def test_rk4_aborts_on_nan():
    def rhs(t, y):
        return y * (np.nan if t > 0.5 else 1.0)

    with pytest.raises(NumericsError, match="t ="):
        rk4_complex_ode(rhs, np.array([1.0]), (0.0, 1.0), 10)


def test_contour_simple_pole():
    z0 = 0.3 + 0.2j
    assert abs(contour_integral(lambda z: 1 / (z - z0), z0 + 0.01, 0.1) - 1) < 1e-12


def test_contour_polynomial_vanishes():
    assert abs(contour_integral(lambda z: 3 * z**4 - z + 2, 0.5j, 1.0)) < 1e-12


def test_contour_rejects_non_finite():
    with pytest.raises(NumericsError):
        contour_integral(lambda z: np.full(z.shape, np.inf), 0.0, 1.0)
    with pytest.raises(NumericsError):
        contour_integral(lambda z: z, 0.0, 0.0)
