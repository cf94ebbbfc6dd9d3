"""Randomized invariants, driven by hypothesis."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exotic_holonomy import validation
from exotic_holonomy.holonomy import classify
from exotic_holonomy.models import analytic_eigensystem, hamiltonian, sigma_general, three_level, two_level

TWO_PI = 2 * math.pi
seeds = st.integers(0, 2**32 - 1)
angles = st.floats(-20.0, 20.0, allow_nan=False).filter(lambda t: abs(math.cos(t / 2)) > 1e-6)
couplings = st.floats(0.05, 5.0).map(lambda v: v)


@pytest.mark.parametrize("name", sorted(validation.PROPERTY_LIMITS))
@given(seed=seeds)
def test_randomized_property(name, seed):
    fn, accept = validation.PROPERTY_LIMITS[name]
    value = fn(np.random.default_rng(seed))
    assert accept(value), value


@given(theta=angles, v=couplings, sign=st.sampled_from([1.0, -1.0]))
def test_two_level_flow_relation(theta, v, sign):
    spec = two_level(sign * v)
    e = analytic_eigensystem(spec, np.array([theta, theta + TWO_PI])).values
    assert np.allclose(e[1], e[0][::-1], atol=1e-10)


@given(theta=angles, v=couplings)
def test_three_level_flow_relation(theta, v):
    spec = three_level(v)
    e = analytic_eigensystem(spec, np.array([theta, theta + TWO_PI])).values
    assert np.allclose(e[1], np.roll(e[0], -1), atol=1e-8)


@given(theta=angles, v=couplings)
def test_closed_form_eigenpairs(theta, v):
    for spec in (two_level(v), three_level(v)):
        es = analytic_eigensystem(spec, np.array([theta]))
        h = hamiltonian(spec, np.array([theta]))
        assert np.abs(h @ es.vectors - es.vectors * es.values[:, None, :]).max() < 1e-8
        assert np.allclose(es.vectors[0].T @ es.vectors[0], np.eye(spec.n), atol=1e-10)


@given(
    theta=st.floats(-20.0, 20.0),
    c=st.tuples(*[st.floats(-2.0, 2.0)] * 3),
    c5=st.floats(-0.2, 0.2),
)
def test_hamiltonian_periodic_and_real_symmetric(theta, c, c5):
    spec = sigma_general(*c, c5)
    h = hamiltonian(spec, theta)
    assert np.allclose(h, h.T)
    assert np.allclose(hamiltonian(spec, theta + TWO_PI), h, atol=1e-12)


@given(perm=st.permutations(range(4)), phases=st.lists(st.floats(0, TWO_PI), min_size=4, max_size=4))
def test_classify_recovers_permutation(perm, phases):
    m = np.zeros((4, 4), dtype=complex)
    for i, j in enumerate(perm):
        m[i, j] = np.exp(1j * phases[i])
    hol = classify(m)
    assert hol.sigma == tuple(j + 1 for j in perm)
    assert hol.residual < 1e-12
    assert np.allclose(np.abs(hol.entry_phases), 1)


@settings(max_examples=10)
@given(seed=seeds)
def test_property_suite_is_reproducible(seed):
    a = validation.property_suite(trials=8, seed=seed)
    b = validation.property_suite(trials=8, seed=seed)
    assert a.detail == b.detail
