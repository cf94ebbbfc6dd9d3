import math

import numpy as np
import pytest

from exotic_holonomy.flow import (
    SIGMA_CASES,
    FlowError,
    classify_sigma_flows,
    cycle_notation,
    extract_flow,
    flow_from_matrix,
    track,
)
from exotic_holonomy.models import analytic_eigensystem, hamiltonian, n_level_rank_one, sigma_general, three_level, two_level
from exotic_holonomy.numerics import eig_hermitian_batch

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def two_path():
    return track(two_level(), 0.0, TWO_PI, 2048)


@pytest.fixture(scope="module")
def three_path():
    return track(three_level(), 0.0, TWO_PI, 2048)


def test_two_level_branches_exchange(two_path):
    assert two_path.ok
    assert two_path.values[-1, 0] == pytest.approx(two_path.values[0, 1], abs=1e-6)
    assert two_path.values[-1, 1] == pytest.approx(two_path.values[0, 0], abs=1e-6)


def test_three_level_cyclic_shift(three_path):
    assert three_path.ok
    assert np.allclose(three_path.values[-1], np.roll(three_path.values[0], -1), atol=1e-6)


@pytest.mark.parametrize("name", ["two", "three"])
def test_branches_are_the_spectrum(name, two_path, three_path):
    path = two_path if name == "two" else three_path
    fresh = eig_hermitian_batch(hamiltonian(path.spec, path.theta)).values
    assert np.allclose(np.sort(path.values, axis=1), fresh, atol=1e-9)


@pytest.mark.parametrize("name", ["two", "three"])
def test_adjacent_overlap_continuity(name, two_path, three_path):
    path = two_path if name == "two" else three_path
    ov = np.abs(np.einsum("kin,kin->kn", path.vectors[:-1].conj(), path.vectors[1:]))
    assert ov.min() > 0.9
    assert path.min_overlap > 0.9


def test_tracked_frame_follows_closed_form(two_path):
    ref = analytic_eigensystem(two_level(), two_path.theta).vectors
    keep = np.abs(two_path.theta - math.pi) > 1e-9
    assert np.abs(two_path.vectors[keep] - ref[keep]).max() < 1e-5


def test_two_level_flow(two_path):
    f = extract_flow(two_path, allow_antiperiodic=True)
    assert f.sigma == (2, 1)
    assert np.allclose(f.phases, [1, -1], atol=1e-6)
    assert f.reliable


def test_three_level_flow(three_path):
    f = extract_flow(three_path)
    assert f.sigma == (2, 3, 1)
    assert np.allclose(f.phases, 1, atol=1e-6)
    assert np.allclose(np.abs(f.phases), 1, atol=1e-10)


def test_negative_v_still_exchanges():
    f = extract_flow(track(two_level(-1 / math.sqrt(3)), 0.0, TWO_PI, 2048))
    assert f.sigma == (2, 1)


def test_null_path_is_identity():
    path = track(three_level(), 0.7, 0.7, 16)
    assert extract_flow(path).sigma == (1, 2, 3)


def test_flow_powers_are_identity():
    f2 = extract_flow(track(two_level(), 0.0, 2 * TWO_PI, 4096))
    assert f2.sigma == (1, 2)
    assert np.allclose(f2.phases, -1, atol=1e-6)
    f3 = extract_flow(track(three_level(), 0.0, 3 * TWO_PI, 6144))
    assert f3.sigma == (1, 2, 3)
    one = extract_flow(track(three_level(), 0.0, TWO_PI, 2048))
    assert one.compose(one).compose(one).sigma == (1, 2, 3)


@pytest.mark.parametrize("spec", [two_level(), three_level(), sigma_general(0.7, 1.0, 1.3, 0.05)])
def test_grid_independence(spec):
    a = extract_flow(track(spec, 0.0, TWO_PI, 1024), allow_antiperiodic=True)
    b = extract_flow(track(spec, 0.0, TWO_PI, 2048), allow_antiperiodic=True)
    assert a.sigma == b.sigma


def test_rank_one_family_tracks():
    path = track(n_level_rank_one(n=4), 0.0, TWO_PI, 2048)
    assert path.ok
    f = extract_flow(path)
    assert f.reliable
    assert sorted(f.sigma) == [1, 2, 3, 4]


def test_open_path_rejected():
    with pytest.raises(FlowError):
        extract_flow(track(two_level(), 0.0, 1.0, 64))


def test_few_steps_rejected():
    with pytest.raises(ValueError):
        track(two_level(), 0.0, 1.0, 8)


def test_reverse_path_inverts_flow():
    path = track(three_level(), TWO_PI, 0.0, 2048)
    assert extract_flow(path).sigma == (3, 1, 2)


def test_sigma_table():
    rows = classify_sigma_flows(SIGMA_CASES.values())
    got = {name: r.flow.sigma for name, r in zip(SIGMA_CASES, rows)}
    assert got["c1 only"] == (2, 1, 3)
    assert got["c2 only"] == (3, 2, 1)
    assert got["c3 only"] == (1, 3, 2)
    assert got["c1=c2=c3, c5=0.05"] == (2, 3, 1)
    assert got["generic"] == (3, 2, 1)
    assert not any(r.flagged for r in rows)


def test_sigma_table_rejects_large_c5():
    with pytest.raises(ValueError):
        classify_sigma_flows([(1, 1, 1, 0.5)])


def test_cycle_notation():
    assert cycle_notation((2, 3, 1)) == "(1 2 3)"
    assert cycle_notation((2, 1, 3)) == "(1 2)"
    assert cycle_notation((1, 2)) == "()"


def test_flow_from_matrix():
    m = np.array([[0, 1j, 0], [0, 0, -1], [1, 0, 0]])
    f = flow_from_matrix(m)
    assert f.sigma == (2, 3, 1)
    assert np.allclose(f.phases, [1j, -1, 1])
    assert np.allclose(f.as_matrix(), m)
