import math

import numpy as np
import pytest

from exotic_holonomy.dynamics import (
    DynamicsError,
    Schedule,
    epsilon_for_gap,
    evolve,
    fidelity_csv,
    gaps,
    landau_zener_estimate,
    landau_zener_window,
    perturbation,
    perturbed_hamiltonian,
    window_csv,
)
from exotic_holonomy.models import hamiltonian, three_level, two_level


@pytest.fixture(scope="module")
def eps_small_gap():
    return epsilon_for_gap(two_level(), 1e-3)


@pytest.fixture(scope="module")
def slow_two_level():
    return evolve(two_level(), 0.0, Schedule(20_000.0))


@pytest.mark.parametrize("shape", ["sine", "smoothstep"])
def test_schedule_endpoints(shape):
    s = Schedule(10.0, shape)
    h = 1e-6
    assert s.s(0.0) == 0.0 and s.s(1.0) == pytest.approx(1.0, abs=1e-15)
    assert abs(s.s(h) - s.s(0.0)) / h < 1e-5
    assert abs(s.s(1.0) - s.s(1.0 - h)) / h < 1e-5
    assert abs(s.ds(0.0)) < 1e-10 and abs(s.ds(1.0)) < 1e-10


def test_schedule_theta_range():
    s = Schedule(7.0, theta_start=1.0, cycles=2)
    assert s.theta(0.0) == 1.0
    assert s.theta(7.0) == pytest.approx(1.0 + 4 * math.pi)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(0.0)
    with pytest.raises(ValueError):
        Schedule(1.0, "square")


def test_perturbation():
    p = perturbation(3, (1, 2))
    assert np.array_equal(p, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    h = perturbed_hamiltonian(two_level(), 0.1)
    assert np.allclose(h(math.pi), 0.1 * np.array([[0, 1], [1, 0]]))
    with pytest.raises(ValueError):
        perturbed_hamiltonian(two_level(), -0.1)


def test_gap_search(eps_small_gap):
    g = gaps(two_level(), eps_small_gap)
    assert g.delta == pytest.approx(1e-3, rel=1e-8)
    assert math.isinf(g.d)
    assert abs(g.theta_delta - math.pi) < 0.1
    # no perturbation: the levels cross exactly at pi
    assert gaps(two_level(), 0.0).delta < 1e-12


def test_sudden_limit_freezes_states():
    run = evolve(two_level(), 0.0, Schedule(0.01))
    assert run.following_fidelities().min() > 0.99


def test_three_level_cyclic_exchange():
    run = evolve(three_level(), 0.0, Schedule(500.0))
    assert run.sigma == (2, 3, 1)
    assert run.exchange_fidelities().min() > 0.99
    assert run.unitarity_error() < 1e-5
    assert np.abs(np.linalg.norm(run.final_states, axis=0) - 1).max() < 1e-5


def test_two_level_exchange_at_long_times(slow_two_level):
    assert slow_two_level.sigma == (2, 1)
    assert slow_two_level.exchange_fidelity() > 0.99
    assert slow_two_level.unitarity_error() < 1e-5
    assert np.abs(np.linalg.norm(slow_two_level.final_states, axis=0) - 1).max() < 1e-7


def test_two_level_infidelity_falls_as_inverse_tau():
    # the slowly closing gap at the H = 0 point leaves 1 - F ~ c / tau
    loss = [1 - evolve(two_level(), 0.0, Schedule(tau)).exchange_fidelity() for tau in (1000.0, 4000.0)]
    assert loss[0] / loss[1] == pytest.approx(4.0, rel=0.15)


@pytest.mark.xfail(strict=True, reason="exchange fidelity at tau=200 is 0.939; see the acceptance suite")
def test_two_level_exchange_at_tau_200():
    assert evolve(two_level(), 0.0, Schedule(200.0)).exchange_fidelity() > 0.99


def test_holonomy_structure_emerges(slow_two_level):
    est = slow_two_level.holonomy_estimate()
    # off-pattern entries at ten times tau = 2000, where 1 - F is below 1e-3
    assert np.abs(np.diag(est)).max() < 0.05
    assert np.allclose([est[0, 1], est[1, 0]], [1, -1], atol=0.05)


def test_schedule_shape_invariance():
    a = evolve(two_level(), 0.0, Schedule(5000.0, "sine"))
    b = evolve(two_level(), 0.0, Schedule(5000.0, "smoothstep"))
    assert a.sigma == b.sigma == (2, 1)
    assert a.exchange_fidelity() > 0.99 and b.exchange_fidelity() > 0.99


def test_methods_agree():
    a = evolve(two_level(), 0.0, Schedule(100.0), method="rk4")
    b = evolve(two_level(), 0.0, Schedule(100.0), method="expmid", steps=200_000)
    assert np.abs(a.fidelities - b.fidelities).max() < 1e-4


def test_crossing_fidelity_follows_landau_zener(eps_small_gap):
    # at tau = 1e5 the unperturbed loss is below 1e-4, so |<2|psi_1>|^2 is the LZ probability
    spec = two_level()
    run = evolve(spec, eps_small_gap, Schedule(1e5))
    p = landau_zener_estimate(spec, 1e-3, 1e5)
    assert run.exchange_fidelity() ** 2 == pytest.approx(p, abs=0.01)


def test_wide_gap_adiabatic_following():
    spec = two_level()
    eps = epsilon_for_gap(spec, 0.05)
    run = evolve(spec, eps, Schedule(1e5))
    assert run.exchange_fidelity() < 0.01
    assert run.following_fidelities().min() > 0.99
    assert run.sigma == (2, 1)


def test_window_rejects_empty_tau_list():
    with pytest.raises(ValueError):
        landau_zener_window(two_level(), 0.01, [])


def test_window_rows(eps_small_gap, tmp_path):
    rows = landau_zener_window(two_level(), eps_small_gap, [20.0])
    assert rows[0].delta == pytest.approx(1e-3, rel=1e-6)
    assert 0 <= rows[0].exchange_fidelity <= 1
    body = window_csv(rows, tmp_path / "w.csv").read_text()
    assert "tau,delta,D,exchange_fidelity" in body


def test_fidelity_csv_records_perturbation(tmp_path):
    run = evolve(two_level(), 0.01, Schedule(5.0))
    text = fidelity_csv(run, tmp_path / "f.csv").read_text()
    assert "eps=0.01" in text


def test_rk4_failure_is_reported(monkeypatch):
    import exotic_holonomy.dynamics as dyn

    monkeypatch.setattr(dyn, "_propagate_rk4", lambda h, s, y0, steps: 1.01 * y0)
    with pytest.raises(DynamicsError, match="norm drift"):
        evolve(two_level(), 0.0, Schedule(5.0), method="rk4", steps=100)
