"""The ten acceptance criteria at their stated tolerances.

Each test runs one criterion from ``exotic_holonomy.validation`` (the same
code behind ``exotic-holonomy validate``) and records a one-line verdict that
is printed in the terminal summary. Run this file directly for the lines
alone: ``python tests/test_acceptance.py``.
"""

import json

import pytest

from exotic_holonomy import validation


def check(num, record_criterion):
    res = validation.run_criterion(num)
    record_criterion(res.line())
    print(res.line())
    assert res.passed, json.dumps(validation._jsonable(res.detail), indent=2, sort_keys=True)
    assert res.within_budget, f"{res.seconds:.1f} s exceeds {res.budget:g} s"
    return res


def test_01_two_level_holonomy(record_criterion):
    res = check(1, record_criterion)
    assert res.detail["max_entry_error"] < 1e-6


def test_02_gauge_integral(record_criterion):
    check(2, record_criterion)


def test_03_three_level_holonomy(record_criterion):
    check(3, record_criterion)


def test_04_eigenvalue_flow(record_criterion):
    check(4, record_criterion)


def test_05_eigenvector_periodicity(record_criterion):
    check(5, record_criterion)


def test_06_exceptional_points(record_criterion):
    check(6, record_criterion)


def test_07_sigma_flow_table(record_criterion):
    check(7, record_criterion)


def test_08_dynamics_oracle(record_criterion):
    # Expected to fail. At theta = pi the gap closes linearly while the
    # coupling <1|d 2> stays finite, so the leak amplitude goes as
    # sqrt(dtheta/dt): 1 - F ~ 12 / tau (0.94 at tau = 200, above 0.99 only
    # from tau ~ 1200). With a gap of 1e-3 the crossing survives until
    # tau ~ 4e7 (Landau-Zener), so neither gapped sub-check can hold at the
    # stated times. The attainable regimes are covered in test_dynamics.py.
    check(8, record_criterion)


def test_09_cross_method(record_criterion):
    check(9, record_criterion)


def test_10_property_suite(record_criterion):
    check(10, record_criterion)


if __name__ == "__main__":
    validation.run(progress=lambda r: print(r.line(), flush=True))
