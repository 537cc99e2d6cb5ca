# tests/test_thermo.py
# -*- coding: utf-8 -*-
import logging

import numpy as np
import pytest

from lib.errors import DimensionMismatch
from lib.states import BlochVector, DensityMatrix
from lib.thermo import (
    DEFAULT_METHODS,
    WorkScenario,
    average_work,
    default_omega_tau,
    jz2_moment,
    scenario_states,
    work_comparison,
    work_ordering_holds,
)


def test_average_work_for_diagonal_state():
    psi = DensityMatrix(np.diag([0.5, 0.0, 0.0, 0.5]))
    # tr(ψ J_z²) = 9/4
    assert average_work(psi, 1.5, 2.0, 0.0) == pytest.approx(0.0)
    assert average_work(psi, 1.5, 2.0, np.pi) == pytest.approx(-2.0 * 2.0 * 2.25)
    w = average_work(psi, 1.5, 1.0, np.array([0.0, np.pi / 2, np.pi]))
    assert w == pytest.approx([0.0, -2.25, -4.5])


def test_average_work_warns_when_not_commuting(caplog):
    psi = DensityMatrix(np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]]))
    with caplog.at_level(logging.WARNING, logger="lib.thermo"):
        w = average_work(psi, 1.0, 1.0, np.pi)
    assert "可換" in caplog.text
    assert w == pytest.approx(-1.0)


def test_average_work_dimension_check():
    with pytest.raises(DimensionMismatch):
        average_work(DensityMatrix.maximally_mixed(3), 1.5, 1.0, 0.5)


def test_scenario_validation():
    with pytest.raises(ValueError):
        WorkScenario(j=0.3)
    with pytest.raises(ValueError):
        WorkScenario(j=1.5, gamma=0.0)
    with pytest.raises(ValueError):
        WorkScenario(j=1.5, methods=("AAM-pure", "other"))
    assert WorkScenario(j=2.5).mixed_env_dim == 6
    assert WorkScenario(j=2.5, env_dim=3).mixed_env_dim == 3


def test_default_grid():
    grid = default_omega_tau()
    assert grid.size == 101
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(2 * np.pi)


def test_scenario_states_reproduce_initial_state():
    scenario = WorkScenario(j=1.5)
    states = scenario_states(scenario)
    assert set(states) == set(DEFAULT_METHODS)
    for state in states.values():
        jz = np.diag([1.5, 0.5, -0.5, -1.5])
        assert np.trace(state.matrix @ jz).real / 1.5 == pytest.approx(0.7, abs=1e-5)


@pytest.mark.parametrize("j", [1.5, 2.5])
def test_work_ordering(j):
    ok, moments = work_ordering_holds(WorkScenario(j=j))
    assert ok, moments
    assert moments["AAM-pure"] >= moments["MEP"]


def test_work_comparison_rows():
    scenario = WorkScenario(j=1.5, omega_tau=np.linspace(0.0, np.pi, 5))
    rows = work_comparison(scenario)
    assert len(rows) == 3 * 5
    assert {r["method"] for r in rows} == set(DEFAULT_METHODS)
    at_pi = {r["method"]: r["W_over_gamma"] for r in rows if r["omega_tau"] == pytest.approx(np.pi)}
    states = scenario_states(scenario)
    for method, w in at_pi.items():
        assert w == pytest.approx(-2.0 * jz2_moment(states[method], 1.5))


def test_spin_half_work_is_state_independent():
    scenario = WorkScenario(j=0.5, initial_bloch=BlochVector(0.0, 0.0, 0.3))
    ok, moments = work_ordering_holds(scenario)
    assert ok
    assert all(m == pytest.approx(0.25) for m in moments.values())
