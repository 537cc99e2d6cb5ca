# tests/test_mep.py
# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from lib.aam import aam_bns_pure, bns_square_pure
from lib.channels import make_bns_channel, make_partial_trace_channel, make_su2_channel
from lib.mep import (
    brillouin,
    brillouin_derivative,
    brillouin_inverse,
    gibbs_state,
    is_near_pure,
    log_partition,
    mep_assign,
    mep_bns,
    mep_generic,
    mep_pm_curve,
    mep_su2,
    mep_weights,
    tomographic_targets,
)
from lib.states import PAULI, BlochVector, DensityMatrix, von_neumann_entropy

blochs = st.tuples(*(st.floats(-0.45, 0.45, allow_nan=False) for _ in range(3))).map(lambda v: BlochVector(*v))
spins = st.sampled_from([0.5, 1.0, 1.5, 2.5, 3.5, 4.5])


# ------------- Brillouin 関数 -------------
@seed(31)
@given(spins, st.floats(-0.99, 0.99, allow_nan=False))
def test_brillouin_inverse_round_trip(j, r):
    assert brillouin(j, brillouin_inverse(j, r)) == pytest.approx(r, abs=1e-10)


@seed(32)
@given(st.floats(-3.0, 3.0, allow_nan=False))
def test_brillouin_half_is_tanh(lam):
    assert brillouin(0.5, lam) == pytest.approx(math.tanh(lam), abs=1e-12)


def test_brillouin_series_branch_is_continuous():
    for j in (0.5, 2.5):
        assert brillouin(j, 0.999e-3) == pytest.approx(brillouin(j, 1.001e-3), abs=1e-8)
        h = 1e-6
        fd = (brillouin(j, 0.5 + h) - brillouin(j, 0.5 - h)) / (2 * h)
        assert brillouin_derivative(j, 0.5) == pytest.approx(fd, rel=1e-6)


def test_brillouin_inverse_rejects_boundary():
    with pytest.raises(ValueError):
        brillouin_inverse(1.5, 1.0)
    assert brillouin_inverse(1.5, 0.0) == 0.0


def test_mep_weights_mean():
    p, lam = mep_weights(2.5, 0.4)
    m_over_j = (2.5 - np.arange(6)) / 2.5
    assert p.sum() == pytest.approx(1.0)
    assert m_over_j @ p == pytest.approx(0.4, abs=1e-12)
    assert lam > 0


# ------------- Λ_J -------------
def test_mep_su2_half_spin_is_effective_state():
    v = BlochVector(0.3, -0.1, 0.5)
    sol = mep_su2(0.5, v)
    assert np.allclose(sol.state.matrix, DensityMatrix.from_bloch(v).matrix, atol=1e-10)
    assert sol.converged


def test_mep_su2_geometric_weights():
    j = 2.5
    sol = mep_su2(j, BlochVector(0.0, 0.0, 0.4))
    p = np.asarray(sol.diagnostics["p_m"])
    ratios = p[1:] / p[:-1]
    # p_{m−1}/p_m = exp(−λ/j) で一定
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    assert ratios[0] == pytest.approx(math.exp(-sol.diagnostics["lambda"] / j), rel=1e-12)
    tilted = mep_su2(j, BlochVector(0.2, -0.2, 0.2))
    q = np.asarray(tilted.diagnostics["p_m"])
    assert np.allclose(q[1:] / q[:-1], q[1] / q[0], rtol=1e-12)
    assert np.allclose(np.sort(np.linalg.eigvalsh(tilted.state.matrix))[::-1], q, atol=1e-10)


def test_mep_su2_special_points():
    center = mep_su2(3.5, BlochVector(0.0, 0.0, 0.0))
    assert np.allclose(center.state.matrix, np.eye(8) / 8)
    assert center.entropy == pytest.approx(math.log(8))

    edge = mep_su2(1.5, BlochVector(0.0, 1.0, 0.0))
    assert edge.boundary
    assert edge.converged
    assert edge.entropy == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        mep_su2(0.7, BlochVector(0.0, 0.0, 0.3))


@seed(33)
@settings(max_examples=30)
@given(blochs, st.sampled_from([1.5, 2.5, 4.5]))
def test_mep_su2_reproduces_effective_state(v, j):
    sol = mep_su2(j, v)
    out = make_su2_channel(j).forward(sol.state)
    assert np.allclose(out, DensityMatrix.from_bloch(v).matrix, atol=1e-9)


def test_mep_pm_curve_endpoints():
    curve = mep_pm_curve(1.5, [0.0, 0.5, 1.0])
    assert np.allclose(curve.p[:, 0], 0.25)
    assert np.allclose(curve.p[:, 2], [1, 0, 0, 0])
    assert curve.method == "MEP"


# ------------- Λ_BnS -------------
def test_mep_bns_at_maximally_mixed():
    sol = mep_bns(DensityMatrix.maximally_mixed(2))
    assert np.allclose(sol.state.matrix, np.diag([0.5, 1 / 6, 1 / 6, 1 / 6]), atol=1e-10)
    assert sol.diagnostics["Z"] == pytest.approx(2 * math.sqrt(3))
    assert sol.multipliers[2] == pytest.approx(-0.5 * math.log(3))


@seed(34)
@settings(max_examples=30)
@given(blochs)
def test_mep_bns_structure(v):
    rho = DensityMatrix.from_bloch(v)
    sol = mep_bns(rho)
    m, r = sol.state.matrix, rho.matrix
    assert sol.residual < 1e-10
    assert m[0, 0].real == pytest.approx(r[0, 0].real, abs=1e-9)
    assert m[1, 1].real == pytest.approx(r[1, 1].real / 3, abs=1e-9)
    assert m[0, 1] == pytest.approx(r[0, 1] / math.sqrt(3), abs=1e-9)
    z = sol.diagnostics["Z"]
    assert m[1, 2].real - bns_square_pure(rho) == pytest.approx(1 / (2 * z * z * r[0, 0].real), abs=1e-8)


@seed(35)
@settings(max_examples=20)
@given(blochs)
def test_mep_entropy_exceeds_aam(v):
    rho = DensityMatrix.from_bloch(v)
    assert mep_bns(rho).entropy >= von_neumann_entropy(aam_bns_pure(rho).state) - 1e-10


def test_mep_bns_rejects_non_qubit():
    with pytest.raises(ValueError):
        mep_bns(DensityMatrix.maximally_mixed(3))


# ------------- 汎用ソルバ -------------
def test_generic_solver_on_partial_trace_gives_product_state():
    rho = DensityMatrix.from_bloch(BlochVector(0.2, -0.4, 0.1))
    channel = make_partial_trace_channel(2, 3)
    obs, targets = tomographic_targets(rho)
    sol = mep_generic(channel, obs, targets, tol=1e-12)
    assert sol.converged
    assert np.allclose(sol.state.matrix, np.kron(rho.matrix, np.eye(3) / 3), atol=1e-10)


def test_generic_solver_matches_closed_form_bns():
    rho = DensityMatrix.from_bloch(BlochVector(-0.1, 0.3, 0.2))
    obs, targets = tomographic_targets(rho)
    generic = mep_generic(make_bns_channel(), obs, targets)
    assert np.allclose(generic.state.matrix, mep_bns(rho).state.matrix, atol=1e-8)


def test_generic_solver_argument_check():
    with pytest.raises(ValueError):
        mep_generic(make_bns_channel(), [PAULI[2]], [0.1, 0.2])


def test_log_partition_gradient(rng):
    channel = make_bns_channel()
    obs = [PAULI[i] for i in range(3)]
    Q = [channel.dual(o) for o in obs]
    lam = rng.normal(scale=0.8, size=3)
    psi = gibbs_state(channel, obs, lam)
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (log_partition(channel, obs, lam + e) - log_partition(channel, obs, lam - e)) / (2 * h)
        assert fd == pytest.approx(-np.trace(Q[i] @ psi).real, abs=1e-6)


def test_tomographic_targets_for_qutrit():
    rho = DensityMatrix.maximally_mixed(3)
    obs, targets = tomographic_targets(rho)
    assert len(obs) == 8
    assert np.allclose(targets[:2], 1 / 3)
    assert np.allclose(targets[2:], 0.0)


def test_mep_assign_dispatch():
    rho = DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 0.3))
    assert mep_assign("bns", rho).state.dim == 4
    assert mep_assign("su2", rho, j=2.5).state.dim == 6
    assert mep_assign("ptrace", rho, env_dim=2).state.dim == 4
    with pytest.raises(ValueError):
        mep_assign("unknown", rho)


def test_solution_to_json():
    data = mep_bns(DensityMatrix.maximally_mixed(2)).to_json()
    assert data["method"] == "MEP"
    assert data["converged"] is True
    assert len(data["multipliers"]) == 3


# ------------- 境界（純粋に近い目標） -------------
def test_is_near_pure():
    assert is_near_pure(DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 1.0)))
    assert is_near_pure(DensityMatrix.from_bloch(BlochVector(0.0, 1.0 - 1e-7, 0.0)))
    assert not is_near_pure(DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 0.99)))
    assert is_near_pure(DensityMatrix.from_array(np.diag([0.5, 0.5, 0.0])))
    assert not is_near_pure(DensityMatrix.maximally_mixed(3))


def test_partial_trace_pure_target_reports_boundary():
    rho = DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 1.0))
    sol = mep_assign("ptrace", rho, env_dim=2)
    assert sol.boundary
    assert np.allclose(sol.state.matrix, np.kron(rho.matrix, np.eye(2) / 2), atol=1e-6)
    assert sol.to_json()["boundary"] is True
    interior = mep_assign("ptrace", DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 0.5)), env_dim=2)
    assert not interior.boundary


def test_bns_pure_target_reports_boundary():
    sol = mep_bns(DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 1.0)))
    assert sol.boundary
    assert sol.state.matrix[0, 0].real == pytest.approx(1.0, abs=1e-6)
    assert not mep_bns(DensityMatrix.from_bloch(BlochVector(0.0, 0.0, 0.5))).boundary


def test_su2_near_pure_target_reports_boundary():
    near = mep_su2(1.5, BlochVector(0.0, 0.0, 1.0 - 1e-7))
    assert near.boundary
    p = np.asarray(near.diagnostics["p_m"])
    assert p.sum() == pytest.approx(1.0)
    assert p[0] > 0.99
    assert not mep_su2(1.5, BlochVector(0.0, 0.0, 0.9)).boundary
