# tests/test_channels.py
# -*- coding: utf-8 -*-
import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from lib.channels import (
    BNS_ACTION_TABLE,
    basis_coefficients,
    bns_forward_compact,
    bns_forward_table,
    bns_symmetry_unitary,
    check_symmetry,
    from_coefficients,
    hermitian_basis,
    make_bns_channel,
    make_channel,
    make_partial_trace_channel,
    make_su2_channel,
    symmetry_average,
    verify_bns_table,
)
from lib.errors import DimensionMismatch
from lib.states import DensityMatrix, angular_momentum, random_density_matrix, random_unitary

CHANNELS = {
    "ptrace-2x3": lambda: make_partial_trace_channel(2, 3),
    "bns": make_bns_channel,
    "su2-3/2": lambda: make_su2_channel(1.5),
    "su2-5/2": lambda: make_su2_channel(2.5),
}


@pytest.fixture(params=sorted(CHANNELS))
def channel(request):
    return CHANNELS[request.param]()


# ------------- 基底 -------------
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_hermitian_basis_is_orthonormal(n):
    G = hermitian_basis(n)
    gram = np.einsum("aij,bji->ab", G, G)
    assert G.shape == (n * n, n, n)
    assert np.allclose(gram, np.eye(n * n))
    assert np.allclose(G, np.swapaxes(G.conj(), 1, 2))


def test_basis_coefficients_round_trip(rng):
    m = random_density_matrix(3, rng)
    assert np.allclose(from_coefficients(basis_coefficients(m, 3), 3), m)


# ------------- チャネル共通 -------------
def test_forward_matches_transfer_matrix(channel, rng):
    m = random_density_matrix(channel.in_dim, rng)
    via_transfer = from_coefficients(basis_coefficients(m, channel.in_dim) @ channel.transfer.T, channel.out_dim)
    assert np.allclose(channel.forward(m), via_transfer, atol=1e-12)


def test_forward_preserves_trace_and_positivity(channel, rng):
    for _ in range(5):
        out = channel.forward(random_density_matrix(channel.in_dim, rng))
        assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(out).min() > -1e-12


def test_dual_satisfies_trace_duality(channel, rng):
    for _ in range(5):
        psi = random_density_matrix(channel.in_dim, rng)
        o = random_density_matrix(channel.out_dim, rng) - np.eye(channel.out_dim) / channel.out_dim
        lhs = np.trace(o @ channel.forward(psi))
        rhs = np.trace(channel.dual(o) @ psi)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_dual_of_identity_is_identity(channel):
    assert np.allclose(channel.dual(np.eye(channel.out_dim)), np.eye(channel.in_dim), atol=1e-12)


def test_forward_dimension_checks(channel):
    with pytest.raises(DimensionMismatch):
        channel.forward(np.eye(channel.in_dim + 1))
    with pytest.raises(DimensionMismatch):
        channel.dual(np.eye(channel.out_dim + 1))


def test_forward_is_batched(channel, rng):
    batch = np.array([random_density_matrix(channel.in_dim, rng) for _ in range(4)])
    out = channel.forward(batch)
    assert out.shape == (4, channel.out_dim, channel.out_dim)
    assert np.allclose(out[2], channel.forward(batch[2]))


def test_to_json_shape():
    data = make_partial_trace_channel(2, 2).to_json()
    assert data["label"] == "ptrace"
    assert data["params"] == {"dS": 2, "dE": 2}
    assert np.asarray(data["transfer"]).shape == (4, 16, 2)


# ------------- 部分トレース -------------
@seed(11)
@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_partial_trace_dual_is_tensor_identity(s, dE):
    g = np.random.default_rng(s)
    o = random_density_matrix(2, g)
    ch = make_partial_trace_channel(2, dE)
    assert np.allclose(ch.dual(o), np.kron(o, np.eye(dE)), atol=1e-12)


def test_partial_trace_channel_rejects_bad_dims():
    with pytest.raises(ValueError):
        make_partial_trace_channel(0, 2)


# ------------- Λ_BnS -------------
def test_bns_table_matches_compact_form():
    assert verify_bns_table() < 1e-12
    m = np.arange(16, dtype=complex).reshape(4, 4) * (1 + 0.5j)
    assert np.allclose(bns_forward_table(m), bns_forward_compact(m))


def test_bns_examples():
    ch = make_bns_channel()
    assert np.allclose(ch.forward(np.diag([1.0, 0, 0, 0])), np.diag([1.0, 0.0]))
    assert np.allclose(ch.forward(np.eye(4) / 4), np.diag([0.25, 0.75]))
    plus = np.array([1.0, 1.0, 1.0, 1.0]) / 2
    out = ch.forward(np.outer(plus, plus))
    assert out[0, 1] == pytest.approx(3 / (4 * np.sqrt(3)))

    # |01⟩ と |10⟩ はどちらも |1⟩ に潰れる。部分トレースでは区別される
    e01, e10 = np.diag([0.0, 1.0, 0, 0]), np.diag([0.0, 0, 1.0, 0])
    one = np.diag([0.0, 1.0])
    assert np.allclose(ch.forward(e01), one)
    assert np.allclose(ch.forward(e10), one)
    pt = make_partial_trace_channel(2, 2)
    assert np.allclose(pt.forward(e01), np.diag([1.0, 0.0]))
    assert np.allclose(pt.forward(e10), one)
    assert not np.allclose(pt.forward(e01), pt.forward(e10))
    assert not np.allclose(ch.transfer, pt.transfer)


def test_tampered_bns_table_is_rejected():
    table = dict(BNS_ACTION_TABLE)
    table[(0, 1)] = np.zeros((2, 2), dtype=complex)
    assert verify_bns_table(table) > 0.1
    with pytest.raises(ValueError):
        make_bns_channel(table)
    missing = dict(BNS_ACTION_TABLE)
    del missing[(3, 3)]
    with pytest.raises(ValueError):
        make_bns_channel(missing)


def test_bns_symmetry_unitaries(rng):
    ch = make_bns_channel()
    for _ in range(3):
        U = bns_symmetry_unitary(random_unitary(2, rng))
        assert np.allclose(U @ U.conj().T, np.eye(4))
        passed, worst = check_symmetry(ch, U, 5, rng)
        assert passed, worst


def test_non_symmetry_is_detected(rng):
    ch = make_bns_channel()
    swap = np.eye(4)[[1, 0, 2, 3]]
    passed, worst = check_symmetry(ch, swap, 5, rng)
    assert not passed
    assert worst > 1e-3


# ------------- Λ_J -------------
def test_su2_maps_highest_weight_to_north_pole():
    ch = make_su2_channel(2.5)
    top = np.zeros((6, 6))
    top[0, 0] = 1.0
    assert np.allclose(ch.forward(top), np.diag([1.0, 0.0]))
    assert np.allclose(ch.forward(np.eye(6) / 6), np.eye(2) / 2)


def test_su2_half_is_identity_channel(rng):
    ch = make_su2_channel(0.5)
    m = random_density_matrix(2, rng)
    assert np.allclose(ch.forward(m), m)


def test_su2_is_rotation_covariant(rng):
    j = 1.5
    ch = make_su2_channel(j)
    spin = angular_momentum(j)
    psi = random_density_matrix(spin.dim, rng)
    R = spin.rotation([0.0, 0.0, 1.0], 0.7)
    r2 = angular_momentum(0.5).rotation([0.0, 0.0, 1.0], 0.7)
    lhs = ch.forward(R @ psi @ R.conj().T)
    rhs = r2 @ ch.forward(psi) @ r2.conj().T
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_su2_rejects_bad_spin():
    with pytest.raises(ValueError):
        make_su2_channel(0.75)


# ------------- その他 -------------
def test_make_channel_by_name():
    assert make_channel("ptrace", dS=2, dE=3).in_dim == 6
    assert make_channel("bns").out_dim == 2
    assert make_channel("su2", j=2.5).in_dim == 6
    with pytest.raises(ValueError):
        make_channel("unknown")


def test_symmetry_average(rng):
    psi = random_density_matrix(3, rng)
    same = symmetry_average(psi, np.array([np.eye(3)] * 4))
    assert np.allclose(same, psi)
    phases = np.array([np.diag(np.exp(2j * np.pi * np.array([0, k, 2 * k]) / 3)) for k in range(3)])
    dephased = symmetry_average(psi, phases)
    assert np.allclose(dephased, np.diag(np.diag(psi)))
    with pytest.raises(DimensionMismatch):
        symmetry_average(psi, np.array([np.eye(2)]))
    assert isinstance(DensityMatrix.from_array(dephased), DensityMatrix)
