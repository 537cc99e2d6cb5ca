# tests/test_states.py
# -*- coding: utf-8 -*-
import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import kstest

from lib.errors import DimensionMismatch, StateValidationError
from lib.states import (
    BlochVector,
    DensityMatrix,
    PureState,
    angular_momentum,
    complex_gaussian,
    haar_pure,
    haar_pure_batch,
    hermitian_exp,
    induced_mixed,
    induced_mixed_batch,
    partial_trace,
    partial_trace_array,
    random_density_matrix,
    random_unitary,
    trace_distance,
    trace_norm,
    uniform_bloch_ball,
    uniform_bloch_ball_batch,
    von_neumann_entropy,
)

# 各成分 |x| ≤ 0.57 ならブロッホ球の内側
blochs = st.tuples(*(st.floats(-0.57, 0.57, allow_nan=False) for _ in range(3))).map(lambda v: BlochVector(*v))
spins = st.sampled_from([0.5, 1.0, 1.5, 2.0, 2.5, 3.5, 4.5])


# ------------- DensityMatrix -------------
def test_density_matrix_rejects_invalid():
    with pytest.raises(StateValidationError):
        DensityMatrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(StateValidationError):
        DensityMatrix(np.eye(2))
    with pytest.raises(StateValidationError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(StateValidationError):
        DensityMatrix(np.ones((2, 3)) / 2)


def test_density_matrix_is_read_only():
    rho = DensityMatrix.maximally_mixed(3)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_pure_state_normalization():
    PureState(np.array([1.0, 1.0j]) / np.sqrt(2))
    with pytest.raises(StateValidationError):
        PureState(np.array([1.0, 1.0]))


def test_bloch_vector_outside_ball():
    with pytest.raises(StateValidationError):
        BlochVector(0.8, 0.8, 0.0)


@seed(1)
@given(blochs)
def test_bloch_round_trip(v):
    rho = DensityMatrix.from_bloch(v)
    back = BlochVector.from_state(rho)
    assert np.allclose(back.as_array(), v.as_array(), atol=1e-14)
    assert np.isclose(rho.purity(), 0.5 * (1 + v.radius ** 2))


def test_bloch_convention_off_diagonal():
    rho = DensityMatrix.from_bloch(BlochVector(0.2, 0.4, 0.0))
    assert np.isclose(rho.matrix[0, 1], (0.2 - 0.4j) / 2)


# ------------- トレース距離 -------------
def test_trace_distance_examples():
    zero = DensityMatrix(np.diag([1.0, 0.0]))
    one = DensityMatrix(np.diag([0.0, 1.0]))
    assert trace_distance(zero, zero) == pytest.approx(0.0, abs=1e-15)
    assert trace_distance(zero, one) == pytest.approx(1.0)
    with pytest.raises(DimensionMismatch):
        trace_distance(zero, DensityMatrix.maximally_mixed(3))


@seed(2)
@given(blochs, blochs)
def test_qubit_trace_distance_is_half_bloch_distance(a, b):
    expected = 0.5 * np.linalg.norm(a.as_array() - b.as_array())
    assert trace_distance(DensityMatrix.from_bloch(a), DensityMatrix.from_bloch(b)) == pytest.approx(expected, abs=1e-12)


@seed(3)
@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 6))
def test_trace_distance_metric_properties(s, D):
    g = np.random.default_rng(s)
    a, b, c = (random_density_matrix(D, g) for _ in range(3))
    ab, ba = trace_distance(a, b), trace_distance(b, a)
    assert ab == pytest.approx(ba, abs=1e-13)
    assert 0.0 <= ab <= 1.0 + 1e-12
    assert ab <= trace_distance(a, c) + trace_distance(c, b) + 1e-12


@seed(4)
@given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10, allow_nan=False)))
def test_trace_norm_of_symmetric_matrix(a):
    h = a + a.T
    assert trace_norm(h) == pytest.approx(np.sum(np.abs(np.linalg.eigvalsh(h))), rel=1e-12, abs=1e-12)


# ------------- 行列関数 -------------
def test_hermitian_exp():
    assert np.allclose(hermitian_exp(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(hermitian_exp(np.diag([0.3, -1.2])), np.diag(np.exp([0.3, -1.2])))
    with pytest.raises(StateValidationError):
        hermitian_exp(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_hermitian_exp_reproduces_diagonal_gibbs_state():
    # e^{−2λ_z} = 3 で ○ = 1/2
    lz = -0.5 * np.log(3.0)
    m = hermitian_exp(-lz * np.diag([1.0, -1.0, -1.0, -1.0]))
    m /= np.trace(m).real
    assert np.allclose(m, np.diag([0.5, 1 / 6, 1 / 6, 1 / 6]))


def test_von_neumann_entropy():
    assert von_neumann_entropy(DensityMatrix.maximally_mixed(4)) == pytest.approx(np.log(4))
    assert von_neumann_entropy(DensityMatrix(np.diag([1.0, 0.0]))) == pytest.approx(0.0, abs=1e-15)


# ------------- 部分トレース -------------
@seed(5)
@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_partial_trace_of_product(s, dS, dE):
    g = np.random.default_rng(s)
    a, b = random_density_matrix(dS, g), random_density_matrix(dE, g)
    prod = np.kron(a, b)
    assert np.allclose(partial_trace_array(prod, dS, dE, "E"), a, atol=1e-13)
    assert np.allclose(partial_trace_array(prod, dS, dE, "S"), b, atol=1e-13)


def test_partial_trace_examples():
    bell = np.zeros(4, dtype=complex)
    bell[[0, 3]] = 1 / np.sqrt(2)
    state = DensityMatrix(np.outer(bell, bell.conj()))
    assert np.allclose(partial_trace(state, 2, 2, "E").matrix, np.eye(2) / 2)
    assert np.allclose(partial_trace(state, 2, 2, "S").matrix, np.eye(2) / 2)

    rho = DensityMatrix.from_bloch(BlochVector(0.1, -0.2, 0.4))
    lifted = DensityMatrix(np.kron(rho.matrix, np.eye(3) / 3))
    assert np.allclose(partial_trace(lifted, 2, 3).matrix, rho.matrix)

    with pytest.raises(DimensionMismatch):
        partial_trace_array(np.eye(6) / 6, 2, 2)
    with pytest.raises(ValueError):
        partial_trace_array(np.eye(4) / 4, 2, 2, "X")


@seed(9)
@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(1, 3),
       st.floats(-2.0, 2.0, allow_nan=False), st.floats(-2.0, 2.0, allow_nan=False))
def test_partial_trace_is_linear(s, dS, dE, c1, c2):
    g = np.random.default_rng(s)
    n = dS * dE
    a, b = complex_gaussian((n, n), g), complex_gaussian((n, n), g)
    lhs = partial_trace_array(c1 * a + 1j * c2 * b, dS, dE)
    rhs = c1 * partial_trace_array(a, dS, dE) + 1j * c2 * partial_trace_array(b, dS, dE)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_partial_trace_batched(rng):
    batch = induced_mixed_batch(6, 2, 5, rng)
    out = partial_trace_array(batch, 2, 3)
    assert out.shape == (5, 2, 2)
    assert np.allclose(out[3], partial_trace_array(batch[3], 2, 3))


# ------------- 乱数状態 -------------
def test_random_states_are_valid(rng):
    batch = induced_mixed_batch(4, 3, 50, rng)
    assert np.allclose(np.trace(batch, axis1=1, axis2=2), 1.0)
    assert np.linalg.eigvalsh(batch).min() > -1e-12
    psi = haar_pure(5, rng)
    assert psi.dim == 5
    u = random_unitary(3, rng)
    assert np.allclose(u @ u.conj().T, np.eye(3))
    with pytest.raises(ValueError):
        haar_pure(0, rng)


def test_uniform_bloch_ball_radius_law(rng):
    v = uniform_bloch_ball_batch(40_000, rng)
    r = np.linalg.norm(v, axis=1)
    assert r.max() <= 1.0
    # P(r ≤ 1/2) = 1/8
    assert np.mean(r <= 0.5) == pytest.approx(0.125, abs=0.01)


def test_single_draws_follow_the_generator():
    rho = induced_mixed(4, 2, np.random.default_rng(3))
    assert rho.dim == 4
    # 環境次元 2 なら階数は高々 2
    assert np.sum(np.linalg.eigvalsh(rho.matrix) > 1e-10) == 2
    again = induced_mixed(4, 2, np.random.default_rng(3))
    assert np.array_equal(rho.matrix, again.matrix)
    v = uniform_bloch_ball(np.random.default_rng(11))
    assert v.radius < 1.0
    assert np.array_equal(v.as_array(), uniform_bloch_ball(np.random.default_rng(11)).as_array())
    with pytest.raises(ValueError):
        induced_mixed(2, 0, np.random.default_rng(0))


def test_uniform_bloch_ball_moments(rng):
    v = uniform_bloch_ball_batch(40_000, rng)
    assert np.mean(np.sum(v ** 2, axis=1)) == pytest.approx(3 / 5, abs=0.01)
    assert np.allclose(v.mean(axis=0), 0.0, atol=0.015)


def test_haar_states_are_unitarily_invariant():
    g = np.random.default_rng(17)
    psi = haar_pure_batch(3, 20_000, g)
    u = random_unitary(3, g)
    rotated = psi @ u.T
    # |ψ_0|² ~ Beta(1, D−1)、CDF = 1 − (1 − x)^{D−1}
    for amps in (psi, rotated):
        w = np.abs(amps[:, 0]) ** 2
        assert kstest(w, lambda x: 1.0 - (1.0 - x) ** 2).pvalue > 0.001


def test_prior_means_are_maximally_mixed():
    g = np.random.default_rng(23)
    psi = haar_pure_batch(4, 20_000, g)
    haar_mean = np.einsum("na,nb->ab", psi, psi.conj()) / psi.shape[0]
    assert np.allclose(haar_mean, np.eye(4) / 4, atol=0.01)
    induced = induced_mixed_batch(4, 3, 20_000, g)
    assert np.allclose(induced.mean(axis=0), np.eye(4) / 4, atol=0.01)


def test_induced_mean_purity():
    # E[tr ρ²] = (D + dE) / (D dE + 1)、D = dE = 4 で 8/17
    batch = induced_mixed_batch(4, 4, 20_000, np.random.default_rng(29))
    purity = np.einsum("nab,nba->n", batch, batch).real
    assert purity.mean() == pytest.approx(8 / 17, abs=0.005)


# ------------- 角運動量 -------------
@seed(6)
@given(spins)
def test_angular_momentum_algebra(j):
    s = angular_momentum(j)
    jx, jy, jz = s.jx, s.jy, s.jz
    assert np.allclose(jx @ jy - jy @ jx, 1j * jz, atol=1e-10)
    assert np.allclose(jy @ jz - jz @ jy, 1j * jx, atol=1e-10)
    assert np.allclose(jz @ jx - jx @ jz, 1j * jy, atol=1e-10)
    assert np.allclose(jx @ jx + jy @ jy + jz @ jz, j * (j + 1) * np.eye(s.dim), atol=1e-10)
    assert np.allclose(np.diag(jz).real, s.m_values)


def test_angular_momentum_rejects_non_half_integer():
    with pytest.raises(ValueError):
        angular_momentum(0.3)
    with pytest.raises(ValueError):
        angular_momentum(0.0)


def test_rotation_maps_jz_to_jx():
    s = angular_momentum(1.5)
    R = s.rotation([0.0, 1.0, 0.0], np.pi / 2)
    assert np.allclose(R @ s.jz @ R.conj().T, s.jx, atol=1e-10)
