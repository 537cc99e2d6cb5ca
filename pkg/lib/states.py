# lib/states.py
# -*- coding: utf-8 -*-
"""状態表現と線形代数の基本操作

- DensityMatrix / PureState / BlochVector / SpinOperators
- トレース距離・エルミート行列の指数・部分トレース
- ランダム状態の生成（Haar 純粋状態・誘導混合状態・ブロッホ球一様分布）

エルミート行列の関数はすべて固有値分解で計算する。
"""
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from lib.errors import DimensionMismatch, StateValidationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
NORM_TOL = 1e-12

ArrayLike = Union["DensityMatrix", np.ndarray]


# ─────────────── 型 ───────────────
@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """エルミート・単位トレース・半正定値の D×D 複素行列"""
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateValidationError(f"正方行列ではありません: shape={m.shape}")
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > HERMITIAN_TOL:
            raise StateValidationError(f"エルミートではありません (max|M-M†|={herm:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateValidationError(f"トレースが1ではありません (tr={tr:.15f})")
        w_min = float(np.linalg.eigvalsh(m).min())
        if w_min < PSD_TOL:
            raise StateValidationError(f"半正定値ではありません (最小固有値={w_min:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_array(cls, m: np.ndarray) -> "DensityMatrix":
        """数値誤差を吸収して構築（エルミート化＋トレース正規化）"""
        m = np.asarray(m, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real)

    @classmethod
    def from_bloch(cls, r: "BlochVector") -> "DensityMatrix":
        """ρ = ½(I + r⃗·σ⃗)、すなわち ρ01 = (x − iy)/2"""
        x, y, z = r.x, r.y, r.z
        return cls(0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]]))

    @classmethod
    def from_pure(cls, psi: "PureState") -> "DensityMatrix":
        c = psi.amplitudes
        return cls.from_array(np.outer(c, c.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True, eq=False)
class PureState:
    """正規化された振幅ベクトル"""
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.amplitudes, dtype=complex).reshape(-1)
        norm = float(np.sum(np.abs(c) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise StateValidationError(f"正規化されていません (Σ|c|²={norm:.15f})")
        c.setflags(write=False)
        object.__setattr__(self, "amplitudes", c)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True, eq=False)
class BlochVector:
    """量子ビット有効状態のブロッホベクトル"""
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.x ** 2 + self.y ** 2 + self.z ** 2 > 1.0 + 1e-12:
            raise StateValidationError(f"ブロッホ球の外側です: {self}")

    @classmethod
    def from_array(cls, v) -> "BlochVector":
        x, y, z = (float(a) for a in v)
        return cls(x, y, z)

    @classmethod
    def from_state(cls, rho: ArrayLike) -> "BlochVector":
        """2×2 状態から r_i = tr(ρσ_i)"""
        m = as_matrix(rho)
        if m.shape != (2, 2):
            raise DimensionMismatch(f"量子ビット状態ではありません: shape={m.shape}")
        return cls(2 * m[0, 1].real, -2 * m[0, 1].imag, (m[0, 0] - m[1, 1]).real)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True, eq=False)
class SpinOperators:
    """スピン j の角運動量演算子（ħ = 1）。基底順は m = j, j−1, …, −j"""
    j: float
    jx: np.ndarray = field(repr=False)
    jy: np.ndarray = field(repr=False)
    jz: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.jz.shape[0]

    @property
    def m_values(self) -> np.ndarray:
        return self.j - np.arange(self.dim)

    def components(self) -> np.ndarray:
        """(3, D, D) 配列 [Jx, Jy, Jz]"""
        return np.stack([self.jx, self.jy, self.jz])

    def along(self, n: np.ndarray) -> np.ndarray:
        """n̂·J⃗"""
        n = np.asarray(n, dtype=float)
        return n[0] * self.jx + n[1] * self.jy + n[2] * self.jz

    def rotation(self, axis: np.ndarray, angle: float) -> np.ndarray:
        """R = exp(−iθ J_n̂)"""
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        return expm(-1j * angle * self.along(axis))


# ─────────────── 基本操作 ───────────────
def as_matrix(x: ArrayLike) -> np.ndarray:
    """DensityMatrix でも ndarray でも行列として扱う"""
    if isinstance(x, DensityMatrix):
        return x.matrix
    return np.asarray(x, dtype=complex)


def check_hermitian(h: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise DimensionMismatch(f"正方行列ではありません: shape={h.shape}")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if np.max(np.abs(h - np.swapaxes(h.conj(), -1, -2))) > tol * scale:
        raise StateValidationError("エルミートではない行列が渡されました")
    return h


def hermitian_function(h: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """エルミート行列に固有値分解経由で関数を適用"""
    h = check_hermitian(h)
    w, v = np.linalg.eigh(h)
    return (v * f(w)) @ v.conj().T


def hermitian_exp(h: np.ndarray) -> np.ndarray:
    """exp(h)（固有値分解）"""
    return hermitian_function(h, np.exp)


def trace_norm(a: np.ndarray) -> np.ndarray:
    """‖a‖₁（エルミート行列。末尾2軸でバッチ可）"""
    return np.sum(np.abs(np.linalg.eigvalsh(np.asarray(a, dtype=complex))), axis=-1)


def trace_distance(a: ArrayLike, b: ArrayLike) -> float:
    """½‖a − b‖₁"""
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"次元が一致しません: {ma.shape} vs {mb.shape}")
    return float(0.5 * trace_norm(ma - mb))


def von_neumann_entropy(state: ArrayLike) -> float:
    """S(ρ) = −tr ρ ln ρ（nats）"""
    w = np.linalg.eigvalsh(as_matrix(state))
    w = w[w > 1e-300]
    return float(-np.sum(w * np.log(w)))


def partial_trace_array(m: np.ndarray, dS: int, dE: int, which: str = "E") -> np.ndarray:
    """部分トレース（末尾2軸、バッチ可）。which='E' で環境側を落とす"""
    m = np.asarray(m, dtype=complex)
    if m.shape[-1] != dS * dE or m.shape[-2] != dS * dE:
        raise DimensionMismatch(f"次元 {m.shape[-1]} は dS·dE = {dS}·{dE} と一致しません")
    t = m.reshape(m.shape[:-2] + (dS, dE, dS, dE))
    if which == "E":
        return np.einsum("...iaja->...ij", t)
    if which == "S":
        return np.einsum("...aiaj->...ij", t)
    raise ValueError(f"which は 'S' か 'E': {which}")


def partial_trace(state: DensityMatrix, dS: int, dE: int, which: str = "E") -> DensityMatrix:
    """DensityMatrix の部分トレース"""
    return DensityMatrix.from_array(partial_trace_array(state.matrix, dS, dE, which))


# ─────────────── 乱数状態 ───────────────
def complex_gaussian(shape, rng: np.random.Generator) -> np.ndarray:
    """標準複素ガウス"""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def haar_pure_batch(D: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, D) の Haar 純粋状態"""
    c = complex_gaussian((n, D), rng)
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def haar_pure(D: int, rng: np.random.Generator) -> PureState:
    if D < 1:
        raise ValueError(f"D は1以上: {D}")
    return PureState(haar_pure_batch(D, 1, rng)[0])


def induced_mixed_batch(D: int, dE: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, D, D) の誘導測度状態: D·dE の Haar 純粋状態から環境をトレースアウト"""
    g = complex_gaussian((n, D, dE), rng)
    rho = g @ np.swapaxes(g.conj(), 1, 2)
    tr = np.trace(rho, axis1=1, axis2=2).real
    return rho / tr[:, None, None]


def induced_mixed(D: int, dE: int, rng: np.random.Generator) -> DensityMatrix:
    if D < 1 or dE < 1:
        raise ValueError(f"D, dE は1以上: D={D}, dE={dE}")
    return DensityMatrix.from_array(induced_mixed_batch(D, dE, 1, rng)[0])


def uniform_bloch_ball_batch(n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, 3) のブロッホ球内一様点（半径の累積分布 r³）"""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / 3.0)
    return v * r[:, None]


def uniform_bloch_ball(rng: np.random.Generator) -> BlochVector:
    return BlochVector.from_array(uniform_bloch_ball_batch(1, rng)[0])


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar ランダムユニタリ"""
    if n == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1), dtype=complex)
    return unitary_group.rvs(n, random_state=rng)


def random_density_matrix(D: int, rng: np.random.Generator, rank: int = 0) -> np.ndarray:
    """テスト用のランダム密度行列（rank=0 でフルランク）"""
    return induced_mixed_batch(D, rank or D, 1, rng)[0]


# ─────────────── 角運動量 ───────────────
def is_half_integer(j: float) -> bool:
    two_j = 2 * j
    return abs(two_j - round(two_j)) < 1e-12 and round(two_j) >= 1


def angular_momentum(j: float) -> SpinOperators:
    """昇降演算子から Jx, Jy, Jz を構成"""
    if not is_half_integer(j):
        raise ValueError(f"j は 1/2 以上の半整数: {j}")
    j = round(2 * j) / 2
    D = int(round(2 * j)) + 1
    m = j - np.arange(D)
    jp = np.zeros((D, D), dtype=complex)
    # J+|m⟩ = √(j(j+1) − m(m+1)) |m+1⟩、m+1 は一つ上の行
    for i in range(1, D):
        jp[i - 1, i] = np.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    jz = np.diag(m).astype(complex)
    return SpinOperators(j=j, jx=jx, jy=jy, jz=jz)


PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
