# lib/channels.py
# -*- coding: utf-8 -*-
"""粗視化チャネル

チャネルはエルミート正規直交基底上の (d²)×(D²) 実転送行列で表す。
双対写像 Λ* はその転置。高速なバッチ順写像は各チャネルが別途持つ。
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from lib.errors import DimensionMismatch
from lib.states import (
    PAULI,
    DensityMatrix,
    angular_momentum,
    as_matrix,
    is_half_integer,
    partial_trace_array,
    random_density_matrix,
    trace_norm,
)
from lib.utils import encode_complex_matrix

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


# ------------- 演算子基底 -------------
@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """tr(G_a G_b) = δ_ab を満たすエルミート基底 (n², n, n)"""
    basis = []
    for k in range(n):
        g = np.zeros((n, n), dtype=complex)
        g[k, k] = 1.0
        basis.append(g)
    for k in range(n):
        for l in range(k + 1, n):
            x = np.zeros((n, n), dtype=complex)
            x[k, l] = x[l, k] = 1 / np.sqrt(2)
            y = np.zeros((n, n), dtype=complex)
            y[k, l] = -1j / np.sqrt(2)
            y[l, k] = 1j / np.sqrt(2)
            basis.extend([x, y])
    out = np.array(basis)
    out.setflags(write=False)
    return out


def basis_coefficients(m: np.ndarray, n: int) -> np.ndarray:
    """c_a = tr(G_a m)（末尾2軸、バッチ可）"""
    return np.einsum("aij,...ji->...a", hermitian_basis(n), m)


def from_coefficients(c: np.ndarray, n: int) -> np.ndarray:
    return np.einsum("...a,aij->...ij", c, hermitian_basis(n))


def transfer_from_map(fn: Callable[[np.ndarray], np.ndarray], in_dim: int, out_dim: int) -> np.ndarray:
    """T_ab = tr(g_a fn(G_b))。エルミート性保存写像なら実数"""
    G = hermitian_basis(in_dim)
    T = np.array([basis_coefficients(fn(G[b]), out_dim) for b in range(in_dim ** 2)]).T
    return np.ascontiguousarray(T.real)


# ─────────────── 型 ───────────────
@dataclass(frozen=True, eq=False)
class CoarseGrainingChannel:
    """粗視化チャネル Λ: D次元 → d次元"""
    label: str
    in_dim: int
    out_dim: int
    transfer: np.ndarray = field(repr=False)
    batch_forward: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    params: Dict[str, Any] = field(default_factory=dict)

    def forward(self, psi) -> np.ndarray:
        """Λ[ψ]（任意の D×D 行列に線形拡張）"""
        m = as_matrix(psi)
        if m.shape[-2:] != (self.in_dim, self.in_dim):
            raise DimensionMismatch(f"{self.label}: 入力次元 {m.shape[-1]} ≠ {self.in_dim}")
        if self.batch_forward is not None:
            return self.batch_forward(m)
        c = basis_coefficients(m, self.in_dim)
        return from_coefficients(c @ self.transfer.T, self.out_dim)

    def forward_state(self, psi: DensityMatrix) -> DensityMatrix:
        return DensityMatrix.from_array(self.forward(psi))

    def dual(self, observable) -> np.ndarray:
        """Λ*[O]: tr(O Λ[ψ]) = tr(Λ*[O] ψ)"""
        o = as_matrix(observable)
        if o.shape[-2:] != (self.out_dim, self.out_dim):
            raise DimensionMismatch(f"{self.label}: 観測量次元 {o.shape[-1]} ≠ {self.out_dim}")
        c = basis_coefficients(o, self.out_dim)
        return from_coefficients(c @ self.transfer, self.in_dim)

    def to_json(self) -> Dict[str, Any]:
        """ラベル・次元・転送行列（行優先の [re, im]）"""
        return {
            "label": self.label,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "params": self.params,
            "basis": "hermitian-orthonormal",
            "transfer": encode_complex_matrix(self.transfer),
        }


# ─────────────── 部分トレース ───────────────
def make_partial_trace_channel(dS: int, dE: int) -> CoarseGrainingChannel:
    """tr_E。双対は O ⊗ I_E"""
    if dS < 1 or dE < 1:
        raise ValueError(f"dS, dE は1以上: dS={dS}, dE={dE}")

    def fwd(m: np.ndarray) -> np.ndarray:
        return partial_trace_array(m, dS, dE, "E")

    T = transfer_from_map(fwd, dS * dE, dS)
    return CoarseGrainingChannel(
        label="ptrace", in_dim=dS * dE, out_dim=dS, transfer=T,
        batch_forward=fwd, params={"dS": dS, "dE": dE},
    )


# ─────────────── Λ_BnS（ぼやけて飽和する検出器） ───────────────
_S3 = 1.0 / np.sqrt(3.0)


def _unit(i: int, j: int) -> np.ndarray:
    e = np.zeros((2, 2), dtype=complex)
    e[i, j] = 1.0
    return e


_ZERO = np.zeros((2, 2), dtype=complex)

# 入力 |a⟩⟨b|（a, b = 00, 01, 10, 11 → 0..3）の像
BNS_ACTION_TABLE: Dict[Tuple[int, int], np.ndarray] = {
    (0, 0): _unit(0, 0),
    (0, 1): _S3 * _unit(0, 1),
    (0, 2): _S3 * _unit(0, 1),
    (0, 3): _S3 * _unit(0, 1),
    (1, 0): _S3 * _unit(1, 0),
    (2, 0): _S3 * _unit(1, 0),
    (3, 0): _S3 * _unit(1, 0),
    (1, 1): _unit(1, 1),
    (2, 2): _unit(1, 1),
    (3, 3): _unit(1, 1),
    (1, 2): _ZERO,
    (1, 3): _ZERO,
    (2, 1): _ZERO,
    (2, 3): _ZERO,
    (3, 1): _ZERO,
    (3, 2): _ZERO,
}


def bns_forward_table(m: np.ndarray, table: Optional[Dict[Tuple[int, int], np.ndarray]] = None) -> np.ndarray:
    """16項目の作用表を線形に拡張"""
    table = BNS_ACTION_TABLE if table is None else table
    out = np.zeros(m.shape[:-2] + (2, 2), dtype=complex)
    for (a, b), img in table.items():
        out = out + m[..., a, b, None, None] * img
    return out


def bns_forward_compact(m: np.ndarray) -> np.ndarray:
    """行列形: [0,0]=ψ00, [0,1]=(ψ01+ψ02+ψ03)/√3, [1,1]=ψ11+ψ22+ψ33"""
    out = np.empty(m.shape[:-2] + (2, 2), dtype=complex)
    out[..., 0, 0] = m[..., 0, 0]
    out[..., 0, 1] = m[..., 0, 1:].sum(axis=-1) * _S3
    out[..., 1, 0] = m[..., 1:, 0].sum(axis=-1) * _S3
    out[..., 1, 1] = m[..., 1, 1] + m[..., 2, 2] + m[..., 3, 3]
    return out


def verify_bns_table(table: Optional[Dict[Tuple[int, int], np.ndarray]] = None,
                     n_samples: int = 8, seed: int = 0) -> float:
    """作用表と行列形の最大差（ランダムな一般行列上）"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        diff = bns_forward_table(m, table) - bns_forward_compact(m)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def make_bns_channel(table: Optional[Dict[Tuple[int, int], np.ndarray]] = None) -> CoarseGrainingChannel:
    """作用表から構成し、行列形と照合する"""
    table = BNS_ACTION_TABLE if table is None else table
    if len(table) != 16:
        raise ValueError(f"作用表は16項目必要です: {len(table)}")
    mismatch = verify_bns_table(table)
    if mismatch > 1e-12:
        raise ValueError(f"Λ_BnS の作用表が行列形と一致しません (max差={mismatch:.3e})")

    T = transfer_from_map(lambda m: bns_forward_table(m, table), 4, 2)
    return CoarseGrainingChannel(
        label="bns", in_dim=4, out_dim=2, transfer=T, batch_forward=bns_forward_compact,
    )


def bns_symmetry_unitary(V: np.ndarray) -> np.ndarray:
    """U = 1 ⊕ 1 ⊕ V（基底 {|0⟩, (0,1,1,1)/√3, 直交補空間}）"""
    V = np.asarray(V, dtype=complex)
    if V.shape != (2, 2):
        raise DimensionMismatch(f"V は 2×2: {V.shape}")
    B = np.array([
        [1, 0, 0, 0],
        [0, _S3, 1 / np.sqrt(2), 1 / np.sqrt(6)],
        [0, _S3, -1 / np.sqrt(2), 1 / np.sqrt(6)],
        [0, _S3, 0, -2 / np.sqrt(6)],
    ], dtype=complex)
    block = np.eye(4, dtype=complex)
    block[2:, 2:] = V
    return B @ block @ B.conj().T


# ─────────────── Λ_J（SU(2) 構造を保つ） ───────────────
def make_su2_channel(j: float) -> CoarseGrainingChannel:
    """Λ_J[ψ] = ½(tr ψ·I + (1/j) Σ tr(ψ J_i) σ_i)"""
    if not is_half_integer(j):
        raise ValueError(f"j は 1/2 以上の半整数: {j}")
    spin = angular_momentum(j)
    J = spin.components()
    D = spin.dim

    def fwd(m: np.ndarray) -> np.ndarray:
        v = np.einsum("kij,...ji->...k", J, m) / spin.j
        tr = np.trace(m, axis1=-2, axis2=-1)
        return 0.5 * (tr[..., None, None] * np.eye(2) + np.einsum("...k,kab->...ab", v, PAULI))

    T = transfer_from_map(fwd, D, 2)
    return CoarseGrainingChannel(
        label="su2", in_dim=D, out_dim=2, transfer=T, batch_forward=fwd, params={"j": spin.j},
    )


# ─────────────── 対称性チェック ───────────────
def check_symmetry(channel: CoarseGrainingChannel, U: np.ndarray, n_samples: int,
                   rng: np.random.Generator) -> Tuple[bool, float]:
    """max ‖Λ[UψU†] − Λ[ψ]‖₁ < 1e-10 なら合格"""
    U = np.asarray(U, dtype=complex)
    if U.shape != (channel.in_dim, channel.in_dim):
        raise DimensionMismatch(f"U の次元 {U.shape} ≠ {channel.in_dim}")
    worst = 0.0
    for _ in range(n_samples):
        psi = random_density_matrix(channel.in_dim, rng)
        diff = channel.forward(U @ psi @ U.conj().T) - channel.forward(psi)
        worst = max(worst, float(trace_norm(diff)))
    passed = worst < SYMMETRY_TOL
    logger.debug(f"対称性チェック {channel.label}: max残差={worst:.3e} → {'OK' if passed else 'NG'}")
    return passed, worst


def make_channel(name: str, **params) -> CoarseGrainingChannel:
    """名前からチャネルを作る（CLI 用）"""
    if name == "ptrace":
        return make_partial_trace_channel(int(params.get("dS", 2)), int(params["dE"]))
    if name == "bns":
        return make_bns_channel()
    if name == "su2":
        return make_su2_channel(float(params["j"]))
    raise ValueError(f"未知のチャネル: {name}")


def symmetry_average(psi, unitaries) -> np.ndarray:
    """(1/N) Σ U ψ U†。Λ の対称群で平均した状態"""
    m = as_matrix(psi)
    us = np.asarray(unitaries, dtype=complex)
    if us.ndim != 3 or us.shape[-1] != m.shape[-1]:
        raise DimensionMismatch(f"ユニタリの形 {us.shape} と状態の次元 {m.shape[-1]} が一致しません")
    return np.einsum("nab,bc,ndc->ad", us, m, us.conj()) / us.shape[0]
