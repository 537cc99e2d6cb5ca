# lib/aam.py
# -*- coding: utf-8 -*-
"""平均割当写像（AAM）

- 部分トレース: ρ ⊗ I/dE
- Λ_BnS: 純粋／混合事前分布の閉形式と、両者のトレース距離 Δ の分布
- Λ_J: J_r̂ 固有基底で対角、重み p_m(r)（求積 or モンテカルロ）
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from lib.channels import CoarseGrainingChannel, make_bns_channel, make_partial_trace_channel, make_su2_channel
from lib.errors import SingularEffectiveState
from lib.spin_quadrature import quadrature_pm
from lib.states import (
    BlochVector,
    DensityMatrix,
    angular_momentum,
    trace_norm,
)
from lib.utils import encode_complex_matrix

logger = logging.getLogger(__name__)

EPS_DIV = 1e-9
_S3 = np.sqrt(3.0)


# ─────────────── 型 ───────────────
def method_tag(dE: int) -> str:
    """AAM-pure / AAM-mixed(dE)"""
    return "AAM-pure" if dE == 1 else f"AAM-mixed({dE})"


@dataclass(frozen=True, eq=False)
class AssignmentResult:
    """割当結果（状態・手法タグ・制約残差・診断情報）"""
    state: DensityMatrix
    method: str
    residual: float
    prior_env_dim: int = 1
    channel: str = ""
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "channel": self.channel,
            "method": self.method,
            "prior_env_dim": self.prior_env_dim,
            "residual": self.residual,
            "diagnostics": self.diagnostics,
            "state": encode_complex_matrix(self.state.matrix),
        }


@dataclass(frozen=True, eq=False)
class PmCurve:
    """J_r̂ 固有基底での対角重み p_m(r)。行は m = j..−j"""
    j: float
    d_E: int
    r_grid: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    method: str = "AAM"

    @property
    def m_values(self) -> np.ndarray:
        return self.j - np.arange(self.p.shape[0])

    def to_rows(self) -> List[Dict[str, Any]]:
        """CSV 行 (m, r, p)"""
        rows = []
        for i, m in enumerate(self.m_values):
            for k, r in enumerate(self.r_grid):
                rows.append({"m": float(m), "r": float(r), "p": float(self.p[i, k])})
        return rows


def constraint_residual(channel: CoarseGrainingChannel, state: DensityMatrix, rho: DensityMatrix) -> float:
    """‖Λ[state] − ρ‖₁"""
    return float(trace_norm(channel.forward(state) - rho.matrix))


# ─────────────── 部分トレース ───────────────
def aam_partial_trace(rho: DensityMatrix, dE: int, prior_env_dim: int = 1) -> AssignmentResult:
    """A[ρ] = ρ ⊗ I/dE（ユニタリ不変な事前分布なら純粋・混合とも同じ）"""
    if dE < 1:
        raise ValueError(f"dE は1以上: {dE}")
    state = DensityMatrix.from_array(np.kron(rho.matrix, np.eye(dE) / dE))
    channel = make_partial_trace_channel(rho.dim, dE)
    return AssignmentResult(
        state=state, method=method_tag(prior_env_dim), residual=constraint_residual(channel, state, rho),
        prior_env_dim=prior_env_dim, channel=channel.label, diagnostics={"env_dim": dE},
    )


# ─────────────── Λ_BnS ───────────────
def _bns_entries(rho: DensityMatrix):
    m = rho.matrix
    if m.shape != (2, 2):
        raise ValueError(f"Λ_BnS の有効状態は量子ビット: shape={m.shape}")
    r00 = float(m[0, 0].real)
    if r00 < EPS_DIV:
        raise SingularEffectiveState(
            f"ρ00 = {r00:.3e} < {EPS_DIV:g} のため □ 要素が定義できません",
            {"rho00": r00},
        )
    return r00, complex(m[0, 1]), float(m[1, 1].real)


def bns_square_pure(rho: DensityMatrix) -> float:
    """□ = |ρ01|²/(2ρ00) − ρ11/6"""
    r00, r01, r11 = _bns_entries(rho)
    return abs(r01) ** 2 / (2 * r00) - r11 / 6


def bns_square_mixed(rho: DensityMatrix, dE: int) -> float:
    """□ = dE/(3dE−1)·|ρ01|²/ρ00 − ρ11/(3(3dE−1))"""
    r00, r01, r11 = _bns_entries(rho)
    if dE == 1:
        return abs(r01) ** 2 / (2 * r00) - r11 / 6
    return dE / (3 * dE - 1) * abs(r01) ** 2 / r00 - r11 / (3 * (3 * dE - 1))


def bns_pattern(circle: float, triangle: complex, diamond: float, square: float) -> np.ndarray:
    """4×4 の割当パターン（○, △, ◇, □）"""
    m = np.full((4, 4), square, dtype=complex)
    m[0, 0] = circle
    m[0, 1:] = triangle
    m[1:, 0] = np.conj(triangle)
    m[1, 1] = m[2, 2] = m[3, 3] = diamond
    return m


def aam_bns_mixed(rho: DensityMatrix, dE: int) -> AssignmentResult:
    """Λ_BnS の AAM（環境次元 dE の誘導測度。dE = 1 は純粋状態）"""
    if dE < 1:
        raise ValueError(f"dE は1以上: {dE}")
    r00, r01, r11 = _bns_entries(rho)
    square = bns_square_mixed(rho, dE)
    state = DensityMatrix.from_array(bns_pattern(r00, r01 / _S3, r11 / 3, square))
    return AssignmentResult(
        state=state, method=method_tag(dE),
        residual=constraint_residual(make_bns_channel(), state, rho),
        prior_env_dim=dE, channel="bns", diagnostics={"square": square},
    )


def aam_bns_pure(rho: DensityMatrix) -> AssignmentResult:
    """Λ_BnS の AAM（Haar 純粋状態）"""
    return aam_bns_mixed(rho, 1)


def bns_prior_distance(rho_bloch: BlochVector, dE: int) -> float:
    """Δ = (dE−1)(1−r²)/(2(3dE−1)(1+z))：混合と純粋の割当のトレース距離"""
    if rho_bloch.z <= -1 + EPS_DIV:
        raise SingularEffectiveState(f"z = {rho_bloch.z} では Δ が定義できません", {"z": rho_bloch.z})
    r2 = rho_bloch.radius ** 2
    return (dE - 1) * (1 - r2) / (2 * (3 * dE - 1) * (1 + rho_bloch.z))


def bns_prior_scale(dE: int) -> float:
    """a = (dE−1)/(2(3dE−1))。Δ の台は [0, 2a]"""
    return (dE - 1) / (2 * (3 * dE - 1))


def bns_prior_distance_pdf(delta, dE: int):
    """Pr(Δ|dE) = 3(Δ−2a)²/(8a³)（台の外は 0）"""
    if dE < 2:
        raise ValueError("dE = 1 では Δ ≡ 0（分布が退化）")
    a = bns_prior_scale(dE)
    d = np.asarray(delta, dtype=float)
    out = np.where((d >= 0) & (d <= 2 * a), 3 * (d - 2 * a) ** 2 / (8 * a ** 3), 0.0)
    return float(out) if out.ndim == 0 else out


def bns_prior_distance_cdf(delta, dE: int):
    """累積分布 1 − (1 − Δ/(2a))³"""
    if dE < 2:
        raise ValueError("dE = 1 では Δ ≡ 0（分布が退化）")
    a = bns_prior_scale(dE)
    d = np.clip(np.asarray(delta, dtype=float), 0.0, 2 * a)
    out = 1.0 - (1.0 - d / (2 * a)) ** 3
    return float(out) if out.ndim == 0 else out


# ─────────────── Λ_J ───────────────
def aam_su2_pm(j: float, dE: int, r: float, method: str = "quadrature", tol: float = 1e-7,
               rng: Optional[np.random.Generator] = None, n_proposed: int = 200_000,
               epsilon: float = 0.025) -> np.ndarray:
    """p_m(r)（m = j..−j）

    Args:
        method: "quadrature"（決定論的）または "montecarlo"（ε ボール棄却サンプリング）
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r は [0, 1] の範囲: {r}")
    if method == "quadrature":
        p, _, _ = quadrature_pm(j, dE, [r], tol)
        return p[:, 0]
    if method == "montecarlo":
        from lib.montecarlo import Prior, rejection_estimate

        rho = DensityMatrix.from_bloch(BlochVector(0.0, 0.0, r))
        est = rejection_estimate(
            make_su2_channel(j), rho, epsilon, Prior.of(dE), n_proposed,
            rng if rng is not None else np.random.default_rng(0),
        )
        p = np.clip(np.diag(est.mean_state.matrix).real, 0.0, None)
        return p / p.sum()
    raise ValueError(f"未知の method: {method}")


def pm_curve(j: float, dE: int, r_grid: Sequence[float], tol: float = 1e-7) -> PmCurve:
    """r グリッド全体を一度の積分で評価"""
    r_grid = np.asarray(r_grid, dtype=float)
    p, residual, err = quadrature_pm(j, dE, r_grid, tol)
    logger.info(f"p_m(r) 曲線: j={j}, dE={dE}, 点数={r_grid.size}, 最大残差={residual.max():.2e}, 誤差推定={err:.2e}")
    return PmCurve(j=j, d_E=dE, r_grid=r_grid, p=p, method=method_tag(dE))


def diagonal_in_direction(j: float, r_vec: BlochVector, p: np.ndarray) -> DensityMatrix:
    """Σ p_m |m_r̂⟩⟨m_r̂|（p は m = j..−j の順）"""
    spin = angular_momentum(j)
    n_hat = r_vec.as_array() / r_vec.radius
    w, v = np.linalg.eigh(spin.along(n_hat))
    # eigh は昇順 → m = j..−j に並べ替え
    v = v[:, ::-1]
    return DensityMatrix.from_array((v * p) @ v.conj().T)


def aam_su2_state(j: float, dE: int, r_vec: BlochVector, method: str = "quadrature",
                  tol: float = 1e-7, **mc_kwargs) -> AssignmentResult:
    """Λ_J の AAM 状態（回転共変）"""
    channel = make_su2_channel(j)
    rho = DensityMatrix.from_bloch(r_vec)
    r = r_vec.radius
    diagnostics: Dict[str, Any] = {"r": r, "method": method}
    if r < 1e-12:
        state = DensityMatrix.maximally_mixed(channel.in_dim)
    else:
        p = aam_su2_pm(j, dE, min(r, 1.0), method=method, tol=tol, **mc_kwargs)
        diagnostics["p_m"] = p.tolist()
        state = diagonal_in_direction(j, r_vec, p)
    if method == "quadrature":
        diagnostics["quadrature_tol"] = tol
    return AssignmentResult(
        state=state, method=method_tag(dE), residual=constraint_residual(channel, state, rho),
        prior_env_dim=dE, channel="su2", diagnostics=diagnostics,
    )


# ─────────────── 汎用ディスパッチ ───────────────
def aam_assign(channel_name: str, rho: DensityMatrix, dE: int = 1, **params) -> AssignmentResult:
    """CLI 用: チャネル名で AAM を選ぶ（dE は事前分布の環境次元）"""
    if channel_name == "ptrace":
        return aam_partial_trace(rho, int(params["env_dim"]), prior_env_dim=dE)
    if channel_name == "bns":
        return aam_bns_mixed(rho, dE)
    if channel_name == "su2":
        return aam_su2_state(float(params["j"]), dE, BlochVector.from_state(rho), tol=params.get("tol", 1e-7))
    raise ValueError(f"未知のチャネル: {channel_name}")
