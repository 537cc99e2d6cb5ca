# lib/mep.py
# -*- coding: utf-8 -*-
"""最大エントロピー原理（MEP）による割当

ψ(λ) = exp(−Σ λ_i Λ*[O_i]) / Z

- mep_generic: 任意チャネル向けのニュートン法（ヤコビアンは Kubo-Mori 共分散）
- mep_bns: Λ_BnS の閉形式要素 + 3変数の超越方程式
- mep_su2: Brillouin 関数の逆関数による Λ_J の高速経路
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, root

from lib.aam import PmCurve, bns_pattern, diagonal_in_direction
from lib.channels import (
    CoarseGrainingChannel,
    hermitian_basis,
    make_bns_channel,
    make_partial_trace_channel,
    make_su2_channel,
)
from lib.errors import InfeasibleTargets, NonConvergence
from lib.states import (
    PAULI,
    BlochVector,
    DensityMatrix,
    check_hermitian,
    is_half_integer,
    von_neumann_entropy,
)
from lib.utils import encode_complex_matrix

logger = logging.getLogger(__name__)

MAX_ITER = 200
ARMIJO = 1e-4
MIN_STEP = 2.0 ** -40
CAP_PER_DIM = 50.0
# これより純粋に近い有効状態は境界（有限の λ では到達しない）として報告
PURE_RADIUS = 1.0 - 1e-6
PURE_EIGENVALUE = 1e-8


@dataclass(frozen=True, eq=False)
class MepSolution:
    """MEP 解（状態・乗数・エントロピー・残差・反復回数・収束フラグ）"""
    state: DensityMatrix
    multipliers: np.ndarray = field(repr=False)
    entropy: float
    residual: float
    iterations: int
    converged: bool
    boundary: bool = False
    log_partition: float = 0.0
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def partition(self) -> float:
        return float(np.exp(self.log_partition))

    def to_json(self) -> Dict[str, Any]:
        return {
            "method": "MEP",
            "multipliers": [float(x) for x in self.multipliers],
            "entropy": self.entropy,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary": self.boundary,
            "log_partition": self.log_partition,
            "diagnostics": self.diagnostics,
            "state": encode_complex_matrix(self.state.matrix),
        }


# ─────────────── ギブス状態 ───────────────
def _gibbs(Q: np.ndarray, lam: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """固有値分解 (w, v)、占有 p、ln Z"""
    H = np.einsum("i,iab->ab", lam, Q)
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    shift = w.min()
    e = np.exp(-(w - shift))
    z = e.sum()
    return w, v, e / z, float(np.log(z) - shift)


def gibbs_state(channel: CoarseGrainingChannel, observables: Sequence[np.ndarray],
                multipliers: Sequence[float]) -> np.ndarray:
    """exp(−Σ λ_i Λ*[O_i]) / Z"""
    Q = np.array([channel.dual(o) for o in observables])
    _, v, p, _ = _gibbs(Q, np.asarray(multipliers, dtype=float))
    return (v * p) @ v.conj().T


def log_partition(channel: CoarseGrainingChannel, observables: Sequence[np.ndarray],
                  multipliers: Sequence[float]) -> float:
    """ln Z(λ)"""
    Q = np.array([channel.dual(o) for o in observables])
    return _gibbs(Q, np.asarray(multipliers, dtype=float))[3]


def _expectations(Qt: np.ndarray, p: np.ndarray) -> np.ndarray:
    """⟨Q_i⟩（固有基底の対角成分から）"""
    return np.einsum("iaa,a->i", Qt, p).real


def _jacobian(Qt: np.ndarray, w: np.ndarray, p: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """∂⟨Q_i⟩/∂λ_k = −(Kubo-Mori 共分散)。差分商で厳密に"""
    dw = w[:, None] - w[None, :]
    dp = p[:, None] - p[None, :]
    same = np.abs(dw) < 1e-12
    phi = np.where(same, -0.5 * (p[:, None] + p[None, :]), dp / np.where(same, 1.0, dw))
    # Σ_ab (Q_i)_ba (Q_k)_ab φ_ab
    J = np.einsum("iba,kab,ab->ik", Qt, Qt, phi).real
    return J + np.outer(mean, mean)


def is_near_pure(rho: DensityMatrix) -> bool:
    """最小固有値 < 1e-8、または量子ビットで |r⃗| > 1 − 1e-6"""
    if float(np.linalg.eigvalsh(rho.matrix).min()) < PURE_EIGENVALUE:
        return True
    return rho.dim == 2 and BlochVector.from_state(rho).radius > PURE_RADIUS


# ─────────────── 汎用ソルバ ───────────────
def mep_generic(channel: CoarseGrainingChannel, observables: Sequence[np.ndarray],
                targets: Sequence[float], tol: float = 1e-10, max_iter: int = MAX_ITER,
                target_state: Optional[DensityMatrix] = None) -> MepSolution:
    """ニュートン法（直線探索つき、初期値 λ = 0）

    target_state を渡すと、純粋に近い目標を境界の場合として扱う
    （残差が tol に届かなくても最良の反復を返す）。
    """
    obs = [check_hermitian(o) for o in observables]
    o = np.asarray(targets, dtype=float)
    if len(obs) != o.size:
        raise ValueError(f"観測量 {len(obs)} 個に対し目標値 {o.size} 個")
    Q = np.array([channel.dual(x) for x in obs])
    cap = CAP_PER_DIM * channel.in_dim

    lam = np.zeros(len(obs))
    w, v, p, logz = _gibbs(Q, lam)
    Qt = np.einsum("ba,ibc,cd->iad", v.conj(), Q, v)
    F = _expectations(Qt, p) - o
    near_pure = target_state is not None and is_near_pure(target_state)
    capped = False
    it = 0

    for it in range(1, max_iter + 1):
        if np.max(np.abs(F)) <= tol:
            it -= 1
            break
        J = _jacobian(Qt, w, p, _expectations(Qt, p))
        step = np.linalg.lstsq(J, -F, rcond=None)[0]

        norm2 = float(F @ F)
        t = 1.0
        accepted = False
        while t >= MIN_STEP:
            trial = lam + t * step
            trial_norm = np.linalg.norm(trial)
            hit_cap = trial_norm > cap
            if hit_cap:
                trial = trial * (cap / trial_norm)
            w_t, v_t, p_t, logz_t = _gibbs(Q, trial)
            Qt_t = np.einsum("ba,ibc,cd->iad", v_t.conj(), Q, v_t)
            F_t = _expectations(Qt_t, p_t) - o
            if float(F_t @ F_t) <= (1.0 - ARMIJO * t) * norm2:
                lam, w, v, p, logz, Qt, F = trial, w_t, v_t, p_t, logz_t, Qt_t, F_t
                capped = hit_cap
                accepted = True
                break
            t *= 0.5

        if not accepted:
            if near_pure:
                logger.info(f"純粋に近い目標で直線探索が停滞（境界の MEP 状態, 反復 {it}）")
                break
            residual = float(np.max(np.abs(F)))
            state = DensityMatrix.from_array((v * p) @ v.conj().T)
            best = MepSolution(state, lam.copy(), von_neumann_entropy(state), residual, it, False, capped, logz)
            raise InfeasibleTargets(
                f"直線探索が停滞しました（残差 {residual:.3e} > tol {tol:.1e}）",
                best=best, diagnostics={"iterations": it, "residual": residual},
            )
        if capped:
            logger.info(f"乗数が上限 ‖λ‖ = {cap:g} に達しました（境界の MEP 状態）")
            break

    boundary = near_pure or capped
    residual = float(np.max(np.abs(F)))
    state = DensityMatrix.from_array((v * p) @ v.conj().T)
    sol = MepSolution(
        state=state, multipliers=lam, entropy=von_neumann_entropy(state), residual=residual,
        iterations=it, converged=residual <= tol, boundary=boundary, log_partition=logz,
        diagnostics={"channel": channel.label},
    )
    if not sol.converged and not boundary:
        raise NonConvergence(
            f"MEP が {max_iter} 回で収束しませんでした（残差 {residual:.3e}）",
            best=sol, diagnostics={"iterations": it, "residual": residual},
        )
    logger.debug(f"MEP({channel.label}): 反復={it}, 残差={residual:.2e}, S={sol.entropy:.6f}")
    return sol


def tomographic_targets(rho: DensityMatrix) -> Tuple[List[np.ndarray], List[float]]:
    """完全トモグラフィの観測量と期待値（量子ビットはパウリ、それ以外は E_00 を除くエルミート基底）"""
    if rho.dim == 2:
        obs = [PAULI[i] for i in range(3)]
    else:
        obs = list(hermitian_basis(rho.dim)[1:])
    return obs, [float(np.trace(s @ rho.matrix).real) for s in obs]


# ─────────────── Λ_BnS ───────────────
def _sinhc(x: float) -> float:
    return 1.0 if abs(x) < 1e-8 else np.sinh(x) / x


def bns_mep_elements(lam: Sequence[float]) -> Dict[str, Any]:
    """○, △, □, ◇ と Z（λ = |λ⃗|）"""
    lx, ly, lz = (float(v) for v in lam)
    ln = float(np.sqrt(lx * lx + ly * ly + lz * lz))
    c, shc, ez = np.cosh(ln), _sinhc(ln), np.exp(lz)
    Z = 2.0 * (c + ez)
    circle = (c - lz * shc) / Z
    triangle = -(lx - 1j * ly) * shc / (np.sqrt(3.0) * Z)
    square = (lz * shc - ez + c) / (3.0 * Z)
    return {"circle": circle, "triangle": triangle, "square": square, "diamond": (1.0 - circle) / 3.0, "Z": Z}


def mep_bns(rho: DensityMatrix, tol: float = 1e-10) -> MepSolution:
    """Λ_BnS の MEP: Λ[ψ_MEP] = ρ を3変数で解く"""
    if rho.dim != 2:
        raise ValueError(f"Λ_BnS の有効状態は量子ビット: dim={rho.dim}")
    r00 = float(rho.matrix[0, 0].real)
    r01 = complex(rho.matrix[0, 1])
    boundary = is_near_pure(rho)

    def equations(lam: np.ndarray) -> np.ndarray:
        el = bns_mep_elements(lam)
        t = np.sqrt(3.0) * el["triangle"]
        return np.array([el["circle"] - r00, t.real - r01.real, t.imag - r01.imag])

    sol = root(equations, np.zeros(3), method="hybr", options={"xtol": 1e-15, "maxfev": 4000})
    lam = np.asarray(sol.x, dtype=float)
    residual = float(np.max(np.abs(equations(lam))))
    if residual > tol:
        # 閉形式の根探索が届かなければ汎用ニュートンで仕上げ
        logger.debug(f"mep_bns: hybr 残差 {residual:.2e} → ニュートン法で再計算")
        obs, targets = tomographic_targets(rho)
        generic = mep_generic(make_bns_channel(), obs, targets, tol=tol, target_state=rho)
        lam = generic.multipliers
        residual = float(np.max(np.abs(equations(lam))))
        if residual > tol and not boundary:
            raise NonConvergence(f"Λ_BnS の MEP が収束しませんでした（残差 {residual:.3e}）", best=generic)

    el = bns_mep_elements(lam)
    state = DensityMatrix.from_array(bns_pattern(el["circle"], el["triangle"], el["diamond"], el["square"]))
    return MepSolution(
        state=state, multipliers=lam, entropy=von_neumann_entropy(state), residual=residual,
        iterations=int(getattr(sol, "nfev", 0)), converged=residual <= tol, boundary=boundary,
        log_partition=float(np.log(el["Z"])),
        diagnostics={"channel": "bns", "square": float(el["square"]), "Z": float(el["Z"])},
    )


# ─────────────── Λ_J: Brillouin 関数 ───────────────
def _coth(x):
    return 1.0 / np.tanh(x)


def brillouin(j: float, lam):
    """B_j(λ) = (1/j){(j+½)coth[(j+½)λ/j] − ½coth[λ/(2j)]}"""
    lam_arr = np.asarray(lam, dtype=float)
    small = np.abs(lam_arr) < 1e-3
    safe = np.where(small, 1.0, lam_arr)
    exact = ((j + 0.5) * _coth((j + 0.5) * safe / j) - 0.5 * _coth(safe / (2 * j))) / j
    series = (j + 1) / (3 * j) * lam_arr - (j + 1) * (2 * j * j + 2 * j + 1) / (90 * j ** 3) * lam_arr ** 3
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def brillouin_derivative(j: float, lam: float) -> float:
    """dB_j/dλ"""
    if abs(lam) < 1e-3:
        return (j + 1) / (3 * j) - 3 * (j + 1) * (2 * j * j + 2 * j + 1) / (90 * j ** 3) * lam ** 2
    a = (j + 0.5) / j
    b = 1.0 / (2 * j)
    return (-(j + 0.5) * a / np.sinh(a * lam) ** 2 + 0.5 * b / np.sinh(b * lam) ** 2) / j


def brillouin_inverse(j: float, r: float, tol: float = 1e-12) -> float:
    """B_j(λ) = r となる λ（二分法で挟んでからニュートン法で仕上げ）"""
    if abs(r) >= 1 - 1e-12:
        raise ValueError(f"|r| = 1 では λ が発散します: r={r}")
    if r == 0.0:
        return 0.0
    sign, target = np.sign(r), abs(r)
    hi = 1.0
    while brillouin(j, hi) < target:
        hi *= 2.0
    lam = brentq(lambda x: brillouin(j, x) - target, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        err = brillouin(j, lam) - target
        if abs(err) <= tol * 1e-2:
            break
        d = brillouin_derivative(j, lam)
        if d <= 0:
            break
        cand = lam - err / d
        if abs(brillouin(j, cand) - target) < abs(err):
            lam = cand
    return float(sign * lam)


def mep_weights(j: float, r: float) -> Tuple[np.ndarray, float]:
    """p_m ∝ exp(λ m/j)（m = j..−j）と λ"""
    D = int(round(2 * j)) + 1
    m_over_j = (j - np.arange(D)) / j
    lam = brillouin_inverse(j, r)
    expo = lam * m_over_j
    e = np.exp(expo - expo.max())
    return e / e.sum(), lam


def mep_su2(j: float, rho_bloch: BlochVector, tol: float = 1e-10) -> MepSolution:
    """Λ_J の MEP: ψ = exp(λ J_r̂/j)/Z、λ⃗ = −λ r̂"""
    if not is_half_integer(j):
        raise ValueError(f"j は 1/2 以上の半整数: {j}")
    channel = make_su2_channel(j)
    D = channel.in_dim
    r = rho_bloch.radius
    boundary = r > PURE_RADIUS

    if r < 1e-15:
        p, lam, r_hat = np.full(D, 1.0 / D), 0.0, np.array([0.0, 0.0, 1.0])
        state = DensityMatrix.maximally_mixed(D)
    elif r >= 1 - 1e-12:
        # 有限の λ では到達しない純粋状態の極限
        r_hat = rho_bloch.as_array() / r
        p = np.zeros(D)
        p[0] = 1.0
        lam = CAP_PER_DIM * D
        state = diagonal_in_direction(j, rho_bloch, p)
    else:
        r_hat = rho_bloch.as_array() / r
        p, lam = mep_weights(j, r)
        state = diagonal_in_direction(j, rho_bloch, p)

    out = channel.forward(state)
    residual = float(max(abs(np.trace(PAULI[i] @ out).real - rho_bloch.as_array()[i]) for i in range(3)))
    m_over_j = (j - np.arange(D)) / j
    with np.errstate(divide="ignore"):
        logz = float(np.log(np.sum(np.exp(lam * m_over_j - (lam * m_over_j).max()))) + (lam * m_over_j).max())
    return MepSolution(
        state=state, multipliers=-lam * r_hat, entropy=von_neumann_entropy(state), residual=residual,
        iterations=0, converged=residual <= tol or boundary, boundary=boundary, log_partition=logz,
        diagnostics={"channel": "su2", "j": j, "lambda": lam, "p_m": p.tolist()},
    )


def mep_pm_curve(j: float, r_grid: Sequence[float]) -> PmCurve:
    """MEP の p_m(r)"""
    r_grid = np.asarray(r_grid, dtype=float)
    D = int(round(2 * j)) + 1
    p = np.empty((D, r_grid.size))
    for k, r in enumerate(r_grid):
        if r < 1e-15:
            p[:, k] = 1.0 / D
        elif r >= 1 - 1e-12:
            p[:, k] = 0.0
            p[0, k] = 1.0
        else:
            p[:, k] = mep_weights(j, float(r))[0]
    return PmCurve(j=j, d_E=1, r_grid=r_grid, p=p, method="MEP")


# ─────────────── ディスパッチ ───────────────
def mep_assign(channel_name: str, rho: DensityMatrix, tol: float = 1e-10, **params) -> MepSolution:
    """CLI 用: チャネル名で MEP を選ぶ"""
    if channel_name == "bns":
        return mep_bns(rho, tol)
    if channel_name == "su2":
        return mep_su2(float(params["j"]), BlochVector.from_state(rho), tol)
    if channel_name == "ptrace":
        channel = make_partial_trace_channel(rho.dim, int(params["env_dim"]))
        obs, targets = tomographic_targets(rho)
        return mep_generic(channel, obs, targets, tol=tol, target_state=rho)
    raise ValueError(f"未知のチャネル: {channel_name}")
