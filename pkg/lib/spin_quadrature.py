# lib/spin_quadrature.py
# -*- coding: utf-8 -*-
"""Λ_J の平均割当 p_m(r) を決定論的に求める

事前分布（Haar 純粋状態 / 環境 dE の誘導測度）のもとで、J_z 基底の対角成分は
Dirichlet(dE, …, dE) に従う。したがって

    U_m(z) = E[ψ_mm δ(⟨J_z⟩/j − z)]

は節点 n/j（重複度 dE、m のみ dE+1）をもつ B スプラインで厳密に書ける
（ラプラス逆変換を留数和＝差分商として解析的に済ませた形）。

3次元の条件付き平均 g_m(r) = f(r) p_m(r) と U_m の関係

    U_m'(z) = 2π ∫_z^1 Σ_n g_n(r) |d^j_{mn}(z/r)|² r dr

は Volterra 型で、対数半径 s = ln z を独立変数にした線形 ODE

    dH_{nl}/ds = l H_{nl} − q_n,   q_m = Σ_{n,l} l w_{mnl} H_{nl} − z U_m'(z)

を r = 1 から内側へ積分すれば q_m = z² g_m が得られる
（|d^j_{mn}(θ)|² = Σ_l w_{mnl} cos^l θ）。

dE が大きく r が 1 に近いと密度そのものは倍精度の範囲を下回る。
積分は区間ごとに取り直す対数スケールつきで行い、最上区間 (1 − 1/j, 1) の
密度は δ = 1 − z の対数表現

    f(δ) = δ^{A−1} / B(A, α_0) · Π_n d_n^{−α_n} · E[(1 − δV)^{α_0−1}]

（V = Σ q_n/d_n、q ~ Dirichlet(α_1, …)）で評価する。
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import solve_ivp
from scipy.interpolate import BSpline
from scipy.linalg import expm
from scipy.special import betaln, gammaln, logsumexp

from lib.errors import QuadratureError
from lib.states import angular_momentum, is_half_integer

logger = logging.getLogger(__name__)

SMALL_R = 1e-6
ONE_R = 1.0 - 1e-12
# 部分区間の最大幅（z）。区間ごとにスケールを取り直す
MAX_PANEL = 0.01
# 節点上の評価は左右平均
KNOT_EPS = 1e-12
# これを下回る B スプライン値は最上区間の対数表現で評価し直す
UNDERFLOW = 1e-250


def _log_dirichlet_moments(alpha: np.ndarray, nodes: np.ndarray, order: int) -> np.ndarray:
    """log E[Y^i]（i = 0..order）。Y = Σ q_n y_n、q ~ Dirichlet(alpha)、y_n ≥ 0"""
    A = float(alpha.sum())
    y_max = float(nodes.max())
    out = np.full(order + 1, -np.inf)
    out[0] = 0.0
    if y_max <= 0.0:
        return out
    y = nodes / y_max
    power_sums = np.array([float(np.sum(alpha * y ** k)) for k in range(order + 1)])
    nu = np.zeros(order + 1)
    nu[0] = 1.0
    # i ν_i (A)_i / i! = Σ_k p_k ν_{i−k} (A)_{i−k} / (i−k)!
    for i in range(1, order + 1):
        k = np.arange(1, i + 1)
        log_w = gammaln(i) + gammaln(A + i - k) - gammaln(A + i) - gammaln(i - k + 1)
        nu[i] = float(np.sum(power_sums[k] * np.exp(log_w) * nu[i - k]))
    with np.errstate(divide="ignore"):
        return np.log(nu) + np.arange(order + 1) * math.log(y_max)


@dataclass(frozen=True, eq=False)
class _TopDensity:
    """最上区間での密度 f_m(δ) と d ln f_m/dδ（δ = 1 − z < 1/j）"""
    x_max: float                              # 1/d_1 = j
    log_const: Tuple[float, ...]
    powers: Tuple[float, ...]                 # A − 1
    orders: Tuple[int, ...]                   # α_0 − 1
    log_moments: Tuple[np.ndarray, ...] = field(repr=False)

    @classmethod
    def build(cls, j: float, dE: int) -> "_TopDensity":
        D = int(round(2 * j)) + 1
        n = np.arange(1, D, dtype=float)
        d = n / j
        y = j - j / n
        log_const, powers, orders, moments = [], [], [], []
        for i in range(D):
            alpha = np.full(D, float(dE))
            alpha[i] += 1.0
            a0, rest = alpha[0], alpha[1:]
            A = float(rest.sum())
            log_const.append(float(-betaln(A, a0) - np.sum(rest * np.log(d))))
            powers.append(A - 1.0)
            orders.append(int(a0) - 1)
            moments.append(_log_dirichlet_moments(rest, y, int(a0)))
        return cls(float(j), tuple(log_const), tuple(powers), tuple(orders), tuple(moments))

    def _log_sum(self, log_nu: np.ndarray, b: int, shift: int, log_beta: float, log_delta: float) -> float:
        """log Σ_i C(b,i) β^{b−i} δ^i ν_{i+shift}"""
        i = np.arange(b + 1)
        terms = (gammaln(b + 1) - gammaln(i + 1) - gammaln(b - i + 1)
                 + (b - i) * log_beta + i * log_delta + log_nu[i + shift])
        return float(logsumexp(terms))

    def evaluate(self, delta: float) -> Tuple[np.ndarray, np.ndarray]:
        """(ln f_m(δ), d ln f_m/dδ)。m = j..−j"""
        D = len(self.powers)
        if delta <= 0.0:
            return np.full(D, -np.inf), np.zeros(D)
        beta = 1.0 - delta * self.x_max
        log_beta, log_delta = math.log(max(beta, 1e-300)), math.log(delta)
        log_f = np.empty(D)
        dlog = np.empty(D)
        for m in range(D):
            a, log_nu = self.orders[m], self.log_moments[m]
            log_s = self._log_sum(log_nu, a, 0, log_beta, log_delta)
            log_f[m] = self.log_const[m] + self.powers[m] * log_delta + log_s
            ds = 0.0
            if a > 0:
                # S'/S = −a E[V(1−δV)^{a−1}] / E[(1−δV)^a]、V = x_max − Y
                t0 = math.exp(self._log_sum(log_nu, a - 1, 0, log_beta, log_delta) - log_s)
                t1 = math.exp(self._log_sum(log_nu, a - 1, 1, log_beta, log_delta) - log_s)
                ds = -a * (self.x_max * t0 - t1)
            dlog[m] = self.powers[m] / delta + ds
        return log_f, dlog


@dataclass(frozen=True, eq=False)
class _SpinModel:
    j: float
    dE: int
    dim: int
    coupling: np.ndarray = field(repr=False)      # (D, D, L): l·w_{m n l}
    l_values: np.ndarray = field(repr=False)      # (L,)
    marginal_slopes: Tuple[BSpline, ...] = field(repr=False)
    knots: np.ndarray = field(repr=False)         # (0, 1) 内の正の節点
    top: _TopDensity = field(repr=False)
    top_edge: float = 0.0                         # 1 − 1/j

    def forcing(self, z: float) -> np.ndarray:
        """z U_m'(z)（m = j..−j）"""
        vals = np.array([float(b(z)) for b in self.marginal_slopes])
        return z * np.nan_to_num(vals)

    def log_forcing(self, z: float) -> Tuple[float, np.ndarray]:
        """z U_m'(z) = exp(log_mag)·vec（max|vec| = 1）"""
        vals = self.forcing(z)
        peak = float(np.max(np.abs(vals)))
        if peak >= UNDERFLOW or z <= self.top_edge or z >= 1.0:
            if peak == 0.0:
                return -np.inf, np.zeros(self.dim)
            return math.log(peak), vals / peak
        log_f, dlog = self.top.evaluate(1.0 - z)
        # z U' = −z f dlog
        with np.errstate(divide="ignore"):
            log_mag = log_f + np.log(np.abs(z * dlog))
        ref = float(np.max(log_mag))
        if not np.isfinite(ref):
            return -np.inf, np.zeros(self.dim)
        return ref, -np.sign(dlog) * np.exp(log_mag - ref)

    def forcing_relative(self, z: float, log_ref: float) -> np.ndarray:
        """z U_m'(z) / exp(log_ref)"""
        log_mag, vec = self.log_forcing(z)
        if not np.isfinite(log_mag):
            return vec
        return vec * math.exp(min(log_mag - log_ref, 700.0))

    def forcing_at(self, z: float, log_ref: float) -> np.ndarray:
        """節点上なら左右の平均"""
        if np.any(np.abs(self.knots - z) < 1e-9):
            lo = self.forcing_relative(max(z * (1 - KNOT_EPS), 0.0), log_ref)
            hi = self.forcing_relative(min(z * (1 + KNOT_EPS), 1.0), log_ref)
            return 0.5 * (lo + hi)
        return self.forcing_relative(z, log_ref)

    def q_values(self, H: np.ndarray, z: float, log_ref: float) -> np.ndarray:
        """exp(log_ref) を除いた q_m"""
        return np.einsum("mnl,nl->m", self.coupling, H) - self.forcing_at(z, log_ref)


def _wigner_weight_coefficients(j: float) -> np.ndarray:
    """|d^j_{mn}(θ)|² の cos θ 多項式係数 w[l, m, n]"""
    spin = angular_momentum(j)
    D = spin.dim
    L = D - 1
    mus = np.cos(np.pi * np.arange(L + 1) / L)
    values = np.empty((L + 1, D * D))
    for i, mu in enumerate(mus):
        d = expm(-1j * np.arccos(np.clip(mu, -1.0, 1.0)) * spin.jy)
        values[i] = (np.abs(d) ** 2).reshape(-1)
    coef = P.polyfit(mus, values, L)
    return coef.reshape(L + 1, D, D)


def _marginal_slopes(j: float, dE: int) -> Tuple[BSpline, ...]:
    """U_m'(z) を与える B スプライン導関数（m = j..−j）"""
    D = int(round(2 * j)) + 1
    nodes = (j - np.arange(D)) / j
    slopes = []
    for i in range(D):
        mult = np.full(D, dE)
        mult[i] += 1
        knots = np.sort(np.repeat(nodes, mult))
        k = len(knots) - 2
        # 正規化 B スプラインの積分は (t_last − t_first)/(k+1)
        scale = (k + 1) / (knots[-1] - knots[0])
        spl = BSpline.basis_element(knots, extrapolate=False)
        der = spl.derivative()
        slopes.append(BSpline(der.t, der.c * scale, der.k, extrapolate=False))
    return tuple(slopes)


@lru_cache(maxsize=64)
def _spin_model(j: float, dE: int) -> _SpinModel:
    w = _wigner_weight_coefficients(j)
    L = w.shape[0] - 1
    l_values = np.arange(1, L + 1, dtype=float)
    coupling = np.einsum("l,lmn->mnl", l_values, w[1:])
    jj = j
    knots = np.array([n / jj for n in np.arange(jj, 0, -1.0) if 0 < n / jj < 1])
    logger.debug(f"スピンモデル構築: j={j}, dE={dE}, 節点={knots.tolist()}")
    return _SpinModel(
        j=j, dE=dE, dim=L + 1, coupling=coupling, l_values=l_values,
        marginal_slopes=_marginal_slopes(j, dE), knots=knots,
        top=_TopDensity.build(j, dE), top_edge=1.0 - 1.0 / j,
    )


def _sweep(model: _SpinModel, targets: np.ndarray, tol: float) -> Dict[float, np.ndarray]:
    """z = 1 から min(targets) まで積分し、各 target で q を返す

    H は exp(log_ref) を括り出した形で持ち、区間ごとに log_ref を取り直す。
    返す q も target ごとに共通の正の因子を除いた値（正規化で消える）。
    """
    z_min = float(targets.min())
    n_panels = max(int(math.ceil((1.0 - z_min) / MAX_PANEL)), 1)
    grid = np.concatenate([
        np.linspace(1.0, z_min, n_panels + 1),
        model.knots[(model.knots > z_min) & (model.knots < 1.0)],
        targets,
    ])
    grid = np.unique(grid)[::-1]

    D, L = model.dim, model.l_values.size
    lv = model.l_values

    out: Dict[float, np.ndarray] = {}
    H = np.zeros((D, L))
    log_ref = 0.0
    target_set = set(float(t) for t in targets)
    if 1.0 in target_set:
        out[1.0] = model.q_values(H, 1.0, log_ref)

    for z_hi, z_lo in zip(grid[:-1], grid[1:]):
        # 区間内の節点を避けて評価（右端・左端の片側極限）
        lo_c, hi_c = z_lo * (1 + KNOT_EPS), z_hi * (1 - KNOT_EPS)

        h_peak = float(np.max(np.abs(H)))
        mag_h = log_ref + math.log(h_peak) if h_peak > 0.0 else -np.inf
        new_ref = max(model.log_forcing(lo_c)[0], mag_h)
        if not np.isfinite(new_ref):
            if float(z_lo) in target_set:
                out[float(z_lo)] = model.q_values(H, float(z_lo), log_ref)
            continue
        if h_peak > 0.0:
            H = H * math.exp(log_ref - new_ref)
        log_ref = new_ref

        def rhs(s: float, y: np.ndarray) -> np.ndarray:
            z = min(max(math.exp(s), lo_c), hi_c)
            Hm = y.reshape(D, L)
            q = np.einsum("mnl,nl->m", model.coupling, Hm) - model.forcing_relative(z, log_ref)
            return (lv[None, :] * Hm - q[:, None]).reshape(-1)

        sol = solve_ivp(
            rhs, (math.log(z_hi), math.log(z_lo)), H.reshape(-1),
            method="DOP853", rtol=tol, atol=tol * 1e-3,
        )
        if not sol.success:
            raise QuadratureError(
                f"ODE 積分に失敗しました (j={model.j}, dE={model.dE}, z={z_lo:.4f}): {sol.message}",
                error_estimate=float("inf"),
            )
        H = sol.y[:, -1].reshape(D, L)
        if float(z_lo) in target_set:
            out[float(z_lo)] = model.q_values(H, float(z_lo), log_ref)
    return out


def _normalize(q: np.ndarray, tol: float) -> np.ndarray:
    total = float(np.sum(q))
    if not np.isfinite(total) or total <= 0.0:
        raise QuadratureError("確率密度がアンダーフローしました（この r では評価不能）", error_estimate=float("inf"))
    p = q / total
    if p.min() < -math.sqrt(tol):
        raise QuadratureError(f"負の確率が出ました (min={p.min():.3e})", error_estimate=float(-p.min()))
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _closed_cases(j: float, r: float) -> np.ndarray:
    """r≈0, r≈1, j=1/2 の解析的な値（該当しなければ None）"""
    D = int(round(2 * j)) + 1
    if r < SMALL_R:
        return np.full(D, 1.0 / D)
    if r >= ONE_R:
        p = np.zeros(D)
        p[0] = 1.0
        return p
    if D == 2:
        return np.array([(1 + r) / 2, (1 - r) / 2])
    return None


def quadrature_pm(j: float, dE: int, r_values: Sequence[float], tol: float = 1e-7
                  ) -> Tuple[np.ndarray, np.ndarray, float]:
    """p_m(r) を r の列についてまとめて評価

    Returns:
        (p: (D, n) 行 m = j..−j, residual: (n,) |Σ p_m m/j − r|, 誤差推定)
    """
    if not is_half_integer(j):
        raise ValueError(f"j は 1/2 以上の半整数: {j}")
    if dE < 1:
        raise ValueError(f"dE は1以上: {dE}")
    r_arr = np.asarray(r_values, dtype=float)
    if np.any((r_arr < 0) | (r_arr > 1)):
        raise ValueError(f"r は [0, 1] の範囲: {r_arr}")
    j = round(2 * j) / 2
    D = int(round(2 * j)) + 1
    m_over_j = (j - np.arange(D)) / j

    p = np.empty((D, r_arr.size))
    pending = []
    for i, r in enumerate(r_arr):
        closed = _closed_cases(j, float(r))
        if closed is None:
            pending.append(i)
        else:
            p[:, i] = closed

    error_estimate = 0.0
    if pending:
        model = _spin_model(j, int(dE))
        targets = np.unique(r_arr[pending])
        coarse = _sweep(model, targets, tol)
        fine = _sweep(model, targets, tol * 0.1)
        for i in pending:
            r = float(r_arr[i])
            p_fine = _normalize(fine[r], tol)
            p_coarse = _normalize(coarse[r], tol)
            error_estimate = max(error_estimate, float(np.max(np.abs(p_fine - p_coarse))))
            p[:, i] = p_fine
        if error_estimate > math.sqrt(tol):
            raise QuadratureError(
                f"求積の誤差推定 {error_estimate:.3e} が許容値 {math.sqrt(tol):.3e} を超えました (j={j}, dE={dE})",
                error_estimate=error_estimate,
            )
        logger.debug(f"p_m 求積: j={j}, dE={dE}, 点数={len(pending)}, 誤差推定={error_estimate:.2e}")

    residual = np.abs(m_over_j @ p - r_arr)
    return p, residual, error_estimate
