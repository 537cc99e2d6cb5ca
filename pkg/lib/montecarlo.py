# lib/montecarlo.py
# -*- coding: utf-8 -*-
"""ε ボール棄却サンプリングによるオラクル

事前分布（Haar 純粋状態 / 環境 dE の誘導測度）から提案し、
‖Λ[ψ] − ρ‖₁ ≤ ε を満たすものだけを平均する。

シャードの大きさはスレッド数によらず固定し、シャード i の乱数は
base_seed + i で初期化、結果はシャード順に結合する。
したがって --threads を変えても結果はビット単位で一致する。
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import kstest
from tqdm import tqdm

from lib.aam import (
    EPS_DIV,
    aam_bns_mixed,
    aam_partial_trace,
    bns_prior_distance,
    bns_prior_distance_cdf,
    bns_prior_distance_pdf,
    bns_prior_scale,
    diagonal_in_direction,
    pm_curve,
)
from lib.channels import CoarseGrainingChannel, make_bns_channel, make_partial_trace_channel, make_su2_channel
from lib.errors import DimensionCapExceeded, DimensionMismatch, InferenceError, ZeroAcceptance
from lib.mep import mep_bns, mep_generic, mep_pm_curve, tomographic_targets
from lib.states import (
    BlochVector,
    DensityMatrix,
    haar_pure_batch,
    induced_mixed_batch,
    trace_distance,
    trace_norm,
    uniform_bloch_ball_batch,
)
from lib.utils import encode_complex_matrix

logger = logging.getLogger(__name__)

SHARD_SIZE = 50_000
# 純粋化の次元 D·dE の上限
PURIFICATION_CAP = 64
MAX_KEPT_SAMPLES = 20_000
# 棒グラフの行ごとにシャードのシード範囲が重ならない間隔
ROW_SEED_STRIDE = 1_000_000


# ─────────────── 型 ───────────────
@dataclass(frozen=True)
class Prior:
    """事前分布。env_dim = 1 が Haar 純粋状態、それ以外は誘導測度"""
    env_dim: int = 1

    def __post_init__(self):
        if self.env_dim < 1:
            raise ValueError(f"環境次元は1以上: {self.env_dim}")

    @classmethod
    def of(cls, dE: int) -> "Prior":
        return cls(int(dE))

    @property
    def is_pure(self) -> bool:
        return self.env_dim == 1

    @property
    def label(self) -> str:
        return "pure" if self.is_pure else f"mixed({self.env_dim})"

    def sample(self, D: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, D, D) の密度行列バッチ"""
        if self.is_pure:
            c = haar_pure_batch(D, n, rng)
            return c[:, :, None] * c.conj()[:, None, :]
        return induced_mixed_batch(D, self.env_dim, n, rng)


@dataclass(frozen=True, eq=False)
class SampleEstimate:
    """採択状態の平均と成分ごとの標準誤差"""
    mean_state: DensityMatrix
    n_proposed: int
    n_accepted: int
    epsilon: float
    entrywise_stderr: np.ndarray = field(repr=False)
    seed: int
    stderr_re: np.ndarray = field(default=None, repr=False)
    stderr_im: np.ndarray = field(default=None, repr=False)
    prior: str = "pure"
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "prior": self.prior,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "n_proposed": self.n_proposed,
            "n_accepted": self.n_accepted,
            "acceptance_rate": self.acceptance_rate,
            "mean_state": encode_complex_matrix(self.mean_state.matrix),
            "entrywise_stderr": self.entrywise_stderr.tolist(),
        }


@dataclass
class _Accumulator:
    """採択状態の和と二乗和（シャード単位で結合可能）"""
    dim: int
    n_proposed: int = 0
    n_accepted: int = 0
    total: np.ndarray = None
    sq_re: np.ndarray = None
    sq_im: np.ndarray = None
    kept: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        shape = (self.dim, self.dim)
        if self.total is None:
            self.total = np.zeros(shape, dtype=complex)
            self.sq_re = np.zeros(shape)
            self.sq_im = np.zeros(shape)

    def add(self, accepted: np.ndarray, n_proposed: int, keep: int = 0):
        self.n_proposed += n_proposed
        self.n_accepted += accepted.shape[0]
        self.total += accepted.sum(axis=0)
        self.sq_re += (accepted.real ** 2).sum(axis=0)
        self.sq_im += (accepted.imag ** 2).sum(axis=0)
        if keep and accepted.shape[0]:
            self.kept.append(accepted[:keep])

    def merge(self, other: "_Accumulator") -> "_Accumulator":
        self.n_proposed += other.n_proposed
        self.n_accepted += other.n_accepted
        self.total += other.total
        self.sq_re += other.sq_re
        self.sq_im += other.sq_im
        self.kept.extend(other.kept)
        return self


def _resolve_seed(rng: Union[np.random.Generator, int, None]) -> int:
    """整数ならそのまま、Generator なら一つ引いて基準シードにする"""
    if rng is None:
        return 0
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2 ** 31 - 1))


def _run_shard(channel: CoarseGrainingChannel, target: np.ndarray, epsilon: float, prior: Prior,
               n: int, seed: int, keep: int) -> _Accumulator:
    rng = np.random.default_rng(seed)
    psi = prior.sample(channel.in_dim, n, rng)
    dist = trace_norm(channel.forward(psi) - target)
    acc = _Accumulator(channel.in_dim)
    acc.add(psi[dist <= epsilon], n, keep)
    return acc


# ─────────────── 棄却サンプリング ───────────────
def rejection_estimate(channel: CoarseGrainingChannel, rho: DensityMatrix, epsilon: float, prior: Prior,
                       n_proposed: int, rng: Union[np.random.Generator, int, None] = None,
                       threads: int = 1, shard_size: int = SHARD_SIZE, progress: bool = False,
                       keep_samples: int = 0) -> SampleEstimate:
    """Ω^ε(ρ) 上の事前分布平均を推定

    Args:
        rng: Generator（基準シードを一つ引く）または整数シード
        threads: シャードを並列に処理するスレッド数（結果には影響しない）
        keep_samples: 採択状態を最大この数だけ保持（エントロピー比較などに使う）
    """
    if epsilon <= 0:
        raise ValueError(f"ε は正: {epsilon}")
    if n_proposed < 1:
        raise ValueError(f"提案数は1以上: {n_proposed}")
    if rho.dim != channel.out_dim:
        raise DimensionMismatch(f"{channel.label}: ρ の次元 {rho.dim} ≠ 出力次元 {channel.out_dim}")
    if channel.in_dim * prior.env_dim > PURIFICATION_CAP:
        raise DimensionCapExceeded(
            f"純粋化の次元 D·dE = {channel.in_dim}·{prior.env_dim} が上限 {PURIFICATION_CAP} を超えます",
            {"in_dim": channel.in_dim, "env_dim": prior.env_dim},
        )

    base_seed = _resolve_seed(rng)
    sizes = [shard_size] * (n_proposed // shard_size)
    if n_proposed % shard_size:
        sizes.append(n_proposed % shard_size)
    keep = min(int(keep_samples), MAX_KEPT_SAMPLES)

    def work(index: int) -> _Accumulator:
        return _run_shard(channel, rho.matrix, epsilon, prior, sizes[index], base_seed + index, keep)

    logger.debug(
        f"棄却サンプリング: {channel.label}, prior={prior.label}, ε={epsilon}, "
        f"提案数={n_proposed}, シャード={len(sizes)}, threads={threads}"
    )
    bar = tqdm(total=len(sizes), desc=f"{channel.label}/{prior.label}", disable=None if progress else True, leave=False)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = []
            for acc in pool.map(work, range(len(sizes))):
                parts.append(acc)
                bar.update(1)
    else:
        parts = []
        for i in range(len(sizes)):
            parts.append(work(i))
            bar.update(1)
    bar.close()

    total = _Accumulator(channel.in_dim)
    for acc in parts:
        total.merge(acc)

    n = total.n_accepted
    if n == 0:
        raise ZeroAcceptance(
            f"採択ゼロ（{channel.label}, prior={prior.label}, ε={epsilon}, 提案数={n_proposed}）。"
            f"採択率 < {1.0 / n_proposed:.2e}",
            n_proposed,
        )
    mean = total.total / n
    if n > 1:
        var_re = np.clip((total.sq_re - n * mean.real ** 2) / (n - 1), 0.0, None)
        var_im = np.clip((total.sq_im - n * mean.imag ** 2) / (n - 1), 0.0, None)
    else:
        var_re = np.zeros_like(total.sq_re)
        var_im = np.zeros_like(total.sq_im)
    se_re, se_im = np.sqrt(var_re / n), np.sqrt(var_im / n)

    samples = None
    if keep and total.kept:
        samples = np.concatenate(total.kept)[:keep]

    est = SampleEstimate(
        mean_state=DensityMatrix.from_array(mean), n_proposed=total.n_proposed, n_accepted=n,
        epsilon=float(epsilon), entrywise_stderr=np.hypot(se_re, se_im), seed=base_seed,
        stderr_re=se_re, stderr_im=se_im, prior=prior.label, samples=samples,
    )
    logger.info(
        f"棄却サンプリング完了: {channel.label}/{prior.label}, 採択 {n}/{total.n_proposed} "
        f"(採択率 {est.acceptance_rate:.2e})"
    )
    return est


def oracle_excess(estimate: SampleEstimate, reference: np.ndarray) -> float:
    """max(|reference − mean| − (3·stderr + ε))。0 以下なら一致"""
    ref = np.asarray(reference, dtype=complex)
    if ref.shape != estimate.mean_state.matrix.shape:
        raise DimensionMismatch(f"次元が一致しません: {ref.shape} vs {estimate.mean_state.matrix.shape}")
    gap = np.abs(ref - estimate.mean_state.matrix)
    return float(np.max(gap - (3.0 * estimate.entrywise_stderr + estimate.epsilon)))


def oracle_agrees(estimate: SampleEstimate, reference: np.ndarray) -> bool:
    return oracle_excess(estimate, reference) <= 0.0


# ─────────────── Δ の分布（Λ_BnS） ───────────────
@dataclass(frozen=True, eq=False)
class DistanceHistogram:
    """一様ブロッホ球サンプルの Δ ヒストグラムと KS 検定"""
    d_E: int
    deltas: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    ks_statistic: float = 0.0
    ks_pvalue: float = 1.0
    n_excluded: int = 0

    def to_rows(self) -> List[Dict[str, Any]]:
        """CSV 行 (d_E, bin_left, bin_right, density, analytic)"""
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        analytic = bns_prior_distance_pdf(mids, self.d_E)
        return [
            {
                "d_E": self.d_E,
                "bin_left": float(self.edges[i]),
                "bin_right": float(self.edges[i + 1]),
                "density": float(self.density[i]),
                "analytic": float(analytic[i]),
            }
            for i in range(self.density.size)
        ]


def bns_prior_distance_batch(bloch: np.ndarray, dE: int) -> np.ndarray:
    """(n, 3) のブロッホベクトルに対する Δ"""
    r2 = np.sum(bloch ** 2, axis=1)
    return (dE - 1) * (1 - r2) / (2 * (3 * dE - 1) * (1 + bloch[:, 2]))


def distance_histogram_pure_vs_mixed(dE: int, n_states: int, rng: np.random.Generator,
                                     bins: int = 50) -> DistanceHistogram:
    """ブロッホ球内一様に ρ を引き、Δ の分布を解析式と比べる"""
    if dE < 2:
        raise ValueError(f"dE は2以上: {dE}")
    bloch = uniform_bloch_ball_batch(n_states, rng)
    ok = bloch[:, 2] > -1 + EPS_DIV
    deltas = bns_prior_distance_batch(bloch[ok], dE)
    a = bns_prior_scale(dE)
    density, edges = np.histogram(deltas, bins=bins, range=(0.0, 2 * a), density=True)
    ks = kstest(deltas, lambda x: bns_prior_distance_cdf(x, dE))
    logger.info(f"Δ ヒストグラム: dE={dE}, n={deltas.size}, KS={ks.statistic:.4f} (p={ks.pvalue:.3f})")
    return DistanceHistogram(
        d_E=dE, deltas=deltas, edges=edges, density=density,
        ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue), n_excluded=int((~ok).sum()),
    )


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """漸近 KS 臨界値 c(α)/√n"""
    return math.sqrt(-0.5 * math.log(alpha / 2)) / math.sqrt(n)


# ─────────────── Δ′ = T(MEP, AAM) ───────────────
@dataclass(frozen=True, eq=False)
class DistanceScan:
    """Δ′ の表（失敗した行は error 列に記録し集計から除外）"""
    channel: str
    d_E: int
    rows: List[Dict[str, Any]]
    j: Optional[float] = None

    @property
    def values(self) -> np.ndarray:
        return np.array([r["delta_prime"] for r in self.rows if not r.get("error")], dtype=float)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r.get("error"))

    def aggregates(self) -> Dict[str, float]:
        v = self.values
        if v.size == 0:
            return {"n_ok": 0, "n_failed": self.n_failed, "mean": float("nan"), "max": float("nan")}
        return {"n_ok": int(v.size), "n_failed": self.n_failed, "mean": float(v.mean()), "max": float(v.max())}


def _scan_bns(dE: int, n_states: int, rng: np.random.Generator, tol: float) -> List[Dict[str, Any]]:
    rows = []
    for x, y, z in uniform_bloch_ball_batch(n_states, rng):
        row: Dict[str, Any] = {"x": float(x), "y": float(y), "z": float(z), "delta_prime": float("nan"), "error": ""}
        try:
            rho = DensityMatrix.from_bloch(BlochVector(float(x), float(y), float(z)))
            row["delta_prime"] = trace_distance(mep_bns(rho, tol).state.matrix, aam_bns_mixed(rho, dE).state.matrix)
        except InferenceError as e:
            row["error"] = type(e).__name__
        rows.append(row)
    return rows


def _scan_ptrace(env_dim: int, dE: int, n_states: int, rng: np.random.Generator, tol: float) -> List[Dict[str, Any]]:
    rows = []
    channel = make_partial_trace_channel(2, env_dim)
    for x, y, z in uniform_bloch_ball_batch(n_states, rng):
        row: Dict[str, Any] = {"x": float(x), "y": float(y), "z": float(z), "delta_prime": float("nan"), "error": ""}
        try:
            rho = DensityMatrix.from_bloch(BlochVector(float(x), float(y), float(z)))
            obs, targets = tomographic_targets(rho)
            mep = mep_generic(channel, obs, targets, tol=tol, target_state=rho)
            row["delta_prime"] = trace_distance(mep.state.matrix, aam_partial_trace(rho, env_dim, dE).state.matrix)
        except InferenceError as e:
            row["error"] = type(e).__name__
        rows.append(row)
    return rows


def _scan_su2(j: float, dE: int, r_grid: Sequence[float], tol: float) -> List[Dict[str, Any]]:
    """r⃗ ∥ ẑ の格子。両割当とも J_z 基底で対角なので Δ′ = ½Σ|p_AAM − p_MEP|"""
    r_grid = np.asarray(r_grid, dtype=float)
    aam = pm_curve(j, dE, r_grid, tol).p
    mep = mep_pm_curve(j, r_grid).p
    return [
        {"r": float(r), "delta_prime": float(0.5 * np.abs(aam[:, k] - mep[:, k]).sum()), "error": ""}
        for k, r in enumerate(r_grid)
    ]


def mep_aam_distance_scan(channel: str, prior_env_dim: int, *, r_grid: Optional[Sequence[float]] = None,
                          n_states: int = 0, rng: Optional[np.random.Generator] = None,
                          tol: float = 1e-10, quadrature_tol: float = 1e-7, **params) -> DistanceScan:
    """MEP と AAM のトレース距離 Δ′

    - bns / ptrace: ブロッホ球一様サンプル n_states 個での分布
    - su2: r グリッド上の曲線（params["j"]）
    """
    if prior_env_dim < 1:
        raise ValueError(f"dE は1以上: {prior_env_dim}")
    if channel == "bns":
        rows = _scan_bns(prior_env_dim, n_states, rng or np.random.default_rng(0), tol)
        scan = DistanceScan(channel="bns", d_E=prior_env_dim, rows=rows)
    elif channel == "ptrace":
        rows = _scan_ptrace(int(params.get("env_dim", 2)), prior_env_dim, n_states,
                            rng or np.random.default_rng(0), tol)
        scan = DistanceScan(channel="ptrace", d_E=prior_env_dim, rows=rows)
    elif channel == "su2":
        if r_grid is None:
            raise ValueError("su2 の走査には r_grid が必要です")
        j = float(params["j"])
        scan = DistanceScan(channel="su2", d_E=prior_env_dim, rows=_scan_su2(j, prior_env_dim, r_grid, quadrature_tol), j=j)
    else:
        raise ValueError(f"未知のチャネル: {channel}")
    agg = scan.aggregates()
    logger.info(f"Δ′ 走査 {channel}: dE={prior_env_dim}, 成功={agg['n_ok']}, 失敗={agg['n_failed']}, 平均={agg['mean']:.4g}")
    return scan


# ─────────────── 参照状態と棒グラフ用データ ───────────────
TABLE_ONE = (
    (-0.3061, 0.1269, -0.6142),
    (0.0923, 0.1550, 0.0119),
    (-0.0776, 0.1248, 0.03211),
    (-0.2439, 0.0130, -0.1526),
    (0.0749, 0.0032, -0.0502),
    (-0.1384, 0.1779, -0.1613),
    (-0.1082, -0.1748, -0.0468),
    (-0.1021, 0.0914, -0.5838),
    (-0.1434, -0.1630, -0.1391),
    (0.3696, -0.0652, -0.1729),
)


def table_one_states() -> List[BlochVector]:
    """Λ_BnS の検証に使う10個の参照ブロッホベクトル"""
    return [BlochVector(*v) for v in TABLE_ONE]


def _norm_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(trace_norm(np.asarray(a) - np.asarray(b)))


def rejection_bars_bns(epsilon: float, n_proposed: int, seed: int, dE: int = 2, threads: int = 1,
                       states: Optional[Sequence[BlochVector]] = None, progress: bool = False) -> List[Dict[str, Any]]:
    """参照状態ごとの棒グラフ用データ

    total_error = ‖A^ε_pure − A_pure‖₁ + ‖A^ε_mixed − A_mixed‖₁、prior_gap = ‖A_pure − A_mixed‖₁ = 2Δ
    """
    channel = make_bns_channel()
    rows = []
    for idx, v in enumerate(states if states is not None else table_one_states()):
        rho = DensityMatrix.from_bloch(v)
        pure = aam_bns_mixed(rho, 1)
        mixed = aam_bns_mixed(rho, dE)
        est_pure = rejection_estimate(channel, rho, epsilon, Prior.of(1), n_proposed, seed + ROW_SEED_STRIDE * idx,
                                      threads=threads, progress=progress)
        est_mixed = rejection_estimate(channel, rho, epsilon, Prior.of(dE), n_proposed, seed + ROW_SEED_STRIDE * idx + ROW_SEED_STRIDE // 2,
                                       threads=threads, progress=progress)
        rows.append({
            "index": idx, "x": v.x, "y": v.y, "z": v.z,
            "error_pure": _norm_gap(pure.state.matrix, est_pure.mean_state.matrix),
            "error_mixed": _norm_gap(mixed.state.matrix, est_mixed.mean_state.matrix),
            "prior_gap": 2.0 * bns_prior_distance(v, dE),
            "excess_pure": oracle_excess(est_pure, pure.state.matrix),
            "excess_mixed": oracle_excess(est_mixed, mixed.state.matrix),
            "accepted_pure": est_pure.n_accepted,
            "accepted_mixed": est_mixed.n_accepted,
        })
    return rows


def rejection_bars_su2(j: float, r_values: Sequence[float], epsilon: float, n_proposed: int, seed: int,
                       dE: int = 2, tol: float = 1e-7, threads: int = 1,
                       progress: bool = False) -> List[Dict[str, Any]]:
    """Λ_J（r⃗ ∥ ẑ）の棒グラフ用データ（定義は rejection_bars_bns と同じ）"""
    channel = make_su2_channel(j)
    r_values = np.asarray(r_values, dtype=float)
    p_pure = pm_curve(j, 1, r_values, tol).p
    p_mixed = pm_curve(j, dE, r_values, tol).p
    rows = []
    for k, r in enumerate(r_values):
        v = BlochVector(0.0, 0.0, float(r))
        rho = DensityMatrix.from_bloch(v)
        pure = diagonal_in_direction(j, v, p_pure[:, k]).matrix if r > 0 else np.eye(channel.in_dim) / channel.in_dim
        mixed = diagonal_in_direction(j, v, p_mixed[:, k]).matrix if r > 0 else np.eye(channel.in_dim) / channel.in_dim
        est_pure = rejection_estimate(channel, rho, epsilon, Prior.of(1), n_proposed, seed + ROW_SEED_STRIDE * k,
                                      threads=threads, progress=progress)
        est_mixed = rejection_estimate(channel, rho, epsilon, Prior.of(dE), n_proposed, seed + ROW_SEED_STRIDE * k + ROW_SEED_STRIDE // 2,
                                       threads=threads, progress=progress)
        rows.append({
            "j": j, "r": float(r),
            "error_pure": _norm_gap(pure, est_pure.mean_state.matrix),
            "error_mixed": _norm_gap(mixed, est_mixed.mean_state.matrix),
            "prior_gap": _norm_gap(pure, mixed),
            "excess_pure": oracle_excess(est_pure, pure),
            "excess_mixed": oracle_excess(est_mixed, mixed),
            "accepted_pure": est_pure.n_accepted,
            "accepted_mixed": est_mixed.n_accepted,
        })
    return rows
