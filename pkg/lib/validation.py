# lib/validation.py
# -*- coding: utf-8 -*-
"""受け入れ検査スイート（fast / full）

各検査は (合否, 詳細) を返す関数。例外は検査の失敗として記録する。
fast は1分程度、full は棄却サンプリングの照合を含み30分以内を目安にする。
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from lib.aam import (
    aam_bns_mixed,
    aam_partial_trace,
    bns_prior_distance,
    bns_prior_distance_pdf,
    bns_square_pure,
    pm_curve,
)
from lib.channels import (
    BNS_ACTION_TABLE,
    bns_forward_compact,
    bns_forward_table,
    bns_symmetry_unitary,
    check_symmetry,
    hermitian_basis,
    make_bns_channel,
    make_partial_trace_channel,
    make_su2_channel,
    symmetry_average,
    transfer_from_map,
    verify_bns_table,
)
from lib.config import RunConfig
from lib.mep import (
    brillouin,
    brillouin_inverse,
    gibbs_state,
    log_partition,
    mep_bns,
    mep_generic,
    mep_su2,
    tomographic_targets,
)
from lib.montecarlo import (
    Prior,
    distance_histogram_pure_vs_mixed,
    mep_aam_distance_scan,
    oracle_excess,
    rejection_estimate,
    table_one_states,
)
from lib.states import (
    PAULI,
    BlochVector,
    DensityMatrix,
    random_density_matrix,
    random_unitary,
    trace_distance,
    uniform_bloch_ball_batch,
    von_neumann_entropy,
)
from lib.thermo import WorkScenario, average_work, work_ordering_holds

logger = logging.getLogger(__name__)

CheckFn = Callable[["SuiteContext"], Tuple[bool, str]]
MIN_ACCEPTED = 1_000


@dataclass
class SuiteContext:
    """検査に渡す設定（BnS 作用表は改ざん検査のため差し替え可能）"""
    cfg: RunConfig
    bns_table: Optional[Dict] = None
    progress: bool = False

    def rng(self, key: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, key])

    @property
    def table(self) -> Dict:
        return BNS_ACTION_TABLE if self.bns_table is None else self.bns_table


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_blochs(rng: np.random.Generator, n: int, margin: float = 0.05) -> List[BlochVector]:
    """z > −1 + margin の一様ブロッホ球サンプル"""
    out: List[BlochVector] = []
    while len(out) < n:
        for v in uniform_bloch_ball_batch(n, rng):
            if v[2] > -1 + margin and len(out) < n:
                out.append(BlochVector.from_array(v))
    return out


# ─────────────── fast ───────────────
def check_partial_trace_equivalence(ctx: SuiteContext) -> Tuple[bool, str]:
    """部分トレースでは AAM と MEP が一致"""
    rng = ctx.rng(1)
    worst = 0.0
    for dE in (2, 3, 4):
        channel = make_partial_trace_channel(2, dE)
        for v in _random_blochs(rng, 100, margin=0.0):
            rho = DensityMatrix.from_bloch(v)
            obs, targets = tomographic_targets(rho)
            mep = mep_generic(channel, obs, targets, tol=ctx.cfg.solver_tol, target_state=rho)
            worst = max(worst, trace_distance(aam_partial_trace(rho, dE).state.matrix, mep.state.matrix))
    return worst < 1e-8, f"max T = {worst:.2e}"


def check_bns_table(ctx: SuiteContext) -> Tuple[bool, str]:
    """作用表が行列形・双対性・トレース保存と整合する"""
    table = ctx.table
    mismatch = verify_bns_table(table)
    T = transfer_from_map(lambda m: bns_forward_table(m, table), 4, 2)
    rng = ctx.rng(2)
    duality = 0.0
    for _ in range(20):
        psi = random_density_matrix(4, rng)
        o = random_density_matrix(2, rng) - 0.5 * np.eye(2)
        dual = np.einsum("a,aij->ij", np.einsum("aij,ji->a", hermitian_basis(2), o) @ T, hermitian_basis(4))
        lhs = np.trace(o @ bns_forward_compact(psi))
        duality = max(duality, abs(lhs - np.trace(dual @ psi)))
    trace_gap = abs(np.trace(bns_forward_table(np.eye(4, dtype=complex), table)) - 4.0)
    ok = mismatch < 1e-12 and duality < 1e-12 and trace_gap < 1e-12
    return ok, f"表差 {mismatch:.1e}, 双対差 {duality:.1e}, トレース差 {trace_gap:.1e}"


def check_bns_symmetry(ctx: SuiteContext) -> Tuple[bool, str]:
    """U = 1⊕1⊕V で不変、かつ対称平均が ○/△/◇ を再現"""
    rng = ctx.rng(3)
    channel = make_bns_channel(ctx.table)
    worst = 0.0
    for _ in range(5):
        _, res = check_symmetry(channel, bns_symmetry_unitary(random_unitary(2, rng)), 10, rng)
        worst = max(worst, res)
    psi = random_density_matrix(4, rng)
    # 四元数群 {±I, ±iσ_k} 上の平均で直交補空間とのコヒーレンスが厳密に消える
    group = [s * g for s in (1, -1) for g in (np.eye(2), 1j * PAULI[0], 1j * PAULI[1], 1j * PAULI[2])]
    us = np.array([bns_symmetry_unitary(v) for v in group])
    avg = symmetry_average(psi, us)
    rho = DensityMatrix.from_array(channel.forward(psi))
    ref = aam_bns_mixed(rho, 1).state.matrix
    # □ は事前分布に依存するので ○, △, ◇ のみ比較
    gap = max(abs(avg[0, 0] - ref[0, 0]), float(np.max(np.abs(avg[0, 1:] - ref[0, 1:]))),
              abs(np.trace(avg[1:, 1:]) - np.trace(ref[1:, 1:])))
    return worst < 1e-10 and gap < 1e-10, f"対称性残差 {worst:.1e}, 平均との差 {gap:.1e}"


def check_prior_distance_law(ctx: SuiteContext) -> Tuple[bool, str]:
    """Δ の解析式・KS 検定・Pr(0|2) = 15"""
    rng = ctx.rng(4)
    worst = 0.0
    for v in _random_blochs(rng, 1000):
        rho = DensityMatrix.from_bloch(v)
        for dE in (2, 5):
            t = trace_distance(aam_bns_mixed(rho, 1).state.matrix, aam_bns_mixed(rho, dE).state.matrix)
            worst = max(worst, abs(t - bns_prior_distance(v, dE)))
    pvalues = []
    for dE in (2, 4, 8):
        pvalues.append(distance_histogram_pure_vs_mixed(dE, 100_000, ctx.rng(40 + dE)).ks_pvalue)
    p0 = bns_prior_distance_pdf(0.0, 2)
    ok = worst < 1e-10 and min(pvalues) > 0.01 and abs(p0 - 15.0) < 1e-9
    return ok, f"max|Δ−T| = {worst:.1e}, KS p = {[round(p, 3) for p in pvalues]}, Pr(0|2) = {p0:.6f}"


def check_bns_mep_structure(ctx: SuiteContext) -> Tuple[bool, str]:
    """○ = ρ00, ◇ = ρ11/3, △ = ρ01/√3, □_MEP − □_pure = 1/(2Z²ρ00)"""
    rng = ctx.rng(5)
    worst = 0.0
    for v in _random_blochs(rng, 100, margin=0.2):
        rho = DensityMatrix.from_bloch(v)
        sol = mep_bns(rho, ctx.cfg.solver_tol)
        m, r = sol.state.matrix, rho.matrix
        z = sol.diagnostics["Z"]
        gaps = [
            abs(m[0, 0] - r[0, 0]), abs(m[1, 1] - r[1, 1] / 3), abs(m[0, 1] - r[0, 1] / math.sqrt(3)),
            abs((m[1, 2].real - bns_square_pure(rho)) - 1 / (2 * z * z * r[0, 0].real)),
        ]
        worst = max(worst, float(max(gaps)))
    center = mep_bns(DensityMatrix.maximally_mixed(2)).state.matrix
    center_gap = float(np.max(np.abs(center - np.diag([0.5, 1 / 6, 1 / 6, 1 / 6]))))
    return worst < 1e-8 and center_gap < 1e-10, f"構造差 {worst:.1e}, ρ=I/2 差 {center_gap:.1e}"


def check_mep_solvers(ctx: SuiteContext) -> Tuple[bool, str]:
    """制約残差と ln Z の勾配（差分）"""
    rng = ctx.rng(6)
    worst_res, worst_grad = 0.0, 0.0
    for v in _random_blochs(rng, 100, margin=0.2):
        rho = DensityMatrix.from_bloch(v)
        worst_res = max(worst_res, mep_bns(rho, ctx.cfg.solver_tol).residual)
        for j in (0.5, 1.5, 4.5):
            worst_res = max(worst_res, mep_su2(j, v).residual)
    obs = [PAULI[i] for i in range(3)]
    h = 1e-5
    for channel in (make_bns_channel(ctx.table), make_su2_channel(2.5)):
        Q = [channel.dual(o) for o in obs]
        for _ in range(5):
            lam = rng.normal(scale=0.8, size=3)
            psi = gibbs_state(channel, obs, lam)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (log_partition(channel, obs, lam + e) - log_partition(channel, obs, lam - e)) / (2 * h)
                worst_grad = max(worst_grad, abs(fd + np.trace(Q[i] @ psi).real))
    return worst_res < 1e-9 and worst_grad < 1e-5, f"残差 {worst_res:.1e}, 勾配差 {worst_grad:.1e}"


def check_brillouin(ctx: SuiteContext) -> Tuple[bool, str]:
    """逆関数の往復・j = 1/2 の tanh・グリッド上の制約残差"""
    worst_rt, worst_tanh, worst_res = 0.0, 0.0, 0.0
    for j in (0.5, 1.5, 2.5, 3.5, 4.5):
        for r in np.linspace(0.0, 0.99, 34):
            worst_rt = max(worst_rt, abs(brillouin(j, brillouin_inverse(j, r)) - r))
            worst_res = max(worst_res, mep_su2(j, BlochVector(0.0, 0.0, float(r))).residual)
    for lam in np.linspace(-3, 3, 25):
        worst_tanh = max(worst_tanh, abs(brillouin(0.5, lam) - math.tanh(lam)))
    ok = worst_rt < 1e-10 and worst_tanh < 1e-12 and worst_res < 1e-9
    return ok, f"往復 {worst_rt:.1e}, tanh {worst_tanh:.1e}, 残差 {worst_res:.1e}"


def check_su2_endpoints(ctx: SuiteContext) -> Tuple[bool, str]:
    """Σp = 1、p(0) = 1/D、p_j(0.999) > 0.95（j = 3/2）"""
    r_grid = np.linspace(0.0, 1.0, 21)
    worst_sum, worst_zero = 0.0, 0.0
    for j in (1.5, 2.5, 3.5, 4.5):
        D = int(round(2 * j)) + 1
        for dE in (1, D):
            p = pm_curve(j, dE, r_grid, ctx.cfg.quadrature_tol).p
            worst_sum = max(worst_sum, float(np.max(np.abs(p.sum(axis=0) - 1.0))))
            worst_zero = max(worst_zero, float(np.max(np.abs(p[:, 0] - 1.0 / D))))
    top = float(pm_curve(1.5, 1, [0.999], ctx.cfg.quadrature_tol).p[0, 0])
    ok = worst_sum < 1e-8 and worst_zero < 1e-8 and top > 0.95
    return ok, f"Σp 差 {worst_sum:.1e}, p(0) 差 {worst_zero:.1e}, p_j(0.999) = {top:.4f}"


def check_delta_prime_endpoints(ctx: SuiteContext) -> Tuple[bool, str]:
    """部分トレースで Δ′ ≡ 0、Λ_J で Δ′(0) = Δ′(1) = 0"""
    pt = mep_aam_distance_scan("ptrace", 1, n_states=20, rng=ctx.rng(7), tol=ctx.cfg.solver_tol, env_dim=3)
    worst_pt = float(pt.values.max()) if pt.values.size else float("inf")
    worst_su2 = 0.0
    for j in (1.5, 2.5, 3.5, 4.5):
        for dE in (1, int(round(2 * j)) + 1):
            scan = mep_aam_distance_scan("su2", dE, r_grid=[0.0, 1.0], quadrature_tol=ctx.cfg.quadrature_tol, j=j)
            worst_su2 = max(worst_su2, float(scan.values.max()))
    ok = worst_pt < 1e-8 and worst_su2 < 1e-12 and pt.n_failed == 0
    return ok, f"ptrace max Δ′ = {worst_pt:.1e}, su2 端点 max Δ′ = {worst_su2:.1e}"


def check_work_ordering(ctx: SuiteContext) -> Tuple[bool, str]:
    """tr(ψ J_z²) の順序と W(0) = W(2π) = 0"""
    details = []
    ok = True
    for j in (1.5, 2.5, 3.5):
        holds, moments = work_ordering_holds(WorkScenario(j=j), ctx.cfg.quadrature_tol)
        ok = ok and holds
        details.append(f"j={j}: " + ", ".join(f"{k}={v:.4f}" for k, v in moments.items()))
        psi = DensityMatrix.maximally_mixed(int(round(2 * j)) + 1)
        ends = average_work(psi, j, 1.0, np.array([0.0, 2 * np.pi]))
        ok = ok and bool(np.all(np.abs(ends) < 1e-12))
    return ok, "; ".join(details)


def check_oracle_partial_trace(ctx: SuiteContext) -> Tuple[bool, str]:
    """部分トレースの棄却サンプリング平均 ≈ ρ ⊗ I/dE"""
    channel = make_partial_trace_channel(2, 2)
    rho = DensityMatrix.from_bloch(BlochVector(0.2, -0.1, 0.3))
    est = rejection_estimate(channel, rho, 0.1, Prior.of(1), 1_500_000, ctx.cfg.seed,
                             threads=ctx.cfg.threads, progress=ctx.progress)
    excess = oracle_excess(est, aam_partial_trace(rho, 2).state.matrix)
    return excess <= 0.0 and est.n_accepted >= MIN_ACCEPTED, f"採択 {est.n_accepted}, 超過 {excess:.2e}"


def check_reproducibility(ctx: SuiteContext) -> Tuple[bool, str]:
    """同じシードならスレッド数によらずビット一致"""
    channel = make_bns_channel(ctx.table)
    rho = DensityMatrix.from_bloch(table_one_states()[1])
    runs = [
        rejection_estimate(channel, rho, 0.2, Prior.of(1), 120_000, ctx.cfg.seed, threads=t, shard_size=20_000)
        for t in (1, 1, 3)
    ]
    same = all(
        np.array_equal(runs[0].mean_state.matrix, r.mean_state.matrix)
        and np.array_equal(runs[0].entrywise_stderr, r.entrywise_stderr)
        and runs[0].n_accepted == r.n_accepted
        for r in runs[1:]
    )
    return same, f"採択数 {[r.n_accepted for r in runs]}"


# ─────────────── full ───────────────
def _estimate_with_min_accepted(channel, rho, epsilon, prior, seed, ctx: SuiteContext,
                                pilot: int = 1_000_000, cap: int = 300_000_000, keep_samples: int = 0):
    """採択数が MIN_ACCEPTED 以上になる提案数をパイロットから見積もる"""
    est = rejection_estimate(channel, rho, epsilon, prior, pilot, seed, threads=ctx.cfg.threads, progress=ctx.progress,
                             keep_samples=keep_samples)
    if est.n_accepted >= MIN_ACCEPTED:
        return est
    rate = max(est.n_accepted, 1) / pilot
    n = min(int(math.ceil(1.3 * MIN_ACCEPTED / rate)), cap)
    return rejection_estimate(channel, rho, epsilon, prior, n, seed, threads=ctx.cfg.threads, progress=ctx.progress,
                              keep_samples=keep_samples)


def check_bns_oracle(ctx: SuiteContext) -> Tuple[bool, str]:
    """参照状態10個: 閉形式と棄却サンプリング（純粋 / dE = 2）"""
    channel = make_bns_channel(ctx.table)
    worst = -float("inf")
    accepted = []
    for idx, v in enumerate(table_one_states()):
        rho = DensityMatrix.from_bloch(v)
        for dE in (1, 2):
            est = rejection_estimate(channel, rho, ctx.cfg.epsilon, Prior.of(dE), 2_000_000,
                                     ctx.cfg.seed + 10_000 * idx + dE, threads=ctx.cfg.threads, progress=ctx.progress)
            worst = max(worst, oracle_excess(est, aam_bns_mixed(rho, dE).state.matrix))
            accepted.append(est.n_accepted)
    return worst <= 0.0, f"最大超過 {worst:.2e}, 採択数 {min(accepted)}〜{max(accepted)}"


def check_su2_oracle(ctx: SuiteContext) -> Tuple[bool, str]:
    """j = 3/2 の求積 p_m と棄却サンプリング（r = 0.25, 0.5, 0.75）"""
    j = 1.5
    channel = make_su2_channel(j)
    worst = -float("inf")
    accepted = []
    for k, r in enumerate((0.25, 0.5, 0.75)):
        v = BlochVector(0.0, 0.0, r)
        rho = DensityMatrix.from_bloch(v)
        for dE in (1, 2):
            p = pm_curve(j, dE, [r], ctx.cfg.quadrature_tol).p[:, 0]
            est = _estimate_with_min_accepted(channel, rho, ctx.cfg.epsilon, Prior.of(dE),
                                              ctx.cfg.seed + 10_000 * k + dE, ctx)
            worst = max(worst, oracle_excess(est, np.diag(p)))
            accepted.append(est.n_accepted)
    return worst <= 0.0 and min(accepted) >= MIN_ACCEPTED, f"最大超過 {worst:.2e}, 採択数 {accepted}"


def check_mep_entropy_dominance(ctx: SuiteContext) -> Tuple[bool, str]:
    """採択された状態 ψ はどれも Λ[ψ] に対する MEP 状態以下のエントロピー（状態ごとに MIN_ACCEPTED 件以上を比較）"""
    worst = -float("inf")
    fewest = MIN_ACCEPTED
    compared = 0
    rng = ctx.rng(8)
    for label, channel, solve in (
        ("bns", make_bns_channel(ctx.table), lambda r: mep_bns(r, ctx.cfg.solver_tol)),
        ("su2", make_su2_channel(2.5), lambda r: mep_su2(2.5, BlochVector.from_state(r))),
    ):
        for v in _random_blochs(rng, 5, margin=0.3):
            rho = DensityMatrix.from_bloch(v)
            est = _estimate_with_min_accepted(channel, rho, 0.3, Prior.of(2), int(rng.integers(0, 2 ** 31 - 1)), ctx,
                                              pilot=200_000, keep_samples=MIN_ACCEPTED)
            samples = est.samples if est.samples is not None else []
            fewest = min(fewest, len(samples))
            compared += len(samples)
            for psi in samples:
                eff = DensityMatrix.from_array(channel.forward(psi))
                worst = max(worst, von_neumann_entropy(psi) - solve(eff).entropy)
    ok = worst <= 1e-6 and fewest >= MIN_ACCEPTED
    return ok, f"max(S(ψ) − S_MEP) = {worst:.2e}, 比較 {compared} 件（状態あたり最少 {fewest}）"


def check_delta_prime_saturation(ctx: SuiteContext) -> Tuple[bool, str]:
    """j = 7/2, r = 0.5: dE = 8, 16, 32 で Δ′ は弱く減少し、16 と 32 の差は 10% 未満"""
    vals = {}
    for dE in (8, 16, 32):
        scan = mep_aam_distance_scan("su2", dE, r_grid=[0.5], quadrature_tol=ctx.cfg.quadrature_tol, j=3.5)
        vals[dE] = scan.rows[0]["delta_prime"]
    slack = 1e-6
    ok = vals[8] >= vals[16] - slack and vals[16] >= vals[32] - slack and abs(vals[16] - vals[32]) < 0.1 * vals[16]
    return ok, ", ".join(f"Δ′(dE={k}) = {v:.5f}" for k, v in vals.items())


def check_epsilon_consistency(ctx: SuiteContext) -> Tuple[bool, str]:
    """ε と ε/2 の推定の差 < 3·(合成標準誤差) + ε/2"""
    channel = make_bns_channel(ctx.table)
    rho = DensityMatrix.from_bloch(table_one_states()[4])
    eps = ctx.cfg.epsilon
    a = rejection_estimate(channel, rho, eps, Prior.of(1), 2_000_000, ctx.cfg.seed, threads=ctx.cfg.threads)
    b = rejection_estimate(channel, rho, eps / 2, Prior.of(1), 8_000_000, ctx.cfg.seed + 1, threads=ctx.cfg.threads)
    se = np.hypot(a.entrywise_stderr, b.entrywise_stderr)
    excess = float(np.max(np.abs(a.mean_state.matrix - b.mean_state.matrix) - (3 * se + eps / 2)))
    return excess <= 0.0, f"超過 {excess:.2e}, 採択 {a.n_accepted}/{b.n_accepted}"


FAST_CHECKS: List[Tuple[str, CheckFn]] = [
    ("partial_trace_equivalence", check_partial_trace_equivalence),
    ("bns_table", check_bns_table),
    ("bns_symmetry", check_bns_symmetry),
    ("prior_distance_law", check_prior_distance_law),
    ("bns_mep_structure", check_bns_mep_structure),
    ("mep_solvers", check_mep_solvers),
    ("brillouin", check_brillouin),
    ("su2_endpoints", check_su2_endpoints),
    ("delta_prime_endpoints", check_delta_prime_endpoints),
    ("work_ordering", check_work_ordering),
    ("oracle_partial_trace", check_oracle_partial_trace),
    ("reproducibility", check_reproducibility),
]

FULL_CHECKS: List[Tuple[str, CheckFn]] = FAST_CHECKS + [
    ("bns_oracle", check_bns_oracle),
    ("su2_oracle", check_su2_oracle),
    ("mep_entropy_dominance", check_mep_entropy_dominance),
    ("delta_prime_saturation", check_delta_prime_saturation),
    ("epsilon_consistency", check_epsilon_consistency),
]

SUITES = {"fast": FAST_CHECKS, "full": FULL_CHECKS}


def run_suite(suite: str, cfg: RunConfig, bns_table: Optional[Dict] = None, progress: bool = False,
              only: Optional[List[str]] = None) -> List[CheckResult]:
    """スイートを実行して検査ごとの結果を返す"""
    if suite not in SUITES:
        raise ValueError(f"未知のスイート: {suite}（fast / full）")
    known = [name for name, _ in SUITES[suite]]
    unknown = [name for name in (only or []) if name not in known]
    if unknown:
        raise ValueError(f"スイート {suite} にない検査名: {unknown}")
    ctx = SuiteContext(cfg=cfg, bns_table=bns_table, progress=progress)
    results = []
    for name, fn in SUITES[suite]:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(ctx)
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        seconds = time.perf_counter() - t0
        logger.debug(f"検査 {name}: {'OK' if passed else 'FAIL'} ({seconds:.1f}s) {detail}")
        results.append(CheckResult(name=name, passed=bool(passed), detail=detail, seconds=seconds))
    return results
