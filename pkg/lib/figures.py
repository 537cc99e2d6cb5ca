# lib/figures.py
# -*- coding: utf-8 -*-
"""図 2〜11 の元データを作る

画像は描かない。図ごとに out/figN/ へ CSV（または JSON）と manifest.json を書き、
実行時間だけは timing.json に分けて書く（manifest は再実行でバイト一致する）。
"""
import logging
import pathlib
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from lib import TOOL_NAME, __version__
from lib.aam import bns_prior_distance_pdf, bns_prior_scale, pm_curve
from lib.config import RunConfig
from lib.mep import mep_pm_curve
from lib.montecarlo import (
    distance_histogram_pure_vs_mixed,
    mep_aam_distance_scan,
    rejection_bars_bns,
    rejection_bars_su2,
)
from lib.thermo import WorkScenario, work_comparison
from lib.utils import save_csv, save_json

logger = logging.getLogger(__name__)

SPIN_VALUES = (1.5, 2.5, 3.5, 4.5)
WORK_SPINS = (1.5, 2.5, 3.5)
LARGE_ENV = 1_000_000
FIG2_ENVS = (2, 3, 4, 8, LARGE_ENV)
FIG3_ENVS = (1, 4, 8, 16, LARGE_ENV)
FIG8_SPIN = 3.5
FIG8_ENVS = (1, 2, 4, 8, 16, 32)
FIG11_SPIN = 1.5


@dataclass
class Table:
    columns: List[str]
    rows: List[Dict[str, Any]]


@dataclass
class FigureData:
    """図の元データ（表の集まりとパラメータ）"""
    tables: Dict[str, Table]
    parameters: Dict[str, Any] = field(default_factory=dict)


@dataclass
class FigureOptions:
    """サンプル数などの上書き（None は既定値）"""
    n_states: Optional[int] = None
    n_proposed: Optional[int] = None
    progress: bool = False


# ------------- r グリッド -------------
def full_r_grid(n: int = 41) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def capped_r_grid(r_max: float, n: int = 37) -> np.ndarray:
    """大きな dE ではアンダーフローするため r_max で打ち切り、r = 1 だけ閉形式で足す"""
    return np.append(np.linspace(0.0, r_max, n), 1.0)


def _rng(cfg: RunConfig, *keys: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, *keys])


def _curve_rows(curve, extra: Dict[str, Any]) -> List[Dict[str, Any]]:
    return [{**extra, **row} for row in curve.to_rows()]


# ─────────────── 各図 ───────────────
def figure2(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """Pr(Δ|dE): 解析曲線と一様ブロッホ球サンプルのヒストグラム"""
    n_states = opts.n_states or 100_000
    analytic, hist = [], []
    for k, dE in enumerate(FIG2_ENVS):
        a = bns_prior_scale(dE)
        grid = np.linspace(0.0, 2 * a, 201)
        pdf = bns_prior_distance_pdf(grid, dE)
        analytic.extend({"d_E": dE, "delta": float(d), "pdf": float(p)} for d, p in zip(grid, pdf))
        h = distance_histogram_pure_vs_mixed(dE, n_states, _rng(cfg, 2, k))
        for row in h.to_rows():
            row.update({"ks_statistic": h.ks_statistic, "ks_pvalue": h.ks_pvalue})
            hist.append(row)
    return FigureData(
        tables={
            "analytic": Table(["d_E", "delta", "pdf"], analytic),
            "histogram": Table(["d_E", "bin_left", "bin_right", "density", "analytic", "ks_statistic", "ks_pvalue"], hist),
        },
        parameters={"d_E": list(FIG2_ENVS), "n_states": n_states, "bins": 50},
    )


def figure3(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """Pr(Δ′|dE): Λ_BnS の MEP と AAM のトレース距離の分布"""
    n_states = opts.n_states or 2_000
    scans = {
        dE: mep_aam_distance_scan("bns", dE, n_states=n_states, rng=_rng(cfg, 3, k), tol=cfg.solver_tol)
        for k, dE in enumerate(FIG3_ENVS)
    }
    top = max(float(s.values.max()) for s in scans.values() if s.values.size)
    edges = np.linspace(0.0, top, 41)
    hist, summary = [], []
    for dE, scan in scans.items():
        density, _ = np.histogram(scan.values, bins=edges, density=True)
        hist.extend(
            {"d_E": dE, "bin_left": float(edges[i]), "bin_right": float(edges[i + 1]), "density": float(density[i])}
            for i in range(density.size)
        )
        summary.append({"d_E": dE, **scan.aggregates()})
    return FigureData(
        tables={
            "histogram": Table(["d_E", "bin_left", "bin_right", "density"], hist),
            "summary": Table(["d_E", "n_ok", "n_failed", "mean", "max"], summary),
        },
        parameters={"d_E": list(FIG3_ENVS), "n_states": n_states, "bins": 40},
    )


def figure4(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """AAM（純粋事前分布）の p_m(r)"""
    r_grid = full_r_grid()
    rows = []
    for j in SPIN_VALUES:
        rows.extend(_curve_rows(pm_curve(j, 1, r_grid, cfg.quadrature_tol), {"j": j, "d_E": 1}))
    return FigureData(
        tables={"pm": Table(["j", "d_E", "m", "r", "p"], rows)},
        parameters={"j": list(SPIN_VALUES), "r_points": r_grid.size},
    )


def figure5(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """AAM（混合事前分布 dE = 2j+1）の p_m(r)"""
    r_grid = capped_r_grid(0.95)
    rows = []
    for j in SPIN_VALUES:
        dE = int(round(2 * j)) + 1
        rows.extend(_curve_rows(pm_curve(j, dE, r_grid, cfg.quadrature_tol), {"j": j, "d_E": dE}))
    return FigureData(
        tables={"pm": Table(["j", "d_E", "m", "r", "p"], rows)},
        parameters={"j": list(SPIN_VALUES), "d_E": "2j+1", "r_max": 0.95, "r_points": r_grid.size},
    )


def figure6(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """MEP の p_m(r)"""
    r_grid = full_r_grid()
    rows = []
    for j in SPIN_VALUES:
        rows.extend(_curve_rows(mep_pm_curve(j, r_grid), {"j": j}))
    return FigureData(
        tables={"pm": Table(["j", "m", "r", "p"], rows)},
        parameters={"j": list(SPIN_VALUES), "r_points": r_grid.size},
    )


def _su2_scan_rows(j: float, dE: int, r_grid: np.ndarray, tol: float, panel: str) -> List[Dict[str, Any]]:
    scan = mep_aam_distance_scan("su2", dE, r_grid=r_grid, quadrature_tol=tol, j=j)
    return [{"panel": panel, "j": j, "d_E": dE, "r": row["r"], "delta_prime": row["delta_prime"]} for row in scan.rows]


def figure7(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """Λ_J の Δ′(r): (a) 純粋事前分布、(b) 混合事前分布 dE = 2j+1"""
    rows = []
    for j in SPIN_VALUES:
        rows.extend(_su2_scan_rows(j, 1, full_r_grid(), cfg.quadrature_tol, "a"))
        rows.extend(_su2_scan_rows(j, int(round(2 * j)) + 1, capped_r_grid(0.95), cfg.quadrature_tol, "b"))
    return FigureData(
        tables={"delta_prime": Table(["panel", "j", "d_E", "r", "delta_prime"], rows)},
        parameters={"j": list(SPIN_VALUES), "mixed_d_E": "2j+1", "mixed_r_max": 0.95},
    )


def saturation_table(j: float, envs, r: float, tol: float) -> List[Dict[str, Any]]:
    """Δ′(r) の dE 依存（dE が大きくなると飽和する）"""
    rows = []
    for dE in envs:
        scan = mep_aam_distance_scan("su2", dE, r_grid=[r], quadrature_tol=tol, j=j)
        rows.append({"j": j, "d_E": dE, "r": r, "delta_prime": scan.rows[0]["delta_prime"]})
    return rows


def figure8(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """j = 7/2 の Δ′(r) を dE ごとに。挿入図用に r = 0.5 での飽和表"""
    r_grid = capped_r_grid(0.9)
    rows = []
    for dE in FIG8_ENVS:
        rows.extend(_su2_scan_rows(FIG8_SPIN, dE, r_grid, cfg.quadrature_tol, "main"))
    return FigureData(
        tables={
            "delta_prime": Table(["panel", "j", "d_E", "r", "delta_prime"], rows),
            "saturation": Table(["j", "d_E", "r", "delta_prime"],
                                saturation_table(FIG8_SPIN, FIG8_ENVS, 0.5, cfg.quadrature_tol)),
        },
        parameters={"j": FIG8_SPIN, "d_E": list(FIG8_ENVS), "r_max": 0.9, "saturation_r": 0.5},
    )


def figure9(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """仕事 W/γ(ωτ)：AAM-pure / AAM-mixed(2j+1) / MEP"""
    rows = []
    for j in WORK_SPINS:
        rows.extend(work_comparison(WorkScenario(j=j), cfg.quadrature_tol))
    return FigureData(
        tables={"work": Table(["method", "j", "omega_tau", "W_over_gamma"], rows)},
        parameters={"j": list(WORK_SPINS), "initial_bloch": [0.0, 0.0, 0.7], "omega_tau_points": 101},
    )


BAR_COLUMNS = ["error_pure", "error_mixed", "total_error", "prior_gap",
               "excess_pure", "excess_mixed", "accepted_pure", "accepted_mixed"]


def _with_total(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    for row in rows:
        row["total_error"] = row["error_pure"] + row["error_mixed"]
    return rows


def figure10(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """Λ_BnS の棄却サンプリング誤差と事前分布の差（参照状態10個）"""
    n_proposed = opts.n_proposed or 1_000_000
    rows = _with_total(rejection_bars_bns(cfg.epsilon, n_proposed, cfg.seed, dE=2, threads=cfg.threads,
                                          progress=opts.progress))
    return FigureData(
        tables={"bars": Table(["index", "x", "y", "z"] + BAR_COLUMNS, rows)},
        parameters={"epsilon": cfg.epsilon, "n_proposed": n_proposed, "mixed_d_E": 2},
    )


def figure11(cfg: RunConfig, opts: FigureOptions) -> FigureData:
    """Λ_J（j = 3/2）の棄却サンプリング誤差と事前分布の差"""
    n_proposed = opts.n_proposed or 1_000_000
    r_values = np.round(np.linspace(0.1, 0.9, 9), 10)
    rows = _with_total(rejection_bars_su2(FIG11_SPIN, r_values, cfg.epsilon, n_proposed, cfg.seed, dE=2,
                                          tol=cfg.quadrature_tol, threads=cfg.threads, progress=opts.progress))
    return FigureData(
        tables={"bars": Table(["j", "r"] + BAR_COLUMNS, rows)},
        parameters={"j": FIG11_SPIN, "r": r_values.tolist(), "epsilon": cfg.epsilon,
                    "n_proposed": n_proposed, "mixed_d_E": 2},
    )


FIGURES: Dict[int, Callable[[RunConfig, FigureOptions], FigureData]] = {
    2: figure2, 3: figure3, 4: figure4, 5: figure5, 6: figure6,
    7: figure7, 8: figure8, 9: figure9, 10: figure10, 11: figure11,
}


# ─────────────── 書き出し ───────────────
def output_meta(cfg: RunConfig) -> Dict[str, Any]:
    """全出力ファイルに埋め込むメタ情報"""
    return {"tool": TOOL_NAME, "version": __version__, "config_hash": cfg.config_hash(), "seed": cfg.seed}


def write_table(path_stem: pathlib.Path, table: Table, cfg: RunConfig) -> pathlib.Path:
    """format に応じて CSV か JSON で保存"""
    meta = output_meta(cfg)
    if cfg.format == "json":
        path = path_stem.with_suffix(".json")
        save_json(path, {"meta": meta, "columns": table.columns,
                         "rows": [{c: row.get(c) for c in table.columns} for row in table.rows]})
    else:
        path = path_stem.with_suffix(".csv")
        save_csv(path, table.rows, table.columns, meta)
    return path


def run_figure(n: int, cfg: RunConfig, out_dir: Optional[pathlib.Path] = None,
               opts: Optional[FigureOptions] = None) -> Tuple[List[pathlib.Path], float]:
    """図 n の元データを書き出す

    Returns:
        (書き出したファイル, 実行秒数)
    """
    if n not in FIGURES:
        raise ValueError(f"未対応の図番号: {n}（対応: {sorted(FIGURES)}）")
    opts = opts or FigureOptions()
    base = (out_dir or cfg.output_dir) / f"fig{n}"

    t0 = time.perf_counter()
    data = FIGURES[n](cfg, opts)
    runtime = time.perf_counter() - t0

    files = [write_table(base / f"fig{n}_{name}", table, cfg) for name, table in data.tables.items()]
    manifest = {
        "figure": n,
        **output_meta(cfg),
        "epsilon": cfg.epsilon,
        "quadrature_tol": cfg.quadrature_tol,
        "solver_tol": cfg.solver_tol,
        "parameters": data.parameters,
        "files": [p.name for p in files],
    }
    save_json(base / "manifest.json", manifest)
    save_json(base / "timing.json", {"figure": n, "runtime_seconds": round(runtime, 3)})
    logger.info(f"図{n}: {len(files)} ファイルを書き出しました ({runtime:.1f}s) → {base}")
    return files + [base / "manifest.json"], runtime
