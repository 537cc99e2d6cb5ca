# tests/test_figures.py
# -*- coding: utf-8 -*-
import json

import numpy as np
import pytest

from lib import TOOL_NAME, __version__
from lib.config import RunConfig
from lib.figures import (
    FIGURES,
    FigureOptions,
    capped_r_grid,
    full_r_grid,
    output_meta,
    run_figure,
    saturation_table,
)
from lib.utils import read_csv


def test_registered_figures():
    assert sorted(FIGURES) == list(range(2, 12))


def test_r_grids():
    grid = full_r_grid()
    assert grid.size == 41
    assert grid[0] == 0.0 and grid[-1] == 1.0
    capped = capped_r_grid(0.9)
    assert capped[-1] == 1.0
    assert capped[-2] == pytest.approx(0.9)


def test_output_meta(cfg):
    meta = output_meta(cfg)
    assert meta == {"tool": TOOL_NAME, "version": __version__, "config_hash": cfg.config_hash(), "seed": 42}


def test_figure6_files_and_reproducibility(cfg, tmp_path):
    files, runtime = run_figure(6, cfg)
    names = sorted(p.name for p in files)
    assert names == ["fig6_pm.csv", "manifest.json"]
    assert runtime >= 0.0
    base = tmp_path / "fig6"
    first = {p.name: p.read_bytes() for p in base.iterdir() if p.name != "timing.json"}
    assert (base / "timing.json").exists()

    run_figure(6, cfg)
    second = {p.name: p.read_bytes() for p in base.iterdir() if p.name != "timing.json"}
    assert first == second

    df = read_csv(base / "fig6_pm.csv")
    assert list(df.columns) == ["j", "m", "r", "p"]
    sums = df.groupby(["j", "r"])["p"].sum()
    assert np.allclose(sums.values, 1.0, atol=1e-9)

    manifest = json.loads((base / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["figure"] == 6
    assert manifest["seed"] == 42
    assert "runtime_seconds" not in manifest


def test_json_format(tmp_path):
    cfg = RunConfig(output_dir=tmp_path, format="json")
    files, _ = run_figure(6, cfg)
    data = json.loads((tmp_path / "fig6" / "fig6_pm.json").read_text(encoding="utf-8"))
    assert data["meta"]["config_hash"] == cfg.config_hash()
    assert data["columns"] == ["j", "m", "r", "p"]
    assert set(data["rows"][0]) == {"j", "m", "r", "p"}
    assert any(p.suffix == ".json" for p in files)


def test_figure2_small_sample(cfg, tmp_path):
    run_figure(2, cfg, opts=FigureOptions(n_states=2_000))
    hist = read_csv(tmp_path / "fig2" / "fig2_histogram.csv")
    analytic = read_csv(tmp_path / "fig2" / "fig2_analytic.csv")
    assert sorted(hist["d_E"].unique()) == [2, 3, 4, 8, 1_000_000]
    assert len(analytic) == 5 * 201
    assert analytic.loc[(analytic["d_E"] == 2) & (analytic["delta"] == 0.0), "pdf"].iloc[0] == pytest.approx(15.0)


def test_figure9_work_table(cfg, tmp_path):
    run_figure(9, cfg)
    df = read_csv(tmp_path / "fig9" / "fig9_work.csv")
    assert set(df["method"]) == {"AAM-pure", "AAM-mixed", "MEP"}
    assert len(df) == 3 * 3 * 101
    assert (df["W_over_gamma"] <= 1e-12).all()


def test_saturation_table_rows():
    rows = saturation_table(1.5, (1, 2), 0.5, 1e-7)
    assert [r["d_E"] for r in rows] == [1, 2]
    assert all(r["delta_prime"] > 0 for r in rows)


def test_unknown_figure(cfg):
    with pytest.raises(ValueError):
        run_figure(1, cfg)
