#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
state_inference.py - 粗視化データからの量子状態推定ツール

【目的】
有効状態 ρ（ブロッホベクトル）と粗視化チャネル Λ から、微視的な状態を
平均割当写像（AAM: 純粋／混合事前分布）または最大エントロピー原理（MEP）で割り当てる。
あわせて図 2〜11 の元データ（CSV/JSON）と受け入れ検査を出力する。

【サブコマンド】
  assign   {ptrace|bns|su2} {aam-pure|aam-mixed|mep}  割当を計算して JSON に保存
  figure   {2..11|all}                                図の元データを out/figN/ に保存
  validate {fast|full}                                受け入れ検査（全合格で終了コード 0）

【設定の優先順位】
既定値 < 環境変数(.env: CGI_SEED, CGI_EPSILON, ...) < --config JSON < CLIフラグ

【終了コード】
  0: 成功 / 1: 検査に不合格 / 2: 入力・引数の誤り / 3: 数値計算の失敗

【実行例】
# Λ_BnS、純粋事前分布、ρ = I/2
python state_inference.py assign bns aam-pure --bloch 0,0,0

# Λ_J（j = 3/2）の MEP
python state_inference.py assign su2 mep --j 1.5 --bloch 0,0,0.7

# 部分トレース（環境 dE = 2）
python state_inference.py assign ptrace aam-pure --de 2 --bloch 0,0,1

# Λ_BnS、混合事前分布 dE = 2 を棄却サンプリングでも確認
python state_inference.py assign bns aam-mixed --de 2 --bloch -0.3061,0.1269,-0.6142 --oracle 2000000

# 図 6 の元データ
python state_inference.py figure 6 --out out

# 全図（棄却サンプリングは 4 スレッド）
python state_inference.py figure all --threads 4 --progress

# 受け入れ検査
python state_inference.py validate fast
python state_inference.py validate full --threads 4
"""
import sys
import io

# Windows環境での文字コード問題を回避
if sys.platform == 'win32':
    sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding='utf-8')
    sys.stderr = io.TextIOWrapper(sys.stderr.buffer, encoding='utf-8')

import argparse
import logging
import pathlib
from typing import Any, Dict, List, Optional

import numpy as np

from lib import TOOL_NAME, __version__
from lib.aam import aam_assign, method_tag
from lib.channels import BNS_ACTION_TABLE, make_channel
from lib.config import Config, RunConfig
from lib.errors import InferenceError
from lib.figures import FIGURES, FigureOptions, output_meta, run_figure
from lib.mep import mep_assign
from lib.montecarlo import Prior, rejection_estimate
from lib.states import BlochVector, DensityMatrix
from lib.utils import decode_complex_matrix, read_json, save_json
from lib.validation import SUITES, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


# ------------- 引数 -------------
def parse_bloch(text: str) -> BlochVector:
    """'x,y,z' → BlochVector"""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"--bloch は x,y,z の3成分: {text}")
    try:
        return BlochVector(*(float(p) for p in parts))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def common_parser() -> argparse.ArgumentParser:
    """全サブコマンド共通のフラグ"""
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="乱数シード（既定: 42）")
    p.add_argument("--epsilon", type=float, default=None, help="棄却サンプリングの ε（既定: 0.025）")
    p.add_argument("--tol", type=float, default=None, help="MEP ソルバの許容誤差（既定: 1e-10）")
    p.add_argument("--quad-tol", type=float, default=None, help="Λ_J 求積の許容誤差（既定: 1e-7）")
    p.add_argument("--threads", type=int, default=None, help="棄却サンプリングのスレッド数（既定: 1）")
    p.add_argument("--out", default=None, help="出力ディレクトリ（既定: out）")
    p.add_argument("--format", choices=["csv", "json"], default=None, help="表の出力形式（既定: csv）")
    p.add_argument("--config", default="", help="設定JSON（RunConfig と同じキー）")
    p.add_argument("--env", default="", help=".env のパス（既定: リポジトリ直下 → カレント）")
    p.add_argument("--log-level", default=None, help="DEBUG / INFO / WARNING / ERROR（既定: INFO）")
    p.add_argument("--progress", action="store_true", help="棄却サンプリングの進捗バーを表示")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = common_parser()
    ap = argparse.ArgumentParser(
        description="粗視化データからの量子状態推定（AAM / MEP）",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    ap.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("assign", parents=[common], help="割当を計算")
    a.add_argument("channel", choices=["ptrace", "bns", "su2"], help="粗視化チャネル")
    a.add_argument("method", choices=["aam-pure", "aam-mixed", "mep"], help="割当手法")
    a.add_argument("--bloch", type=parse_bloch, default=None, help="有効状態のブロッホベクトル x,y,z")
    a.add_argument("--state", default="", help="有効状態の行列ファイル（JSON の [re, im] 入れ子配列）")
    a.add_argument("--de", type=int, default=None,
                   help="ptrace: 環境の次元 / bns・su2: 混合事前分布の環境次元")
    a.add_argument("--prior-de", type=int, default=None, help="ptrace の混合事前分布の環境次元（既定: 2）")
    a.add_argument("--j", type=float, default=None, help="su2 のスピン j（半整数）")
    a.add_argument("--oracle", type=int, default=0, help="棄却サンプリングの提案数（0 = 実行しない）")

    f = sub.add_parser("figure", parents=[common], help="図の元データを出力")
    f.add_argument("figures", nargs="+", help="図番号（2〜11）または all")
    f.add_argument("--samples", type=int, default=None, help="一様サンプル数の上書き（図2・図3）")
    f.add_argument("--proposals", type=int, default=None, help="棄却サンプリングの提案数の上書き（図10・図11）")

    v = sub.add_parser("validate", parents=[common], help="受け入れ検査")
    v.add_argument("suite", choices=sorted(SUITES), help="fast（約1分）または full（約30分以内）")
    v.add_argument("--only", default="", help="実行する検査名（カンマ区切り）")
    v.add_argument("--tamper-bns", action="store_true", help="Λ_BnS の作用表を1項目改ざんして検査（変異テスト用）")
    return ap


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """既定値 < .env < --config < フラグ"""
    config = Config(pathlib.Path(args.env) if args.env else None)
    overrides = {
        "seed": args.seed,
        "epsilon": args.epsilon,
        "solver_tol": args.tol,
        "quadrature_tol": args.quad_tol,
        "threads": args.threads,
        "output_dir": args.out,
        "format": args.format,
        "log_level": args.log_level,
    }
    return config.build(pathlib.Path(args.config) if args.config else None, overrides)


def setup_logging(cfg: RunConfig):
    logging.basicConfig(
        level=getattr(logging, cfg.log_level),
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
    )


# ------------- assign -------------
def resolve_state(args: argparse.Namespace) -> DensityMatrix:
    if args.state:
        return DensityMatrix(decode_complex_matrix(read_json(pathlib.Path(args.state))))
    if args.bloch is None:
        raise ValueError("--bloch か --state のどちらかが必要です")
    return DensityMatrix.from_bloch(args.bloch)


def resolve_assign_params(args: argparse.Namespace) -> Dict[str, Any]:
    """チャネル・手法ごとの環境次元と j を確定"""
    params: Dict[str, Any] = {}
    prior_de = 1
    if args.channel == "ptrace":
        if args.de is None:
            raise ValueError("ptrace には --de（環境の次元）が必要です")
        params["env_dim"] = args.de
        if args.method == "aam-mixed":
            prior_de = args.prior_de if args.prior_de is not None else 2
    else:
        if args.method == "aam-mixed":
            prior_de = args.de if args.de is not None else args.prior_de
            if prior_de is None or prior_de < 2:
                raise ValueError("aam-mixed には --de（2以上の環境次元）が必要です")
    if args.channel == "su2":
        if args.j is None:
            raise ValueError("su2 には --j が必要です")
        params["j"] = args.j
    return {"params": params, "prior_de": prior_de}


def cmd_assign(args: argparse.Namespace, cfg: RunConfig) -> int:
    rho = resolve_state(args)
    resolved = resolve_assign_params(args)
    params, prior_de = resolved["params"], resolved["prior_de"]

    print(f"[STEP] {args.channel} / {args.method}")
    if args.method == "mep":
        result = mep_assign(args.channel, rho, tol=cfg.solver_tol, **params)
        payload = result.to_json()
        residual = result.residual
        if result.boundary:
            print("[STEP] 純粋に近い有効状態: 境界の MEP 状態（有限の乗数では到達しない極限）")
    else:
        result = aam_assign(args.channel, rho, prior_de, tol=cfg.quadrature_tol, **params)
        payload = result.to_json()
        residual = result.residual

    if args.oracle > 0:
        if args.method == "mep":
            raise ValueError("--oracle は AAM の手法でのみ使えます")
        channel_params = {"dS": rho.dim, "dE": params["env_dim"]} if args.channel == "ptrace" else params
        channel = make_channel(args.channel, **channel_params)
        print(f"[STEP] 棄却サンプリング: 提案数 {args.oracle}, ε = {cfg.epsilon}")
        est = rejection_estimate(channel, rho, cfg.epsilon, Prior.of(prior_de), args.oracle, cfg.seed,
                                 threads=cfg.threads, progress=args.progress)
        payload["oracle"] = est.to_json()

    tag = "MEP" if args.method == "mep" else method_tag(prior_de)
    out_path = cfg.output_dir / "assign" / f"{args.channel}_{args.method}.json"
    save_json(out_path, {"meta": output_meta(cfg), "input": {"channel": args.channel, "method": tag,
                                                             "rho": rho.matrix, **params}, "result": payload})
    np.set_printoptions(precision=6, suppress=True)
    print(result.state.matrix.real if np.allclose(result.state.matrix.imag, 0) else result.state.matrix)
    print(f"[OK] {tag}: 残差 {residual:.2e} → {out_path}")
    return EXIT_OK


# ------------- figure -------------
def parse_figures(items: List[str]) -> List[int]:
    if any(x == "all" for x in items):
        return sorted(FIGURES)
    out = []
    for x in items:
        try:
            n = int(x)
        except ValueError:
            raise ValueError(f"図番号は整数か all: {x}")
        if n not in FIGURES:
            raise ValueError(f"未対応の図番号: {n}（対応: {sorted(FIGURES)}）")
        out.append(n)
    return out


def cmd_figure(args: argparse.Namespace, cfg: RunConfig) -> int:
    opts = FigureOptions(n_states=args.samples, n_proposed=args.proposals, progress=args.progress)
    for n in parse_figures(args.figures):
        print(f"[STEP] 図{n}")
        files, runtime = run_figure(n, cfg, opts=opts)
        print(f"[OK] 図{n}: {len(files)} ファイル ({runtime:.1f}s)")
    return EXIT_OK


# ------------- validate -------------
def tampered_bns_table() -> Dict:
    """(0, 1) の像を 0 にした作用表"""
    table = dict(BNS_ACTION_TABLE)
    table[(0, 1)] = np.zeros((2, 2), dtype=complex)
    return table


def cmd_validate(args: argparse.Namespace, cfg: RunConfig) -> int:
    only: Optional[List[str]] = [x.strip() for x in args.only.split(",") if x.strip()] or None
    table = tampered_bns_table() if args.tamper_bns else None
    results = run_suite(args.suite, cfg, bns_table=table, progress=args.progress, only=only)
    for r in results:
        tag = "[OK]" if r.passed else "[FAIL]"
        print(f"{tag} {r.name} ({r.seconds:.1f}s) {r.detail}")
    n_pass = sum(r.passed for r in results)
    print(f"[DONE] {n_pass}/{len(results)} 合格 (suite={args.suite}, seed={cfg.seed})")
    return EXIT_OK if n_pass == len(results) else EXIT_FAILED_CHECKS


# ------------- メイン -------------
COMMANDS = {"assign": cmd_assign, "figure": cmd_figure, "validate": cmd_validate}


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_run_config(args)
    except (ValueError, OSError) as e:
        print(f"[ERROR] 設定エラー: {e}", file=sys.stderr)
        return EXIT_USAGE
    setup_logging(cfg)
    print(f"[BOOT] {TOOL_NAME} {__version__} / seed={cfg.seed} / config_hash={cfg.config_hash()}")

    try:
        return COMMANDS[args.command](args, cfg)
    except InferenceError as e:
        print(f"[ERROR] 数値計算に失敗しました: {e}", file=sys.stderr)
        if e.diagnostics:
            print(f"[ERROR] 診断情報: {e.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
