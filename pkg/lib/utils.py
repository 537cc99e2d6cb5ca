# lib/utils.py
# -*- coding: utf-8 -*-
"""共通ユーティリティ関数（入出力・複素数エンコード）"""
import json
import pathlib
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd


def read_text(path: pathlib.Path) -> str:
    """テキストファイル読み込み"""
    return path.read_text(encoding="utf-8")


def read_json(path: pathlib.Path) -> Dict[str, Any]:
    """JSON読み込み"""
    return json.loads(read_text(path))


def save_text(path: pathlib.Path, content: str):
    """テキストファイル保存"""
    path.parent.mkdir(parents=True, exist_ok=True)
    # 改行コードを固定（再実行でバイト一致させる）
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(content)


def save_json(path: pathlib.Path, obj: Any):
    """JSON保存"""
    save_text(path, json.dumps(to_jsonable(obj), ensure_ascii=False, indent=2) + "\n")


# ------------- 複素数 [re, im] エンコード -------------
def encode_complex_matrix(m: np.ndarray) -> List[List[List[float]]]:
    """複素行列 → 入れ子の [re, im] 配列"""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_complex_matrix(data: Sequence[Sequence[Sequence[float]]]) -> np.ndarray:
    """入れ子の [re, im] 配列 → 複素行列"""
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"[re, im] 形式ではありません: shape={arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def to_jsonable(obj: Any) -> Any:
    """numpy 型を含むオブジェクトを JSON 化可能に変換"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, pathlib.Path):
        return obj.as_posix()
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(np.stack([obj.real, obj.imag], axis=-1))
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# ------------- CSV -------------
def format_header(meta: Dict[str, Any]) -> str:
    """CSV 先頭のコメント行（ツール版・設定ハッシュ・シード）"""
    parts = [f"{k}={meta[k]}" for k in sorted(meta)]
    return "# " + ", ".join(parts) + "\n"


def save_csv(path: pathlib.Path, rows: List[Dict[str, Any]], columns: List[str],
             meta: Optional[Dict[str, Any]] = None, float_format: str = "%.12g"):
    """行リストをCSV保存（列順指定・先頭にメタ情報のコメント行）"""
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows, columns=columns)
    body = df.to_csv(index=False, float_format=float_format, lineterminator="\n")
    header = format_header(meta) if meta else ""
    save_text(path, header + body)


def read_csv(path: pathlib.Path) -> pd.DataFrame:
    """save_csv で保存したCSVを読み込み（コメント行は無視）"""
    return pd.read_csv(path, comment="#")
