# lib/config.py
# -*- coding: utf-8 -*-
"""設定管理の一元化

優先順位: 既定値 < 環境変数(.env) < 設定JSON(--config) < CLIフラグ
"""
import hashlib
import json
import os
import pathlib
from typing import Any, ClassVar, Dict, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator


class RunConfig(BaseModel):
    """1回の実行に関わる数値設定"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 42
    epsilon: float = Field(0.025, gt=0.0)
    quadrature_tol: float = Field(1e-7, gt=0.0)
    solver_tol: float = Field(1e-10, gt=0.0)
    output_dir: pathlib.Path = pathlib.Path("out")
    format: Literal["csv", "json"] = "csv"
    threads: int = Field(1, ge=1)
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, v: str) -> str:
        v = v.strip().upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ValueError(f"未知のログレベル: {v}")
        return v

    # 数値結果に影響するフィールドのみ
    HASHED_FIELDS: ClassVar[Tuple[str, ...]] = ("seed", "epsilon", "quadrature_tol", "solver_tol", "format")

    def config_hash(self) -> str:
        """数値に効く設定の SHA-256（先頭16桁）"""
        payload = {k: getattr(self, k) for k in self.HASHED_FIELDS}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class Config:
    """環境変数(.env)から RunConfig の既定値を読む"""

    ENV_KEYS = {
        "seed": "CGI_SEED",
        "epsilon": "CGI_EPSILON",
        "quadrature_tol": "CGI_QUADRATURE_TOL",
        "solver_tol": "CGI_SOLVER_TOL",
        "output_dir": "CGI_OUTPUT_DIR",
        "format": "CGI_FORMAT",
        "threads": "CGI_THREADS",
        "log_level": "CGI_LOG_LEVEL",
    }

    def __init__(self, env_path: Optional[pathlib.Path] = None):
        # .envファイルをロード
        if env_path and env_path.exists():
            load_dotenv(dotenv_path=env_path, override=True)
        else:
            # デフォルトパス（ROOT/.env → CWD/.env の順）
            root = pathlib.Path(__file__).resolve().parent.parent
            load_dotenv(dotenv_path=root / ".env", override=True)
            load_dotenv(dotenv_path=pathlib.Path.cwd() / ".env", override=True)

        self.env_values: Dict[str, str] = {}
        for field, key in self.ENV_KEYS.items():
            value = os.getenv(key, "").strip()
            if value:
                self.env_values[field] = value

    def build(self, config_file: Optional[pathlib.Path] = None,
              overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """既定値→環境変数→設定JSON→CLIフラグの順に重ねて RunConfig を作る"""
        merged: Dict[str, Any] = dict(self.env_values)

        if config_file is not None:
            if not config_file.exists():
                raise FileNotFoundError(f"設定ファイルが見つかりません: {config_file}")
            data = json.loads(config_file.read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise ValueError(f"設定ファイルはJSONオブジェクトである必要があります: {config_file}")
            merged.update(data)

        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value

        # pydantic の ValidationError は ValueError の派生（→ 終了コード 2）
        return RunConfig(**merged)
