# tests/conftest.py
# -*- coding: utf-8 -*-
"""pytest 共通設定（リポジトリ直下を import パスに追加）"""
import pathlib
import sys

import numpy as np
import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from lib.config import RunConfig  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def cfg(tmp_path) -> RunConfig:
    """出力先を tmp_path にした既定設定"""
    return RunConfig(output_dir=tmp_path)
