# lib/errors.py
# -*- coding: utf-8 -*-
"""例外クラスの一元定義

入力の誤り (ValueError 系) と数値計算の失敗 (InferenceError 系) を分ける。
CLI は前者を終了コード 2、後者を終了コード 3 に対応付ける。
"""
from typing import Any, Dict, Optional


# ─────────────── 入力エラー ───────────────
class StateValidationError(ValueError):
    """密度行列・ブロッホベクトルなどの不変条件違反"""


class DimensionMismatch(ValueError):
    """次元の不一致"""


# ─────────────── 数値計算エラー ───────────────
class InferenceError(RuntimeError):
    """数値計算の失敗（基底クラス）"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SingularEffectiveState(InferenceError):
    """ρ00 がしきい値未満で割当が定義できない"""


class NonConvergence(InferenceError):
    """反復解法が収束しなかった（best iterate を保持）"""

    def __init__(self, message: str, best: Any = None, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message, diagnostics)
        self.best = best


class InfeasibleTargets(NonConvergence):
    """ステップが消えても残差が tol を下回らない"""


class QuadratureError(InferenceError):
    """求積の精度不足"""

    def __init__(self, message: str, error_estimate: float, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message, diagnostics)
        self.error_estimate = float(error_estimate)


class ZeroAcceptance(InferenceError):
    """棄却サンプリングで採択ゼロ"""

    def __init__(self, message: str, n_proposed: int):
        super().__init__(message, {"n_proposed": n_proposed})
        self.n_proposed = int(n_proposed)
        # 採択率の上界（採択ゼロなら 1/n 未満と言える程度）
        self.acceptance_upper_bound = 1.0 / max(int(n_proposed), 1)


class DimensionCapExceeded(InferenceError):
    """純粋化の次元が上限を超える"""
