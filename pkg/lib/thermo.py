# lib/thermo.py
# -*- coding: utf-8 -*-
"""駆動ハミルトニアン H(t) = γ cos(ωt) J_z² での平均仕事

W = γ(cos ωτ − 1) tr(ψ̄₀ J_z²)

割当（AAM-pure / AAM-mixed / MEP）ごとに ψ̄₀ を作り、ωτ グリッド上で比べる。
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from lib.aam import aam_su2_state
from lib.errors import DimensionMismatch
from lib.mep import mep_su2
from lib.states import BlochVector, DensityMatrix, angular_momentum, as_matrix, is_half_integer

logger = logging.getLogger(__name__)

COMMUTATOR_TOL = 1e-8
DEFAULT_METHODS = ("AAM-pure", "AAM-mixed", "MEP")


def default_omega_tau(n: int = 101) -> np.ndarray:
    """[0, 2π] の等間隔グリッド"""
    return np.linspace(0.0, 2 * np.pi, n)


@dataclass(frozen=True, eq=False)
class WorkScenario:
    """仕事の比較条件（初期状態の既定は ½(I + 0.7σ_z)）"""
    j: float
    gamma: float = 1.0
    omega_tau: np.ndarray = field(default_factory=default_omega_tau, repr=False)
    initial_bloch: BlochVector = field(default_factory=lambda: BlochVector(0.0, 0.0, 0.7))
    methods: Tuple[str, ...] = DEFAULT_METHODS
    # AAM-mixed の環境次元（None なら 2j+1）
    env_dim: Optional[int] = None

    def __post_init__(self):
        if not is_half_integer(self.j):
            raise ValueError(f"j は 1/2 以上の半整数: {self.j}")
        if not self.gamma > 0:
            raise ValueError(f"γ は正: {self.gamma}")
        unknown = [m for m in self.methods if m not in DEFAULT_METHODS]
        if unknown:
            raise ValueError(f"未知の手法: {unknown}")

    @property
    def mixed_env_dim(self) -> int:
        return int(round(2 * self.j)) + 1 if self.env_dim is None else int(self.env_dim)


def average_work(psi0, j: float, gamma: float, omega_tau) -> float:
    """W = γ(cos ωτ − 1) tr(ψ₀ J_z²)

    ψ₀ が J_z² と可換でなければ警告して同じ式で計算する。
    omega_tau に配列を渡すと配列で返す。
    """
    m = as_matrix(psi0)
    spin = angular_momentum(j)
    if m.shape != (spin.dim, spin.dim):
        raise DimensionMismatch(f"ψ₀ の次元 {m.shape[-1]} ≠ 2j+1 = {spin.dim}")
    jz2 = spin.jz @ spin.jz
    comm = float(np.max(np.abs(m @ jz2 - jz2 @ m)))
    if comm > COMMUTATOR_TOL:
        logger.warning(f"ψ₀ が J_z² と可換でありません (‖[ψ₀, J_z²]‖_max = {comm:.2e})。同じ式で計算します")
    moment = float(np.trace(m @ jz2).real)
    w = gamma * (np.cos(np.asarray(omega_tau, dtype=float)) - 1.0) * moment
    return float(w) if np.ndim(w) == 0 else w


def scenario_states(scenario: WorkScenario, tol: float = 1e-7) -> Dict[str, DensityMatrix]:
    """手法ごとの ψ̄₀"""
    states: Dict[str, DensityMatrix] = {}
    for method in scenario.methods:
        if method == "AAM-pure":
            states[method] = aam_su2_state(scenario.j, 1, scenario.initial_bloch, tol=tol).state
        elif method == "AAM-mixed":
            states[method] = aam_su2_state(scenario.j, scenario.mixed_env_dim, scenario.initial_bloch, tol=tol).state
        else:
            states[method] = mep_su2(scenario.j, scenario.initial_bloch).state
    return states


def jz2_moment(state: DensityMatrix, j: float) -> float:
    """tr(ψ J_z²)"""
    jz = angular_momentum(j).jz
    return float(np.trace(state.matrix @ jz @ jz).real)


def work_comparison(scenario: WorkScenario, tol: float = 1e-7) -> List[Dict[str, Any]]:
    """CSV 行 (method, j, omega_tau, W_over_gamma)"""
    rows = []
    for method, state in scenario_states(scenario, tol).items():
        w = average_work(state, scenario.j, 1.0, scenario.omega_tau)
        logger.debug(f"仕事: j={scenario.j}, {method}, tr(ψJz²)={jz2_moment(state, scenario.j):.6f}")
        rows.extend(
            {"method": method, "j": scenario.j, "omega_tau": float(wt), "W_over_gamma": float(v)}
            for wt, v in zip(scenario.omega_tau, np.atleast_1d(w))
        )
    return rows


def work_ordering_holds(scenario: WorkScenario, tol: float = 1e-7) -> Tuple[bool, Dict[str, float]]:
    """tr(ψ_pure J_z²) ≥ tr(ψ_mixed J_z²) ≥ tr(ψ_MEP J_z²)"""
    states = scenario_states(scenario, tol)
    moments = {k: jz2_moment(v, scenario.j) for k, v in states.items()}
    ok = moments["AAM-pure"] >= moments["AAM-mixed"] - 1e-12 and moments["AAM-mixed"] >= moments["MEP"] - 1e-12
    return ok, moments
