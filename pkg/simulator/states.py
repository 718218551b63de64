"""
simulator.states
初始態：coherent / cat / Fock 的封閉形式 Wigner 函數。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.special import eval_laguerre

from simulator import logger
from simulator.config import BOUNDARY_MASS_THRESHOLD
from simulator.errors import AccuracyError, ConfigError
from simulator.symplectic import GridSpec, PhaseGrid, PhaseVector, boundary_mass, skew_product

STATE_KINDS = ("coherent", "cat", "fock")


@dataclass(frozen=True, eq=False)
class StateSpec:
    """初始態的描述；centres 是位移中心（PhaseVector）"""

    kind: str
    centres: Tuple[PhaseVector, ...] = field(default_factory=tuple)
    phase: float = 0.0
    fock_index: int = 0

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise ConfigError(f"未知的 state kind：{self.kind!r}（可用 {STATE_KINDS}）")
        centres = tuple(c if isinstance(c, PhaseVector) else PhaseVector.from_array(c) for c in self.centres)
        object.__setattr__(self, "centres", centres)
        if self.kind == "coherent" and len(centres) != 1:
            raise ConfigError("coherent 需要剛好一個中心")
        if self.kind == "cat":
            if len(centres) != 2:
                raise ConfigError("cat 需要兩個中心")
            if centres[0].allclose(centres[1]):
                raise ConfigError("cat 的兩個中心必須不同")
            if centres[0].n_modes != centres[1].n_modes:
                raise ConfigError("cat 的兩個中心維度不一致")
        if self.kind == "fock":
            if int(self.fock_index) < 0:
                raise ConfigError(f"Fock index 必須 >= 0：{self.fock_index}")
            if centres and not centres[0].allclose(np.zeros(2 * centres[0].n_modes)):
                raise ConfigError("Fock 態不接受位移中心")
        object.__setattr__(self, "fock_index", int(self.fock_index))
        object.__setattr__(self, "phase", float(self.phase))

    @property
    def n_modes(self) -> int:
        return self.centres[0].n_modes if self.centres else 1

    def centroid(self) -> np.ndarray:
        """位移中心的平均（Fock 態為原點）"""
        if not self.centres:
            return np.zeros(2 * self.n_modes)
        return np.mean([c.as_array() for c in self.centres], axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "centres": [c.as_array().tolist() for c in self.centres],
            "phase": self.phase,
            "fock_index": self.fock_index,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StateSpec":
        kind = data.get("kind", "coherent")
        centres: Sequence = data.get("centres") or ([] if kind == "fock" else [[0.0, 0.0]])
        return cls(
            kind=kind,
            centres=tuple(PhaseVector.from_array(c) for c in centres),
            phase=float(data.get("phase", 0.0)),
            fock_index=int(data.get("fock_index", 0)),
        )


def coherent_wigner(points: np.ndarray, centre: np.ndarray, hbar: float) -> np.ndarray:
    """(πħ)^{−N} exp(−|x − x0|²/ħ)"""
    n = points.shape[-1] // 2
    d2 = np.sum((points - centre) ** 2, axis=-1)
    return np.exp(-d2 / hbar) / (np.pi * hbar) ** n


def _cat_wigner(points: np.ndarray, x1: np.ndarray, x2: np.ndarray, phase: float, hbar: float) -> np.ndarray:
    """[輔助函式] |x1⟩ + e^{iφ}|x2⟩ 的 Wigner 函數（已歸一化）"""
    mid = 0.5 * (x1 + x2)
    d = x2 - x1
    w1 = coherent_wigner(points, x1, hbar)
    w2 = coherent_wigner(points, x2, hbar)
    overlap_phase = skew_product(x1, x2) / (2.0 * hbar)
    # |x1⟩⟨x2| 的 Wigner 符號，積分為 ⟨x2|x1⟩
    cross = coherent_wigner(points, mid, hbar) * np.exp(
        1j * (skew_product(points - mid, d) / hbar + overlap_phase)
    )
    norm = 2.0 + 2.0 * np.exp(-np.dot(d, d) / (4.0 * hbar)) * np.cos(overlap_phase - phase)
    if norm <= 0:
        raise ConfigError("cat 態無法歸一化（兩個分量互相抵消）")
    return (w1 + w2 + 2.0 * np.real(np.exp(-1j * phase) * cross)) / norm


def _fock_wigner(points: np.ndarray, index: int, hbar: float) -> np.ndarray:
    """[輔助函式] (−1)^n/(πħ) e^{−r²/ħ} L_n(2r²/ħ)，只支援 N = 1"""
    if points.shape[-1] != 2:
        raise ConfigError("Fock 態只支援單一自由度（N = 1）")
    r2 = np.sum(points**2, axis=-1)
    return (-1.0) ** index / (np.pi * hbar) * np.exp(-r2 / hbar) * eval_laguerre(index, 2.0 * r2 / hbar)


def recommended_half_width(spec: StateSpec, hbar: float) -> float:
    """經驗下限：最大位移 + 5√(ħ/2)"""
    reach = max((float(np.max(np.abs(c.as_array()))) for c in spec.centres), default=0.0)
    spread = 5.0 * np.sqrt(hbar / 2.0)
    if spec.kind == "fock":
        spread += np.sqrt(2.0 * spec.fock_index * hbar)
    return reach + spread


def build_state(spec: StateSpec, grid: GridSpec) -> PhaseGrid:
    """
    依 StateSpec 在中心網格上產生歸一化的 Wigner 函數。

    參數：
        spec (StateSpec): coherent / cat / fock
        grid (GridSpec): 網格描述

    回傳：
        PhaseGrid: space_tag = centre 的實數網格
    """
    if spec.n_modes != grid.n_modes:
        raise ConfigError(f"state 維度 N={spec.n_modes} 與網格 N={grid.n_modes} 不一致")
    points = grid.points()
    if spec.kind == "coherent":
        values = coherent_wigner(points, spec.centres[0].as_array(), grid.hbar)
    elif spec.kind == "cat":
        values = _cat_wigner(points, spec.centres[0].as_array(), spec.centres[1].as_array(), spec.phase, grid.hbar)
    else:
        values = _fock_wigner(points, spec.fock_index, grid.hbar)

    state = grid.grid(values.reshape(grid.dims))
    edge = boundary_mass(state)
    if edge > BOUNDARY_MASS_THRESHOLD:
        raise AccuracyError(
            f"網格太小：{spec.kind} 態的邊界質量 {edge:.3e} > {BOUNDARY_MASS_THRESHOLD:.0e}"
            f"（建議半寬 >= {recommended_half_width(spec, grid.hbar):.2f}）"
        )
    if min(grid.half_width) < recommended_half_width(spec, grid.hbar):
        logger.warning("[STATE] 半寬 %.2f 小於建議值 %.2f", min(grid.half_width), recommended_half_width(spec, grid.hbar))
    logger.info("[STATE] 已建立 %s 態，網格 %s", spec.kind, "x".join(map(str, grid.dims)))
    return state


def mixture(states: Sequence[PhaseGrid], weights: Sequence[float]) -> PhaseGrid:
    """同一網格上數個 Wigner 函數的凸組合"""
    if len(states) != len(weights) or not states:
        raise ConfigError("mixture 的 states 與 weights 長度不符")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.isclose(np.sum(w), 1.0):
        raise ConfigError(f"mixture 權重必須非負且總和為 1：{weights}")
    samples = sum(wi * s.samples for wi, s in zip(w, states))
    return states[0].with_samples(samples)
