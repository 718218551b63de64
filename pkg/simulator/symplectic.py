"""
simulator.symplectic
相空間代數與網格容器：skew product、J、Wigner/chord 網格與兩者之間的辛傅立葉轉換。

座標一律以 (p, q) 排列：x = (p_1..p_N, q_1..q_N)，x∧x' = p·q' − q·p' = Jx·x'。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from simulator import logger
from simulator.config import (
    BOUNDARY_MASS_THRESHOLD,
    CHORD_DECAY_THRESHOLD,
    DEFAULT_GRID_DIMS,
    DEFAULT_HALF_WIDTH_FACTOR,
    DEFAULT_HBAR,
    SIGNIFICANT_SAMPLE_CUTOFF,
)
from simulator.errors import AccuracyError, ConfigError, DimensionError, GridError

CENTRE = "centre"
CHORD = "chord"
SPACE_TAGS = (CENTRE, CHORD)

# chord_sum 每一批最多處理的 (樣本 × 點) 數
_CHUNK_BUDGET = 2_000_000


@dataclass(frozen=True, eq=False)
class PhaseVector:
    """相空間中的一點（或一條 chord），p、q 各 N 個分量"""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if p.ndim != 1 or p.shape != q.shape:
            raise DimensionError(f"p/q 維度不一致：{p.shape} vs {q.shape}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ConfigError("PhaseVector 含有非有限值")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def n_modes(self) -> int:
        return int(self.p.shape[0])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "PhaseVector":
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size % 2:
            raise DimensionError(f"相空間向量長度必須是偶數，收到 {arr.size}")
        n = arr.size // 2
        return cls(p=arr[:n], q=arr[n:])

    @classmethod
    def zeros(cls, n_modes: int = 1) -> "PhaseVector":
        return cls(p=np.zeros(n_modes), q=np.zeros(n_modes))

    def __add__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector.from_array(self.as_array() + as_phase_array(other))

    def __sub__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector.from_array(self.as_array() - as_phase_array(other))

    def __neg__(self) -> "PhaseVector":
        return PhaseVector.from_array(-self.as_array())

    def __mul__(self, scalar: float) -> "PhaseVector":
        return PhaseVector.from_array(float(scalar) * self.as_array())

    __rmul__ = __mul__

    def allclose(self, other: Union["PhaseVector", Sequence[float]], atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.as_array(), as_phase_array(other), rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"PhaseVector(p={self.p.tolist()}, q={self.q.tolist()})"


PhaseLike = Union[PhaseVector, Sequence[float], np.ndarray]


def as_phase_array(x: PhaseLike) -> np.ndarray:
    """[輔助函式] PhaseVector / list / ndarray → ndarray（最後一軸為 2N）"""
    if isinstance(x, PhaseVector):
        return x.as_array()
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] % 2:
        raise DimensionError(f"相空間向量最後一軸必須是偶數長度，收到 shape={arr.shape}")
    return arr


def symplectic_form(n_modes: int = 1) -> np.ndarray:
    """(p, q) 排列下的 J，滿足 Jx = (−q, p)"""
    eye = np.eye(n_modes)
    zero = np.zeros((n_modes, n_modes))
    return np.block([[zero, -eye], [eye, zero]])


def skew_product(x: PhaseLike, x2: PhaseLike) -> Union[float, np.ndarray]:
    """x∧x2 = Σ_n (p_n q2_n − q_n p2_n)，可對前面的軸廣播"""
    a = as_phase_array(x)
    b = as_phase_array(x2)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"skew_product 維度不一致：{a.shape[-1]} vs {b.shape[-1]}")
    n = a.shape[-1] // 2
    value = np.sum(a[..., :n] * b[..., n:] - a[..., n:] * b[..., :n], axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def j_apply(x: PhaseLike) -> Union[PhaseVector, np.ndarray]:
    """Jx = (−q, p)；輸入是 PhaseVector 就回傳 PhaseVector"""
    arr = as_phase_array(x)
    n = arr.shape[-1] // 2
    out = np.concatenate([-arr[..., n:], arr[..., :n]], axis=-1)
    if isinstance(x, PhaseVector):
        return PhaseVector.from_array(out)
    return out


@dataclass(frozen=True)
class GridSpec:
    """
    中心網格的描述：每軸取樣數（奇數）、每軸半寬、ħ。
    軸的順序與 PhaseVector 一致：p 軸在前，q 軸在後。
    """

    dims: Tuple[int, ...]
    half_width: Tuple[float, ...]
    hbar: float = DEFAULT_HBAR

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        half_width = tuple(float(h) for h in self.half_width)
        if len(dims) == 0 or len(dims) % 2 or len(dims) != len(half_width):
            raise DimensionError(f"dims/half_width 長度必須相同且為偶數：{dims} / {half_width}")
        if any(d < 3 or d % 2 == 0 for d in dims):
            raise GridError(f"non-symmetric grid：每軸取樣數必須是 >= 3 的奇數，收到 {dims}")
        if any(not np.isfinite(h) or h <= 0 for h in half_width):
            raise GridError(f"half_width 必須為正：{half_width}")
        if not np.isfinite(self.hbar) or self.hbar <= 0:
            raise ConfigError(f"hbar 必須為正：{self.hbar}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "half_width", half_width)
        object.__setattr__(self, "hbar", float(self.hbar))

    @classmethod
    def square(
        cls,
        n_modes: int = 1,
        dims: int = DEFAULT_GRID_DIMS,
        half_width: Optional[float] = None,
        hbar: float = DEFAULT_HBAR,
    ) -> "GridSpec":
        """每軸相同的網格；半寬預設 8√ħ"""
        if half_width is None:
            half_width = DEFAULT_HALF_WIDTH_FACTOR * np.sqrt(hbar)
        return cls(dims=(dims,) * (2 * n_modes), half_width=(half_width,) * (2 * n_modes), hbar=hbar)

    @property
    def n_modes(self) -> int:
        return len(self.dims) // 2

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(2.0 * h / (d - 1) for h, d in zip(self.half_width, self.dims))

    def axes(self) -> List[np.ndarray]:
        return [(np.arange(d) - (d - 1) / 2) * s for d, s in zip(self.dims, self.spacing)]

    def grid(self, samples: np.ndarray) -> "PhaseGrid":
        """把取樣值包成中心網格"""
        return PhaseGrid(
            space_tag=CENTRE,
            origin=PhaseVector.zeros(self.n_modes),
            spacing=self.spacing,
            dims=self.dims,
            hbar=self.hbar,
            samples=samples,
        )

    def points(self) -> np.ndarray:
        return self.grid(np.zeros(self.dims)).points()


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """均勻取樣的 Wigner（centre）或 chord 函數，samples 形狀等於 dims"""

    space_tag: str
    origin: PhaseVector
    spacing: Tuple[float, ...]
    dims: Tuple[int, ...]
    hbar: float
    samples: np.ndarray

    def __post_init__(self):
        if self.space_tag not in SPACE_TAGS:
            raise GridError(f"未知的 space_tag：{self.space_tag!r}")
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) % 2 or len(dims) != len(spacing):
            raise DimensionError(f"dims/spacing 長度不符：{dims} / {spacing}")
        if any(s <= 0 or not np.isfinite(s) for s in spacing):
            raise GridError(f"spacing 必須為正：{spacing}")
        if self.origin.n_modes * 2 != len(dims):
            raise DimensionError("origin 維度與網格維度不一致")
        samples = np.asarray(self.samples, dtype=complex)
        if samples.size != int(np.prod(dims)):
            raise GridError(f"樣本數 {samples.size} 與 dims {dims} 不符")
        samples = samples.reshape(dims)
        samples.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "hbar", float(self.hbar))

    @property
    def n_modes(self) -> int:
        return len(self.dims) // 2

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def is_symmetric(self) -> bool:
        return all(d % 2 == 1 for d in self.dims) and bool(np.all(self.origin.as_array() == 0.0))

    @property
    def centre_index(self) -> Tuple[int, ...]:
        return tuple((d - 1) // 2 for d in self.dims)

    @property
    def real_values(self) -> np.ndarray:
        return self.samples.real

    def axes(self) -> List[np.ndarray]:
        origin = self.origin.as_array()
        return [o + (np.arange(d) - (d - 1) / 2) * s for o, d, s in zip(origin, self.dims, self.spacing)]

    def mesh(self) -> np.ndarray:
        """座標陣列，形狀 dims + (2N,)"""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """展平的座標，形狀 (K, 2N)，順序與 samples.ravel() 相同"""
        return self.mesh().reshape(-1, len(self.dims))

    def extent(self) -> np.ndarray:
        """每軸最外側樣本的座標（相對原點）"""
        return np.array([(d - 1) / 2 * s for d, s in zip(self.dims, self.spacing)])

    def value_at_origin(self) -> complex:
        return complex(self.samples[self.centre_index])

    def with_samples(self, samples: np.ndarray) -> "PhaseGrid":
        return PhaseGrid(
            space_tag=self.space_tag,
            origin=self.origin,
            spacing=self.spacing,
            dims=self.dims,
            hbar=self.hbar,
            samples=samples,
        )

    def to_spec(self) -> GridSpec:
        if self.space_tag != CENTRE:
            raise GridError("只有 centre 網格能轉成 GridSpec")
        return GridSpec(dims=self.dims, half_width=tuple(self.extent()), hbar=self.hbar)


def _require_tag(grid: PhaseGrid, tag: str) -> None:
    if grid.space_tag != tag:
        raise GridError(f"需要 space_tag={tag}，收到 {grid.space_tag}")


def _require_symmetric(grid: PhaseGrid) -> None:
    if not grid.is_symmetric:
        raise GridError(f"non-symmetric grid：dims={grid.dims}, origin={grid.origin}")


def _boundary_mask(dims: Tuple[int, ...]) -> np.ndarray:
    """[輔助函式] 任一軸在最外側的樣本"""
    mask = np.zeros(dims, dtype=bool)
    for axis in range(len(dims)):
        index = [slice(None)] * len(dims)
        index[axis] = 0
        mask[tuple(index)] = True
        index[axis] = -1
        mask[tuple(index)] = True
    return mask


def _swap_blocks(data: np.ndarray, n_modes: int) -> np.ndarray:
    """[輔助函式] 前 N 軸與後 N 軸對調"""
    order = list(range(n_modes, 2 * n_modes)) + list(range(n_modes))
    return np.transpose(data, order)


def conjugate_spacing(grid: PhaseGrid) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
    """對偶網格的 (dims, spacing)；兩種方向的轉換共用同一公式"""
    n = grid.n_modes
    two_pi_hbar = 2.0 * np.pi * grid.hbar
    dims = tuple(grid.dims[n:]) + tuple(grid.dims[:n])
    spacing = tuple(
        two_pi_hbar / (d * s) for d, s in zip(dims, tuple(grid.spacing[n:]) + tuple(grid.spacing[:n]))
    )
    return dims, spacing


def wigner_to_chord(w: PhaseGrid) -> PhaseGrid:
    """
    χ(ξ) = (2πħ)^{−N} ∫ dx W(x) exp(i x∧ξ/ħ)。

    x∧ξ = p·ξ_q − q·ξ_p：p 軸做不歸一化的 ifft（正號），q 軸做 fft（負號），
    最後 p、q 兩塊對調，得到 (ξ_p, ξ_q) 排列的 chord 網格。
    """
    _require_tag(w, CENTRE)
    _require_symmetric(w)
    n = w.n_modes
    p_axes = tuple(range(n))
    q_axes = tuple(range(n, 2 * n))

    data = sp_fft.ifftshift(w.samples)
    data = sp_fft.ifftn(data, axes=p_axes, norm="forward")
    data = sp_fft.fftn(data, axes=q_axes)
    data = sp_fft.fftshift(data)
    data = _swap_blocks(data, n) * (w.cell_volume / (2.0 * np.pi * w.hbar) ** n)

    dims, spacing = conjugate_spacing(w)
    boundary = boundary_mass(w)
    if boundary > BOUNDARY_MASS_THRESHOLD:
        logger.warning("[TRANSFORM] centre 網格邊界質量 %.3e 超過 %.1e", boundary, BOUNDARY_MASS_THRESHOLD)
    return PhaseGrid(
        space_tag=CHORD,
        origin=PhaseVector.zeros(n),
        spacing=spacing,
        dims=dims,
        hbar=w.hbar,
        samples=data,
    )


def chord_to_wigner(chi: PhaseGrid) -> PhaseGrid:
    """
    W(x) = (2πħ)^{−N} ∫ dξ χ(ξ) exp(i ξ∧x/ħ)，wigner_to_chord 的精確逆轉換。

    ξ∧x = ξ_p·q − ξ_q·p：ξ_p 軸用 ifft、ξ_q 軸用 fft。
    網格邊界上 χ 仍不衰減時無法代表一個有限的 Wigner 函數，直接報錯。
    """
    _require_tag(chi, CHORD)
    _require_symmetric(chi)
    peak = float(np.max(np.abs(chi.samples)))
    edge = float(np.max(np.abs(chi.samples[_boundary_mask(chi.dims)])))
    if peak == 0.0 or edge > CHORD_DECAY_THRESHOLD * peak:
        raise AccuracyError(
            f"chord 函數在網格邊界不衰減（邊界 {edge:.3e} / 峰值 {peak:.3e}），無法轉回 Wigner"
        )
    n = chi.n_modes
    xi_p_axes = tuple(range(n))
    xi_q_axes = tuple(range(n, 2 * n))

    data = sp_fft.ifftshift(chi.samples)
    data = sp_fft.ifftn(data, axes=xi_p_axes, norm="forward")
    data = sp_fft.fftn(data, axes=xi_q_axes)
    data = sp_fft.fftshift(data)
    data = _swap_blocks(data, n) * (chi.cell_volume / (2.0 * np.pi * chi.hbar) ** n)

    dims, spacing = conjugate_spacing(chi)
    return PhaseGrid(
        space_tag=CENTRE,
        origin=PhaseVector.zeros(n),
        spacing=spacing,
        dims=dims,
        hbar=chi.hbar,
        samples=data,
    )


def chord_sum(w: PhaseGrid, chords: np.ndarray) -> np.ndarray:
    """
    在任意 chord 上直接求 (2πħ)^{−N} ΔX Σ_x W(x) exp(i x∧η/ħ)。
    這正是離散轉換的帶限內插：η 落在 chord 網格點上時與 wigner_to_chord 完全一致。
    """
    _require_tag(w, CENTRE)
    eta = np.atleast_2d(np.asarray(chords, dtype=float))
    if eta.shape[-1] != len(w.dims):
        raise DimensionError(f"chord 維度 {eta.shape[-1]} 與網格 {len(w.dims)} 不符")
    n = w.n_modes
    hbar = w.hbar
    scale = w.cell_volume / (2.0 * np.pi * hbar) ** n
    values = np.empty(eta.shape[0], dtype=complex)

    if n == 1:
        p_axis, q_axis = w.axes()
        chunk = max(1, _CHUNK_BUDGET // max(len(p_axis), len(q_axis)))
        for start in range(0, eta.shape[0], chunk):
            block = eta[start:start + chunk]
            phase_p = np.exp(1j * np.outer(p_axis, block[:, 1]) / hbar)
            phase_q = np.exp(-1j * np.outer(q_axis, block[:, 0]) / hbar)
            values[start:start + chunk] = np.sum(phase_p * (w.samples @ phase_q), axis=0)
        return values * scale

    flat = w.samples.ravel()
    keep = np.abs(flat) > SIGNIFICANT_SAMPLE_CUTOFF * np.max(np.abs(flat))
    weights = flat[keep]
    jx = j_apply(w.points()[keep])
    chunk = max(1, _CHUNK_BUDGET // max(1, weights.size))
    for start in range(0, eta.shape[0], chunk):
        block = eta[start:start + chunk]
        values[start:start + chunk] = weights @ np.exp(1j * (jx @ block.T) / hbar)
    return values * scale


def chord_trig_interpolate(chi: PhaseGrid, chords: np.ndarray) -> np.ndarray:
    """chord 網格在任意點的帶限內插值"""
    _require_tag(chi, CHORD)
    return chord_sum(chord_to_wigner(chi), chords)


def quadrature_mass(grid: PhaseGrid) -> float:
    """均勻和 Σ f ΔX（實部）"""
    return float(np.real(np.sum(grid.samples)) * grid.cell_volume)


def boundary_mass(grid: PhaseGrid) -> float:
    """最外側樣本的 Σ |f| ΔX"""
    return float(np.sum(np.abs(grid.samples[_boundary_mask(grid.dims)])) * grid.cell_volume)


def chord_normalization(chi: PhaseGrid) -> complex:
    """(2πħ)^N χ(0)"""
    _require_tag(chi, CHORD)
    return (2.0 * np.pi * chi.hbar) ** chi.n_modes * chi.value_at_origin()


def hermiticity_defect(chi: PhaseGrid) -> float:
    """‖χ(−ξ) − χ(ξ)*‖∞"""
    _require_symmetric(chi)
    mirrored = chi.samples[tuple(slice(None, None, -1) for _ in chi.dims)]
    return float(np.max(np.abs(mirrored - np.conj(chi.samples))))


def purity(state: PhaseGrid) -> float:
    """tr ρ² = (2πħ)^N ∫ W² dx = (2πħ)^N ∫ |χ|² dξ"""
    factor = (2.0 * np.pi * state.hbar) ** state.n_modes
    return float(factor * np.sum(np.abs(state.samples) ** 2) * state.cell_volume)


def phase_moments(w: PhaseGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Wigner 網格的平均值與共變異矩陣"""
    _require_tag(w, CENTRE)
    weights = w.real_values.ravel() * w.cell_volume
    mass = float(np.sum(weights))
    if mass == 0.0:
        raise AccuracyError("Wigner 網格質量為 0，無法計算動差")
    pts = w.points()
    mean = weights @ pts / mass
    centred = pts - mean
    cov = (centred * weights[:, None]).T @ centred / mass
    return mean, 0.5 * (cov + cov.T)
