"""
simulator.quadratic_exact
二次 Hamiltonian + 線性 Lindblad 通道的封閉解：
χ(ξ, t) = e^{i c_t∧ξ/ħ} χ0(G_{−t}ξ) exp(−ξ·M⁻_t ξ / 2ħ)。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import expm

from simulator import logger
from simulator.config import GAUSS_LEGENDRE_NODES_PER_UNIT_TIME, OUT_OF_GRID_AMPLITUDE
from simulator.dynamics import OpenSystem, require_quadratic
from simulator.errors import AccuracyError, ConfigError, NumericalRankError
from simulator.symplectic import (
    CENTRE,
    CHORD,
    PhaseGrid,
    _require_tag,
    chord_normalization,
    chord_sum,
    chord_to_wigner,
    j_apply,
    quadrature_mass,
    skew_product,
    symplectic_form,
    wigner_to_chord,
)

DIRECTIONS = ("forward", "backward")


def chord_generator_matrix(system: OpenSystem) -> np.ndarray:
    """chord 流的生成元 JB + γI"""
    require_quadratic(system, "chord_generator_matrix")
    return system.J @ system.hamiltonian.B + system.gamma * np.eye(2 * system.n_modes)


def propagation_matrix(system: OpenSystem, t: float) -> np.ndarray:
    """G_t = exp[t(JB + γI)]；det G_t = e^{2Nγt}"""
    return expm(t * chord_generator_matrix(system))


def centre_flow_affine(system: OpenSystem, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    中心流 x(t) = F_t x + c_t，F_t = exp[t(JB − γI)]。
    c_t 來自 H 的線性項 b，用擴增矩陣的指數一次算出。
    """
    require_quadratic(system, "centre_flow_affine")
    size = 2 * system.n_modes
    augmented = np.zeros((size + 1, size + 1))
    augmented[:size, :size] = system.J @ system.hamiltonian.B - system.gamma * np.eye(size)
    augmented[:size, size] = j_apply(system.hamiltonian.b)
    block = expm(t * augmented)
    return block[:size, :size], block[:size, size]


def decoherence_matrix(system: OpenSystem, t: float, direction: str = "backward") -> np.ndarray:
    """
    M_t = ∫₀ᵗ G_{±s}ᵀ Λ G_{±s} ds，Gauss-Legendre 求積（每單位時間 64 個節點，至少 64 個）。

    參數：
        direction (str): forward 用 G_s，backward 用 G_{−s}
    """
    require_quadratic(system, "decoherence_matrix")
    if t < 0:
        raise ConfigError(f"decoherence_matrix 需要 t >= 0，收到 {t}")
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction 必須是 {DIRECTIONS} 之一，收到 {direction!r}")
    size = 2 * system.n_modes
    if t == 0 or system.is_unitary:
        return np.zeros((size, size))

    n_nodes = max(GAUSS_LEGENDRE_NODES_PER_UNIT_TIME, int(np.ceil(GAUSS_LEGENDRE_NODES_PER_UNIT_TIME * t)))
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    s = 0.5 * t * (nodes + 1.0)
    sign = 1.0 if direction == "forward" else -1.0
    generators = (sign * s)[:, None, None] * chord_generator_matrix(system)[None, :, :]
    G = expm(generators)
    integrand = np.einsum("kji,jl,klm->kim", G, system.environment, G)
    M = np.tensordot(0.5 * t * weights, integrand, axes=1)
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """二次系統在時間 t 的 chord 傳播矩陣 G 與反向 decoherence matrix M⁻"""

    G: np.ndarray
    Mminus: np.ndarray
    t: float

    def __post_init__(self):
        if not np.allclose(self.Mminus, self.Mminus.T, rtol=0.0, atol=1e-12):
            raise NumericalRankError("M⁻ 不是對稱矩陣")
        min_eig = float(np.min(np.linalg.eigvalsh(self.Mminus)))
        if min_eig < -1e-12:
            raise NumericalRankError(f"M⁻ 不是半正定：最小特徵值 {min_eig:.3e}")
        if abs(np.linalg.det(self.G)) < 1e-300:
            raise NumericalRankError("G 不可逆")


def gaussian_kernel(system: OpenSystem, t: float) -> GaussianKernel:
    return GaussianKernel(
        G=propagation_matrix(system, t),
        Mminus=decoherence_matrix(system, t, "backward"),
        t=float(t),
    )


def coarse_graining_covariance(M: np.ndarray, hbar: float) -> np.ndarray:
    """chord 側的 exp(−ξMξ/2ħ) 對應 Wigner 側共變異 ħ M′⁻¹ = −ħ J M J"""
    J = symplectic_form(M.shape[0] // 2)
    cov = -hbar * J @ M @ J
    return 0.5 * (cov + cov.T)


def window_matrix(M: np.ndarray) -> Optional[np.ndarray]:
    """M′ = −J M⁻¹ J；M 奇異時回傳 None（純傳輸）"""
    if np.linalg.cond(M) > 1e12:
        return None
    J = symplectic_form(M.shape[0] // 2)
    return -J @ np.linalg.inv(M) @ J


def _evolve_chord_from_wigner(system: OpenSystem, w0: PhaseGrid, chord_grid: PhaseGrid, t: float) -> PhaseGrid:
    """[輔助函式] 在 chord_grid 的每個點上求 e^{ic∧ξ/ħ} χ0(G_{−t}ξ) e^{−ξM⁻ξ/2ħ}"""
    kernel = gaussian_kernel(system, t)
    back = propagation_matrix(system, -t)
    _, offset = centre_flow_affine(system, t)

    xi = chord_grid.points()
    eta = xi @ back.T
    values = chord_sum(w0, eta)

    outside = np.any(np.abs(eta) > chord_grid.extent() * (1.0 + 1e-12), axis=1)
    if np.any(outside):
        amplitude = float(np.max(np.abs(values[outside])))
        if amplitude > OUT_OF_GRID_AMPLITUDE:
            raise AccuracyError(
                f"回推的 chord 落在網格外（{int(outside.sum())} 點），振幅 {amplitude:.3e} > {OUT_OF_GRID_AMPLITUDE:.0e}"
            )
        values[outside] = 0.0

    quench = np.exp(-np.einsum("ki,ij,kj->k", xi, kernel.Mminus, xi) / (2.0 * system.hbar))
    phase = np.exp(1j * skew_product(offset, xi) / system.hbar)
    return chord_grid.with_samples((values * quench * phase).reshape(chord_grid.dims))


def evolve_chord_exact(system: OpenSystem, chi0: PhaseGrid, t: float) -> PhaseGrid:
    """
    chord 函數的精確演化。

    回推參數 G_{−t}ξ 用帶限內插求值（等同離散轉換在任意 chord 上的精確值）；
    回推點落在網格外且振幅 > 1e−8 時報 AccuracyError。
    """
    require_quadratic(system, "evolve_chord_exact")
    _require_tag(chi0, CHORD)
    w0 = chord_to_wigner(chi0)
    chi_t = _evolve_chord_from_wigner(system, w0, chi0, t)
    logger.info(
        "[EXACT] t=%.4f γ=%.4f (2πħ)^Nχ(0)=%.12f",
        t, system.gamma, chord_normalization(chi_t).real,
    )
    return chi_t


def evolve_wigner_exact(system: OpenSystem, w0: PhaseGrid, t: float) -> PhaseGrid:
    """W(x, t)：在 chord 側乘上精確的傳輸與 Gaussian quench，再轉回中心網格"""
    require_quadratic(system, "evolve_wigner_exact")
    _require_tag(w0, CENTRE)
    chi_t = _evolve_chord_from_wigner(system, w0, wigner_to_chord(w0), t)
    w_t = chord_to_wigner(chi_t)
    logger.info(
        "[EXACT] t=%.4f 質量 %.12f → %.12f，min W=%.4e",
        t, quadrature_mass(w0), quadrature_mass(w_t), float(np.min(w_t.real_values)),
    )
    return w_t


def chord_generator(system: OpenSystem, chi: PhaseGrid) -> PhaseGrid:
    """
    chord 表象的主方程右手邊：
    ∂χ/∂t = −((JB + γI)ξ)·∇χ − (1/2ħ) ξ·Λξ χ + (i/ħ) (Jb)∧ξ χ。
    梯度用譜方法：∇χ 是 (i/ħ)(Jx)W 的轉換。
    """
    require_quadratic(system, "chord_generator")
    _require_tag(chi, CHORD)
    hbar = system.hbar
    w = chord_to_wigner(chi)
    jx = j_apply(w.points())
    xi = chi.points()
    velocity = xi @ chord_generator_matrix(system).T

    advection = np.zeros(xi.shape[0], dtype=complex)
    for axis in range(xi.shape[1]):
        weighted = w.samples * (1j / hbar) * jx[:, axis].reshape(w.dims)
        gradient = wigner_to_chord(w.with_samples(weighted)).samples.ravel()
        advection += velocity[:, axis] * gradient

    flat = chi.samples.ravel()
    diffusion = np.einsum("ki,ij,kj->k", xi, system.environment, xi) / (2.0 * hbar)
    drift_phase = skew_product(j_apply(system.hamiltonian.b), xi) / hbar
    rhs = -advection - diffusion * flat + 1j * drift_phase * flat
    return chi.with_samples(rhs.reshape(chi.dims))


def evolve_gaussian_moments(
    system: OpenSystem, mean: np.ndarray, cov: np.ndarray, t: float
) -> Tuple[np.ndarray, np.ndarray]:
    """平均值 F_t m + c_t，共變異 F_t Σ F_tᵀ − ħ J M⁻_t J"""
    F, offset = centre_flow_affine(system, t)
    new_mean = F @ np.asarray(mean, dtype=float) + offset
    new_cov = F @ np.asarray(cov, dtype=float) @ F.T + coarse_graining_covariance(
        decoherence_matrix(system, t, "backward"), system.hbar
    )
    return new_mean, 0.5 * (new_cov + new_cov.T)
