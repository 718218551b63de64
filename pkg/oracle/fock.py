"""
oracle.fock
截斷 Fock 空間的暴力解：Lindblad 主方程 RK4 積分，以及從密度矩陣取出 Wigner / chord 網格。
只支援單一自由度（N = 1）。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from oracle import logger
from simulator.config import (
    DEFAULT_DT,
    DEFAULT_HBAR,
    DEFAULT_TRUNCATION,
    DISPLACEMENT_PADDING,
    OPERATOR_PADDING,
    SPOT_CHECK_SAMPLES,
    SPOT_CHECK_TOLERANCE,
    TRUNCATION_GUARD_LEVELS,
    TRUNCATION_GUARD_POPULATION,
    WIGNER_S_STEP,
    BOUNDARY_MASS_THRESHOLD,
)
from simulator.dynamics import OpenSystem, QuadraticHamiltonian, QuarticHamiltonian
from simulator.errors import AccuracyError, ConfigError, DivergenceError, TruncationError
from simulator.states import StateSpec
from simulator.symplectic import (
    GridSpec,
    PhaseGrid,
    boundary_mass,
    quadrature_mass,
    wigner_to_chord,
)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """截斷維度 D 的密度矩陣（也用來承載主方程右手邊，所以建構時不檢查 trace）"""

    entries: np.ndarray
    hbar: float = DEFAULT_HBAR

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ConfigError(f"密度矩陣必須是方陣，收到 shape={rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise DivergenceError("密度矩陣含有非有限值")
        object.__setattr__(self, "entries", rho)
        object.__setattr__(self, "hbar", float(self.hbar))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    @property
    def purity(self) -> float:
        return density_purity(self)

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.entries))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def validate(self, trace_tol: float = 1e-10) -> None:
        """物理態的檢查：厄米、trace 為 1、特徵值 ≥ −1e−8"""
        if self.hermiticity_defect() > 1e-12:
            raise AccuracyError(f"密度矩陣不厄米：{self.hermiticity_defect():.3e}")
        if abs(self.trace - 1.0) > trace_tol:
            raise AccuracyError(f"密度矩陣 trace = {self.trace:.12f}")
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))))
        if min_eig < -1e-8:
            raise AccuracyError(f"密度矩陣有負特徵值 {min_eig:.3e}")


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """
    â、â†、q̂、p̂ 以 D + padding 維建構；a / adag / qop / pop 回傳左上角 D×D 區塊，
    full 保留原尺寸，讓乘積在保留區塊內是精確的。
    """

    dim: int
    hbar: float
    padding: int
    full: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def crop(self, matrix: np.ndarray) -> np.ndarray:
        return matrix[: self.dim, : self.dim]

    @property
    def a(self) -> np.ndarray:
        return self.crop(self.full[0])

    @property
    def adag(self) -> np.ndarray:
        return self.crop(self.full[1])

    @property
    def qop(self) -> np.ndarray:
        return self.crop(self.full[2])

    @property
    def pop(self) -> np.ndarray:
        return self.crop(self.full[3])

    def phase_operators(self, padded: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """(p̂, q̂)，與相空間向量相同的排列"""
        if padded:
            return self.full[3], self.full[2]
        return self.pop, self.qop


def build_operators(dim: int = DEFAULT_TRUNCATION, hbar: float = DEFAULT_HBAR, padding: int = OPERATOR_PADDING) -> OperatorSet:
    """q̂ = √(ħ/2)(â + â†)，p̂ = −i√(ħ/2)(â − â†)，[q̂, p̂] = iħ（最後一列除外）"""
    if dim < 2:
        raise ConfigError(f"Fock 截斷維度必須 >= 2：{dim}")
    size = dim + padding
    a = np.diag(np.sqrt(np.arange(1, size, dtype=float)), k=1).astype(complex)
    adag = a.conj().T
    scale = np.sqrt(hbar / 2.0)
    qop = scale * (a + adag)
    pop = -1j * scale * (a - adag)
    return OperatorSet(dim=int(dim), hbar=float(hbar), padding=int(padding), full=(a, adag, qop, pop))


def _require_single_mode(system: OpenSystem) -> None:
    if system.n_modes != 1:
        raise ConfigError(f"Fock oracle 只支援 N = 1，收到 N = {system.n_modes}")


def hamiltonian_operator(system: OpenSystem, ops: OperatorSet) -> np.ndarray:
    """
    Ĥ 的 D×D 矩陣。二次式用 Weyl 對稱排列 ½ Σ B_ij (x̂_i x̂_j + x̂_j x̂_i)/2 + b·x̂；
    quartic 為 p̂²/2 + q̂⁴/4 + κq̂²。其他 Hamiltonian 無法寫成多項式算符。
    """
    _require_single_mode(system)
    H = system.hamiltonian
    x_ops = ops.phase_operators(padded=True)
    if isinstance(H, QuadraticHamiltonian):
        op = np.zeros_like(x_ops[0])
        for i in range(2):
            op = op + H.b[i] * x_ops[i]
            for j in range(2):
                op = op + 0.25 * H.B[i, j] * (x_ops[i] @ x_ops[j] + x_ops[j] @ x_ops[i])
    elif isinstance(H, QuarticHamiltonian):
        p, q = x_ops
        q2 = q @ q
        op = 0.5 * p @ p + 0.25 * q2 @ q2 + H.kappa * q2
    else:
        raise ConfigError(f"Hamiltonian kind={H.kind!r} 無法寫成多項式算符，oracle 不支援")
    op = ops.crop(op)
    return 0.5 * (op + op.conj().T)


def channel_operators(system: OpenSystem, ops: OperatorSet) -> List[np.ndarray]:
    """L̂_k = l′_k·x̂ + i l″_k·x̂"""
    _require_single_mode(system)
    x_ops = ops.phase_operators()
    out = []
    for ch in system.channels:
        coefficients = ch.lp + 1j * ch.lpp
        out.append(coefficients[0] * x_ops[0] + coefficients[1] * x_ops[1])
    return out


class MasterEquation:
    """
    ∂ρ/∂t = Kρ + ρK† + (1/ħ) Σ L̂ρL̂†，K = −(i/ħ)Ĥ − (1/2ħ) Σ L̂†L̂。
    L̂†L̂ 直接以截斷後的 L̂ 相乘，trace 因此精確守恆。
    """

    def __init__(self, system: OpenSystem, dim: int = DEFAULT_TRUNCATION, ops: Optional[OperatorSet] = None):
        self.system = system
        self.hbar = system.hbar
        self.ops = ops or build_operators(dim, system.hbar)
        self.dim = self.ops.dim
        self.H = hamiltonian_operator(system, self.ops)
        self.L = channel_operators(system, self.ops)
        damping = sum((L.conj().T @ L for L in self.L), np.zeros_like(self.H))
        self.K = -1j / self.hbar * self.H - damping / (2.0 * self.hbar)
        self._K_dag = self.K.conj().T
        self._L_dag = [L.conj().T for L in self.L]

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        out = self.K @ rho + rho @ self._K_dag
        for L, L_dag in zip(self.L, self._L_dag):
            out += (L @ rho @ L_dag) / self.hbar
        return out

    def stable_step(self) -> float:
        """1/‖生成元‖ 的上界估計"""
        spread = 2.0 * np.linalg.norm(self.K, 2) + sum(np.linalg.norm(L, 2) ** 2 for L in self.L) / self.hbar
        return 1.0 / spread if spread > 0 else np.inf


def lindblad_rhs(system: OpenSystem, rho: DensityMatrix) -> DensityMatrix:
    """主方程右手邊作用在 ρ 上（trace 為 0）"""
    equation = MasterEquation(system, rho.dim)
    return DensityMatrix(entries=equation.rhs(rho.entries), hbar=system.hbar)


def _check_truncation(rho: np.ndarray, t: float) -> None:
    """[輔助函式] 頂端 10 個能階的佔據數必須 < 1e−8"""
    top = float(np.sum(np.real(np.diag(rho))[-TRUNCATION_GUARD_LEVELS:]))
    if top >= TRUNCATION_GUARD_POPULATION:
        raise TruncationError(
            f"t={t:.4f} 時頂端 {TRUNCATION_GUARD_LEVELS} 個 Fock 能階的佔據數 {top:.3e} "
            f">= {TRUNCATION_GUARD_POPULATION:.0e}，請加大截斷維度"
        )


def integrate_master(
    system: OpenSystem,
    rho0: DensityMatrix,
    t: float,
    dt: float = DEFAULT_DT,
    equation: Optional[MasterEquation] = None,
) -> DensityMatrix:
    """
    固定步長 RK4 積分主方程。

    參數：
        system (OpenSystem): N = 1 的系統
        rho0 (DensityMatrix): 初始態
        t (float): 積分時間（>= 0）
        dt (float): 要求的步長；超過 1/‖生成元‖ 時自動縮小
        equation (MasterEquation): 可重複使用的已建構方程

    回傳：
        DensityMatrix: 時間 t 的密度矩陣
    """
    if t < 0:
        raise ConfigError(f"integrate_master 需要 t >= 0，收到 {t}")
    if dt <= 0:
        raise ConfigError(f"dt 必須為正：{dt}")
    _check_truncation(rho0.entries, 0.0)
    if t == 0:
        return rho0
    equation = equation or MasterEquation(system, rho0.dim)
    if equation.dim != rho0.dim:
        raise ConfigError(f"MasterEquation 維度 {equation.dim} 與 ρ 維度 {rho0.dim} 不一致")

    step = min(dt, equation.stable_step())
    n_steps = int(np.ceil(t / step - 1e-9))
    h = t / n_steps
    if h < dt:
        logger.warning("[ORACLE][RK4] 步長由 %.3e 縮小為 %.3e（1/‖生成元‖ 限制）", dt, h)

    rho = rho0.entries.copy()
    purity0 = density_purity(rho0)
    for i in range(n_steps):
        k1 = equation.rhs(rho)
        k2 = equation.rhs(rho + 0.5 * h * k1)
        k3 = equation.rhs(rho + 0.5 * h * k2)
        k4 = equation.rhs(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        if not np.all(np.isfinite(rho)):
            raise DivergenceError(f"[ORACLE] t={(i + 1) * h:.6g} 出現非有限值")
        _check_truncation(rho, (i + 1) * h)

    result = DensityMatrix(entries=rho, hbar=system.hbar)
    purity_t = density_purity(result)
    if system.gamma == 0 and purity_t > purity0 + 1e-8:
        logger.warning("[ORACLE][PURITY] γ = 0 但純度上升：%.10f → %.10f", purity0, purity_t)
    logger.info(
        "[ORACLE] t=%.4f，%d 步 RK4，tr ρ=%.12f，purity=%.8f",
        t, n_steps, result.trace.real, purity_t,
    )
    return result


# ---- 初始態 ----

def _coherent_amplitudes(centre: np.ndarray, dim: int, hbar: float) -> np.ndarray:
    """[輔助函式] c_n = e^{−|α|²/2} αⁿ/√n!，α = (q + ip)/√(2ħ)"""
    p, q = float(centre[0]), float(centre[1])
    alpha = (q + 1j * p) / np.sqrt(2.0 * hbar)
    n = np.arange(dim)
    if alpha == 0:
        out = np.zeros(dim, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def density_from_state(spec: StateSpec, dim: int = DEFAULT_TRUNCATION, hbar: float = DEFAULT_HBAR) -> DensityMatrix:
    """coherent / cat / Fock 的純態密度矩陣 |ψ⟩⟨ψ|"""
    if spec.n_modes != 1:
        raise ConfigError("Fock oracle 只支援 N = 1 的初始態")
    if spec.kind == "coherent":
        psi = _coherent_amplitudes(spec.centres[0].as_array(), dim, hbar)
    elif spec.kind == "cat":
        first = _coherent_amplitudes(spec.centres[0].as_array(), dim, hbar)
        second = _coherent_amplitudes(spec.centres[1].as_array(), dim, hbar)
        psi = first + np.exp(1j * spec.phase) * second
    else:
        if spec.fock_index >= dim:
            raise ConfigError(f"Fock index {spec.fock_index} 必須小於截斷維度 {dim}")
        psi = np.zeros(dim, dtype=complex)
        psi[spec.fock_index] = 1.0
    psi = psi / np.linalg.norm(psi)
    rho = DensityMatrix(entries=np.outer(psi, psi.conj()), hbar=hbar)
    _check_truncation(rho.entries, 0.0)
    return rho


# ---- 診斷量 ----

def density_purity(rho: DensityMatrix) -> float:
    """tr ρ²"""
    return float(np.real(np.sum(rho.entries * rho.entries.T)))


def density_moments(rho: DensityMatrix, ops: Optional[OperatorSet] = None) -> Tuple[np.ndarray, np.ndarray]:
    """⟨x̂⟩ 與對稱化共變異 ½⟨x̂_i x̂_j + x̂_j x̂_i⟩ − ⟨x̂_i⟩⟨x̂_j⟩，(p, q) 排列"""
    ops = ops or build_operators(rho.dim, rho.hbar)
    x_ops = ops.phase_operators(padded=True)
    size = x_ops[0].shape[0]
    padded = np.zeros((size, size), dtype=complex)
    padded[: rho.dim, : rho.dim] = rho.entries
    expect = lambda op: float(np.real(np.trace(op @ padded)))
    mean = np.array([expect(x) for x in x_ops])
    cov = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            cov[i, j] = 0.5 * expect(x_ops[i] @ x_ops[j] + x_ops[j] @ x_ops[i]) - mean[i] * mean[j]
    return mean, cov


def parity_value(rho: DensityMatrix) -> float:
    """W(0) = (πħ)^{−1} Σ (−1)ⁿ ρ_nn"""
    signs = (-1.0) ** np.arange(rho.dim)
    return float(np.sum(signs * rho.populations()) / (np.pi * rho.hbar))


def displaced_trace(rho: DensityMatrix, xi: np.ndarray, ops: Optional[OperatorSet] = None) -> complex:
    """
    (2πħ)^{−1} tr(T̂_{−ξ} ρ̂)，T̂_{−ξ} = exp[i(ξ_q p̂ − ξ_p q̂)/ħ]。
    位移算符在多加 100 個能階的空間做 expm 再截回。
    """
    chord = np.asarray(xi, dtype=float).ravel()
    if chord.shape != (2,):
        raise ConfigError(f"displaced_trace 只接受單一自由度的 chord，收到 shape={chord.shape}")
    ops = ops or build_operators(rho.dim, rho.hbar, padding=DISPLACEMENT_PADDING)
    pop, qop = ops.phase_operators(padded=True)
    shift = expm(1j * (chord[1] * pop - chord[0] * qop) / rho.hbar)
    block = shift[: rho.dim, : rho.dim]
    return complex(np.sum(block * rho.entries.T) / (2.0 * np.pi * rho.hbar))


# ---- Wigner / chord 網格 ----

def hermite_functions(n_levels: int, q: np.ndarray, hbar: float) -> np.ndarray:
    """
    諧振子本徵函數 ψ_n(q)，形狀 (n_levels, len(q))，穩定遞迴：
    ψ_{n+1} = √(2/(n+1)) (q/√ħ) ψ_n − √(n/(n+1)) ψ_{n−1}
    """
    x = np.asarray(q, dtype=float) / np.sqrt(hbar)
    psi = np.zeros((n_levels,) + x.shape)
    psi[0] = (np.pi * hbar) ** -0.25 * np.exp(-0.5 * x**2)
    if n_levels > 1:
        psi[1] = np.sqrt(2.0) * x * psi[0]
    for n in range(1, n_levels - 1):
        psi[n + 1] = np.sqrt(2.0 / (n + 1)) * x * psi[n] - np.sqrt(n / (n + 1)) * psi[n - 1]
    return psi


def wigner_from_density(rho: DensityMatrix, grid: GridSpec) -> PhaseGrid:
    """
    W(q, p) = (2πħ)^{−1} ∫ds e^{−ips/ħ} ⟨q + s/2|ρ|q − s/2⟩，以 Hermite 函數展開波函數，
    s 的積分用步長 0.05、範圍 ±(√(2D+1) + 3)√ħ 的均勻網格。
    """
    if grid.n_modes != 1:
        raise ConfigError("wigner_from_density 只支援 N = 1")
    hbar = rho.hbar
    if not np.isclose(grid.hbar, hbar):
        raise ConfigError(f"網格 ħ={grid.hbar} 與密度矩陣 ħ={hbar} 不一致")
    p_axis, q_axis = grid.axes()
    reach = 2.0 * (np.sqrt(2.0 * rho.dim + 1.0) + 3.0) * np.sqrt(hbar)
    n_half = int(np.ceil(reach / WIGNER_S_STEP))
    s = WIGNER_S_STEP * np.arange(-n_half, n_half + 1)
    kernel = np.exp(-1j * np.outer(p_axis, s) / hbar) * WIGNER_S_STEP / (2.0 * np.pi * hbar)

    values = np.empty((p_axis.size, q_axis.size))
    for j, q in enumerate(q_axis):
        ket = hermite_functions(rho.dim, q + 0.5 * s, hbar)
        bra = hermite_functions(rho.dim, q - 0.5 * s, hbar)
        overlap = np.einsum("ms,mn,ns->s", ket, rho.entries, bra)
        values[:, j] = np.real(kernel @ overlap)

    w = grid.grid(values)
    edge = boundary_mass(w)
    if edge > BOUNDARY_MASS_THRESHOLD:
        raise AccuracyError(f"網格太小：oracle Wigner 的邊界質量 {edge:.3e} > {BOUNDARY_MASS_THRESHOLD:.0e}")
    mass = quadrature_mass(w)
    if abs(mass - rho.trace.real) > 1e-6:
        raise AccuracyError(f"oracle Wigner 質量 {mass:.10f} 與 tr ρ = {rho.trace.real:.10f} 不符")
    logger.info("[ORACLE][WIGNER] D=%d，網格 %s，質量 %.10f", rho.dim, "x".join(map(str, grid.dims)), mass)
    return w


def chord_from_density(rho: DensityMatrix, grid: GridSpec, seed: int = 0) -> PhaseGrid:
    """
    wigner_to_chord(wigner_from_density(ρ))，再在 10 個隨機 chord 網格點上
    與直接的 displaced trace 比對（|ξ| ≤ min(半寬/2, 6√ħ)，誤差 ≤ 1e−6）。
    """
    chi = wigner_to_chord(wigner_from_density(rho, grid))
    points = chi.points()
    radius = min(0.5 * float(np.min(chi.extent())), 6.0 * np.sqrt(rho.hbar))
    candidates = np.nonzero(np.linalg.norm(points, axis=1) <= radius)[0]
    rng = np.random.default_rng(seed)
    picks = rng.choice(candidates, size=min(SPOT_CHECK_SAMPLES, candidates.size), replace=False)

    ops = build_operators(rho.dim, rho.hbar, padding=DISPLACEMENT_PADDING)
    flat = chi.samples.ravel()
    worst = 0.0
    for k in picks:
        direct = displaced_trace(rho, points[k], ops)
        worst = max(worst, abs(direct - flat[k]))
    if worst > SPOT_CHECK_TOLERANCE:
        raise AccuracyError(f"chord 抽查失敗：FFT 與 displaced trace 差 {worst:.3e} > {SPOT_CHECK_TOLERANCE:.0e}")
    logger.info("[ORACLE][CHORD] 抽查 %d 點，最大差 %.3e", picks.size, worst)
    return chi
