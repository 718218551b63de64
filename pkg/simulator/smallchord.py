"""
simulator.smallchord
一般光滑 Hamiltonian 的 small-chord 傳播：沿耗散軌跡的 G_t(x)、M_t(x)、
混合 (centre → chord) 傳播子、Wigner 的粗粒化演化、局部 decoherence time 與反覆演化。
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from simulator import logger
from simulator.config import (
    DEFAULT_DEC_FRACTION,
    DEFAULT_DT,
    DEFAULT_MAX_STEP,
    SIGNIFICANT_SAMPLE_CUTOFF,
    SMALL_CHORD_MASS_THRESHOLD,
    SMALL_CHORD_RADIUS_FACTOR,
    TOLERANCES,
)
from simulator.dynamics import OpenSystem, Trajectory
from simulator.errors import AccuracyError, ConfigError, DivergenceError
from simulator.symplectic import (
    CENTRE,
    PhaseGrid,
    PhaseLike,
    PhaseVector,
    _require_tag,
    as_phase_array,
    chord_to_wigner,
    j_apply,
    quadrature_mass,
    skew_product,
    wigner_to_chord,
)

# _mixed_sum 每一批最多處理的 (樣本 × chord 點) 數
_CHUNK_BUDGET = 2_000_000


def decoherence_threshold(n_modes: int) -> float:
    """quench 高斯的相空間體積等於 coherent state 時 det M = 4^{−N}"""
    return 4.0 ** (-n_modes)


@dataclass(frozen=True)
class IterationPolicy:
    """
    反覆演化的步長規則：每步 ≤ max_step，且 γ ≠ 0 時 ≤ dec_fraction · t_dec。
    enforce = False 時 evolve_* 不檢查 t_dec。
    """

    max_step: float = DEFAULT_MAX_STEP
    dec_fraction: float = DEFAULT_DEC_FRACTION
    enforce: bool = True

    def __post_init__(self):
        if not self.max_step > 0:
            raise ConfigError(f"policy.max_step 必須為正：{self.max_step}")
        if not self.dec_fraction > 0:
            raise ConfigError(f"policy.dec_fraction 必須為正：{self.dec_fraction}")

    def step_bound(self, gamma: float, t_dec: float) -> float:
        if gamma == 0 or not np.isfinite(t_dec):
            return self.max_step
        return min(self.max_step, self.dec_fraction * t_dec)

    def to_dict(self) -> Dict[str, Any]:
        return {"max_step": self.max_step, "dec_fraction": self.dec_fraction, "enforce": self.enforce}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "IterationPolicy":
        data = data or {}
        return cls(
            max_step=float(data.get("max_step", DEFAULT_MAX_STEP)),
            dec_fraction=float(data.get("dec_fraction", DEFAULT_DEC_FRACTION)),
            enforce=bool(data.get("enforce", True)),
        )


# ---- 傳播束（x, G, M）的聯合 RK4 ----

def _bundle_derivative(system: OpenSystem, x: np.ndarray, G: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """[輔助函式] ẋ = J∇H − γx，Ġ = (J∇²H(x) + γI)G，Ṁ = GᵀΛG；前面的軸為批次"""
    generator = np.matmul(system.J, system.hamiltonian.hessian(x)) + system.gamma * np.eye(x.shape[-1])
    dG = np.matmul(generator, G)
    dM = np.matmul(np.swapaxes(G, -1, -2), np.matmul(system.environment, G))
    return system.drift(x), dG, dM


def _bundle_step(
    system: OpenSystem, x: np.ndarray, G: np.ndarray, M: np.ndarray, h: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """[輔助函式] 一步 RK4；M 只依賴 G，因此與 (x, G) 一起推進"""
    k1 = _bundle_derivative(system, x, G)
    k2 = _bundle_derivative(system, x + 0.5 * h * k1[0], G + 0.5 * h * k1[1])
    k3 = _bundle_derivative(system, x + 0.5 * h * k2[0], G + 0.5 * h * k2[1])
    k4 = _bundle_derivative(system, x + h * k3[0], G + h * k3[1])
    out = []
    for i, value in enumerate((x, G, M)):
        out.append(value + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    return out[0], out[1], out[2]


def _step_count(t: float, dt: float) -> int:
    if dt <= 0:
        raise ConfigError(f"dt 必須為正：{dt}")
    if t < 0:
        raise ConfigError(f"small-chord 只支援 t >= 0，收到 {t}")
    return int(np.ceil(t / dt - 1e-9)) if t > 0 else 0


def _first_crossing(t_prev: float, t_next: float, d_prev, d_next, threshold: float):
    """[輔助函式] det M 穿越門檻的時間（線性內插）；d_prev / d_next 可以是陣列"""
    d_prev = np.asarray(d_prev, dtype=float)
    d_next = np.asarray(d_next, dtype=float)
    flat = d_next == d_prev
    t_cross = t_prev + (threshold - d_prev) * (t_next - t_prev) / np.where(flat, 1.0, d_next - d_prev)
    t_cross = np.where(flat, t_next, t_cross)
    return float(t_cross) if t_cross.ndim == 0 else t_cross


@dataclass(frozen=True, eq=False)
class PropagationBundle:
    """單一起點的 x(t)、G_t、M_t（每一步都保留）"""

    x_traj: Trajectory
    G_of_t: np.ndarray
    M_of_t: np.ndarray

    def __post_init__(self):
        steps = len(self.x_traj)
        if self.G_of_t.shape[0] != steps or self.M_of_t.shape[0] != steps:
            raise ConfigError("PropagationBundle 的 x / G / M 長度不一致")
        size = self.G_of_t.shape[-1]
        if not np.allclose(self.G_of_t[0], np.eye(size)) or np.any(self.M_of_t[0] != 0):
            raise ConfigError("PropagationBundle 必須從 G = I、M = 0 開始")

    @property
    def times(self) -> np.ndarray:
        return self.x_traj.times

    @property
    def n_modes(self) -> int:
        return self.G_of_t.shape[-1] // 2

    def state_at(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """時間 t 的 (x, G, M)；落在兩步之間時線性內插"""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ConfigError(f"t={t} 超出 bundle 範圍 [{times[0]}, {times[-1]}]")
        k = int(np.clip(np.searchsorted(times, t), 0, len(times) - 1))
        if abs(times[k] - t) <= 1e-12 or k == 0:
            return self.x_traj.points[k], self.G_of_t[k], self.M_of_t[k]
        w = (t - times[k - 1]) / (times[k] - times[k - 1])
        pick = lambda arr: (1.0 - w) * arr[k - 1] + w * arr[k]
        return pick(self.x_traj.points), pick(self.G_of_t), pick(self.M_of_t)

    def quench_matrix(self, index: int = -1) -> np.ndarray:
        """G_t⁻ᵀ M_t G_t⁻¹：沿回推 chord 累積的 decoherence，寫成最終 chord 的二次式"""
        return _pull_back(self.G_of_t[index], self.M_of_t[index])

    def det_m_curve(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "det_M": np.linalg.det(self.M_of_t)})


def _pull_back(G: np.ndarray, M: np.ndarray) -> np.ndarray:
    """[輔助函式] G⁻ᵀ M G⁻¹（可批次）"""
    Gt = np.swapaxes(G, -1, -2)
    right = np.linalg.solve(Gt, M)                                           # G⁻ᵀ M
    out = np.swapaxes(np.linalg.solve(Gt, np.swapaxes(right, -1, -2)), -1, -2)  # G⁻ᵀ M G⁻¹
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def local_bundle(system: OpenSystem, x0: PhaseLike, t: float, dt: float = DEFAULT_DT) -> PropagationBundle:
    """
    沿 x0 出發的中心流，同時積分 G 與 M。

    參數：
        x0: 起點
        t (float): 終止時間（>= 0）
        dt (float): RK4 步長

    回傳：
        PropagationBundle: 每一步的 x、G、M
    """
    start = as_phase_array(x0).astype(float)
    size = 2 * system.n_modes
    n_steps = _step_count(t, dt)
    h = t / n_steps if n_steps else 0.0

    xs = np.empty((n_steps + 1, size))
    Gs = np.empty((n_steps + 1, size, size))
    Ms = np.empty((n_steps + 1, size, size))
    xs[0], Gs[0], Ms[0] = start, np.eye(size), np.zeros((size, size))
    x, G, M = xs[0], Gs[0], Ms[0]
    for i in range(n_steps):
        x, G, M = _bundle_step(system, x, G, M, h)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(G))):
            raise DivergenceError(f"[SMALLCHORD][BUNDLE] t={(i + 1) * h:.6g} 出現非有限值")
        xs[i + 1], Gs[i + 1], Ms[i + 1] = x, G, 0.5 * (M + M.T)
    times = np.linspace(0.0, t, n_steps + 1)
    return PropagationBundle(x_traj=Trajectory(times=times, points=xs), G_of_t=Gs, M_of_t=Ms)


@dataclass(frozen=True, eq=False)
class BundleBatch:
    """一批起點在時間 t 的 x(t)、G_t、M_t，以及各自第一次跨過門檻的 t_dec（未跨過為 inf）"""

    points: np.ndarray
    x: np.ndarray
    G: np.ndarray
    M: np.ndarray
    t_dec: np.ndarray
    t: float

    def quench_matrices(self) -> np.ndarray:
        return _pull_back(self.G, self.M)


def propagate_bundles(
    system: OpenSystem,
    points: np.ndarray,
    t: float,
    dt: float = DEFAULT_DT,
    horizon: Optional[float] = None,
) -> BundleBatch:
    """
    local_bundle 的向量化版本：只保留時間 t 的 (x, G, M)。
    horizon > t 時繼續積分到 horizon，只為了找 t_dec。
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    size = 2 * system.n_modes
    n_steps = _step_count(t, dt)
    h = t / n_steps if n_steps else min(dt, horizon or dt)
    total = n_steps
    if horizon is not None and horizon > t:
        total = n_steps + int(np.ceil((horizon - t) / h - 1e-9))

    threshold = decoherence_threshold(system.n_modes)
    x = pts.copy()
    G = np.broadcast_to(np.eye(size), (pts.shape[0], size, size)).copy()
    M = np.zeros_like(G)
    det_prev = np.zeros(pts.shape[0])
    t_dec = np.full(pts.shape[0], np.inf)
    snapshot = (x.copy(), G.copy(), M.copy())
    for i in range(total):
        x, G, M = _bundle_step(system, x, G, M, h)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(G))):
            raise DivergenceError(f"[SMALLCHORD][BATCH] t={(i + 1) * h:.6g} 出現非有限值")
        if not system.is_unitary:
            det_next = np.linalg.det(M)
            crossed = np.isinf(t_dec) & (det_next >= threshold)
            if np.any(crossed):
                t_dec[crossed] = _first_crossing(i * h, (i + 1) * h, det_prev[crossed], det_next[crossed], threshold)
            det_prev = det_next
        if i + 1 == n_steps:
            snapshot = (x.copy(), G.copy(), M.copy())
    x_t, G_t, M_t = snapshot
    return BundleBatch(
        points=pts, x=x_t, G=G_t, M=0.5 * (M_t + np.swapaxes(M_t, -1, -2)), t_dec=t_dec, t=float(t)
    )


class BundleCache:
    """批次 bundle 的 insert-or-get 快取；key 為 (系統, t, dt, horizon, 起點)"""

    def __init__(self):
        self._lock = threading.Lock()
        self._store: Dict[Tuple, BundleBatch] = {}

    @staticmethod
    def _key(system: OpenSystem, points: np.ndarray, t: float, dt: float, horizon: Optional[float]) -> Tuple:
        digest = hashlib.sha1(np.ascontiguousarray(points, dtype=float).tobytes()).hexdigest()
        return (system.fingerprint(), round(float(t), 12), float(dt), horizon and round(float(horizon), 12), digest)

    def get_or_compute(
        self,
        system: OpenSystem,
        points: np.ndarray,
        t: float,
        dt: float = DEFAULT_DT,
        horizon: Optional[float] = None,
    ) -> BundleBatch:
        key = self._key(system, points, t, dt, horizon)
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            logger.info("[SMALLCHORD][CACHE] 命中 %d 個起點，t=%.4f", points.shape[0], t)
            return hit
        batch = propagate_bundles(system, points, t, dt, horizon)
        with self._lock:
            return self._store.setdefault(key, batch)

    def clear(self) -> None:
        with self._lock:
            self._store.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)


BUNDLE_CACHE = BundleCache()


# ---- 混合傳播子與 chord / Wigner 演化 ----

def mixed_propagator(system: OpenSystem, bundle: PropagationBundle, xi: PhaseLike, t: float) -> complex:
    """2^{−N} exp(i x(t)∧ξ/ħ) exp(−ξ·Q_t ξ/2ħ)，Q_t = G_t⁻ᵀ M_t G_t⁻¹"""
    chord = as_phase_array(xi)
    x_t, G_t, M_t = bundle.state_at(t)
    quench = _pull_back(G_t, M_t)
    exponent = 1j * skew_product(x_t, chord) / system.hbar - chord @ quench @ chord / (2.0 * system.hbar)
    return complex(2.0 ** (-system.n_modes) * np.exp(exponent))


def small_chord_fraction(chi: PhaseGrid) -> float:
    """|ξ| > 3√ħ 之外的 Σ|χ|² 佔比"""
    radius = SMALL_CHORD_RADIUS_FACTOR * np.sqrt(chi.hbar)
    power = np.abs(chi.samples.ravel()) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    far = np.linalg.norm(chi.points(), axis=1) > radius
    return float(np.sum(power[far]) / total)


def _warn_long_chords(chi: PhaseGrid) -> None:
    fraction = small_chord_fraction(chi)
    if fraction > SMALL_CHORD_MASS_THRESHOLD:
        logger.warning(
            "[SMALLCHORD][GUARD] 輸入在 |ξ| > %.1f√ħ 的 chord 質量佔 %.3e（> %.0e），small-chord 近似可能不準",
            SMALL_CHORD_RADIUS_FACTOR, fraction, SMALL_CHORD_MASS_THRESHOLD,
        )


def _significant(w0: PhaseGrid) -> Tuple[np.ndarray, np.ndarray]:
    """[輔助函式] 略過相對振幅 < 1e−14 的樣本"""
    flat = w0.samples.ravel()
    peak = float(np.max(np.abs(flat)))
    if not np.isfinite(peak):
        raise DivergenceError("[SMALLCHORD] 輸入網格含非有限值")
    if peak == 0.0:
        raise AccuracyError("[SMALLCHORD] 輸入網格全為零，無法演化")
    keep = np.abs(flat) > SIGNIFICANT_SAMPLE_CUTOFF * peak
    return w0.points()[keep], flat[keep]


def _enforce_policy(system: OpenSystem, batch: BundleBatch, t: float, policy: IterationPolicy) -> None:
    if not policy.enforce or system.gamma == 0:
        return
    t_dec = float(np.min(batch.t_dec))
    if np.isfinite(t_dec) and t > policy.dec_fraction * t_dec + 1e-12:
        raise AccuracyError(
            f"small-chord 步長 t={t:.4f} 超過局部 decoherence time 的允許範圍"
            f"（min t_dec={t_dec:.4f}，dec_fraction={policy.dec_fraction}）"
        )


def _mixed_sum(weights: np.ndarray, x_t: np.ndarray, quench: np.ndarray, xi: np.ndarray, hbar: float) -> np.ndarray:
    """[輔助函式] Σ_k w_k exp(i x_k(t)∧ξ/ħ − ξ·Q_k ξ/2ħ)，對樣本分批"""
    size = xi.shape[1]
    features = (xi[:, :, None] * xi[:, None, :]).reshape(xi.shape[0], size * size)
    coefficients = quench.reshape(quench.shape[0], size * size)
    jx = j_apply(x_t)
    values = np.zeros(xi.shape[0], dtype=complex)
    chunk = max(1, _CHUNK_BUDGET // xi.shape[0])
    for start in range(0, weights.size, chunk):
        stop = start + chunk
        exponent = 1j * (jx[start:stop] @ xi.T) / hbar - (coefficients[start:stop] @ features.T) / (2.0 * hbar)
        values += weights[start:stop] @ np.exp(exponent)
    return values


def evolve_chord_smallchord(
    system: OpenSystem,
    w0: PhaseGrid,
    t: float,
    dt: float = DEFAULT_DT,
    policy: Optional[IterationPolicy] = None,
    cache: Optional[BundleCache] = None,
) -> PhaseGrid:
    """
    χ(ξ, t) = (2πħ)^{−N} Σ_x ΔX W0(x) exp(i x(t)∧ξ/ħ) exp(−ξ·Q_t(x)ξ/2ħ)。
    每個有效的中心樣本一個 bundle（批次計算並快取）。
    """
    _require_tag(w0, CENTRE)
    policy = policy or IterationPolicy()
    cache = cache or BUNDLE_CACHE
    chord_grid = wigner_to_chord(w0)
    _warn_long_chords(chord_grid)
    if t == 0:
        return chord_grid

    points, weights = _significant(w0)
    horizon = t / policy.dec_fraction if (policy.enforce and system.gamma != 0 and policy.dec_fraction < 1) else None
    batch = cache.get_or_compute(system, points, t, dt, horizon)
    _enforce_policy(system, batch, t, policy)

    scale = w0.cell_volume / (2.0 * np.pi * system.hbar) ** system.n_modes
    values = _mixed_sum(weights, batch.x, batch.quench_matrices(), chord_grid.points(), system.hbar) * scale
    if not np.all(np.isfinite(values)):
        raise DivergenceError(f"[SMALLCHORD] t={t:.4f} 的 chord 網格出現非有限值")
    logger.info(
        "[SMALLCHORD] t=%.4f，%d 個中心樣本，γ=%.4f，min t_dec=%.4g",
        t, weights.size, system.gamma, float(np.min(batch.t_dec)),
    )
    return chord_grid.with_samples(values.reshape(chord_grid.dims))


def evolve_wigner_smallchord(
    system: OpenSystem,
    w0: PhaseGrid,
    t: float,
    dt: float = DEFAULT_DT,
    policy: Optional[IterationPolicy] = None,
    cache: Optional[BundleCache] = None,
) -> PhaseGrid:
    """
    高斯窗粗粒化的古典傳輸：每個樣本搬到 x(t)，再以共變異 −ħJQ_tJ 的高斯展開。
    在 chord 側求和後轉回中心網格，不需要 M 的反矩陣。
    """
    chi_t = evolve_chord_smallchord(system, w0, t, dt=dt, policy=policy, cache=cache)
    w_t = chord_to_wigner(chi_t)
    if not np.all(np.isfinite(w_t.samples)):
        raise DivergenceError(f"[SMALLCHORD] t={t:.4f} 的 Wigner 網格出現非有限值")
    mass_in, mass_out = quadrature_mass(w0), quadrature_mass(w_t)
    logger.info(
        "[SMALLCHORD] t=%.4f 質量 %.12f → %.12f，min W=%.4e", t, mass_in, mass_out, float(np.min(w_t.real_values)),
    )
    if abs(mass_out - mass_in) > TOLERANCES["smallchord_mass"]:
        raise AccuracyError(f"[SMALLCHORD] t={t:.4f} 質量由 {mass_in:.12f} 變為 {mass_out:.12f}")
    return w_t


@dataclass(frozen=True, eq=False)
class DecoherenceReport:
    """局部 decoherence time；det_M_curve 欄位為 t, det_M"""

    x: PhaseVector
    t_dec: float
    det_M_curve: pd.DataFrame


def decoherence_time(system: OpenSystem, x: PhaseLike, t_max: float, dt: float = DEFAULT_DT) -> DecoherenceReport:
    """t_dec = det M_t(x) 第一次 ≥ 4^{−N} 的時間；到 t_max 都沒跨過則為 inf"""
    if not t_max > 0:
        raise ConfigError(f"t_max 必須為正：{t_max}")
    start = PhaseVector.from_array(as_phase_array(x))
    bundle = local_bundle(system, start, t_max, dt)
    curve = bundle.det_m_curve()
    threshold = decoherence_threshold(system.n_modes)
    dets = curve["det_M"].to_numpy()
    times = curve["t"].to_numpy()
    t_dec = float("inf")
    hits = np.nonzero(dets >= threshold)[0]
    if hits.size and not system.is_unitary:
        k = int(hits[0])
        t_dec = float(times[0]) if k == 0 else _first_crossing(times[k - 1], times[k], dets[k - 1], dets[k], threshold)
    logger.info("[SMALLCHORD][T_DEC] x=%s t_dec=%s（t_max=%.3f）", start, t_dec, t_max)
    return DecoherenceReport(x=start, t_dec=t_dec, det_M_curve=curve)


def grid_decoherence_time(
    system: OpenSystem,
    w: PhaseGrid,
    horizon: float,
    dt: float = DEFAULT_DT,
    cache: Optional[BundleCache] = None,
) -> float:
    """網格上所有有效樣本的最小 t_dec（只看到 horizon 為止）"""
    if system.is_unitary:
        return float("inf")
    cache = cache or BUNDLE_CACHE
    points, _ = _significant(w)
    batch = cache.get_or_compute(system, points, horizon, dt)
    return float(np.min(batch.t_dec))


def evolve_iterated(
    system: OpenSystem,
    w0: PhaseGrid,
    t_total: float,
    policy: Optional[IterationPolicy] = None,
    dt: float = DEFAULT_DT,
    cache: Optional[BundleCache] = None,
) -> PhaseGrid:
    """
    把 [0, t_total] 切成不超過 min(max_step, dec_fraction · t_dec) 的步，每步做一次
    evolve_wigner_smallchord 並重新 quench。每步結束只保留實部。
    """
    policy = policy or IterationPolicy()
    if t_total < 0:
        raise ConfigError(f"t_total 必須 >= 0：{t_total}")
    w = w0
    elapsed = 0.0
    step_index = 0
    while t_total - elapsed > 1e-12:
        remaining = t_total - elapsed
        t_dec = float("inf")
        if system.gamma != 0:
            t_dec = grid_decoherence_time(system, w, policy.max_step / min(1.0, policy.dec_fraction), dt, cache)
        step = min(policy.step_bound(system.gamma, t_dec), remaining)
        if step < dt and step < remaining:
            raise AccuracyError(f"反覆演化的步長 {step:.3e} 小於 dt={dt}（t_dec={t_dec:.3e}）")
        evolved = evolve_wigner_smallchord(system, w, step, dt=dt, policy=policy, cache=cache)
        imag = float(np.max(np.abs(evolved.samples.imag)))
        w = evolved.with_samples(evolved.real_values)
        elapsed += step
        step_index += 1
        logger.info(
            "[SMALLCHORD][ITER] 第 %d 步 Δt=%.4f → t=%.4f，虛部 %.2e，t_dec=%.4g",
            step_index, step, elapsed, imag, t_dec,
        )
    return w
