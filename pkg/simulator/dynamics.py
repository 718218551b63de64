"""
simulator.dynamics
古典流：耗散的中心流、二次 Hamiltonian 的 chord 流、雙相空間 Hamiltonian 流，
以及沿軌跡的 decoherence functional。
"""
from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm

from simulator import logger
from simulator.config import DEFAULT_DT, DEFAULT_HBAR
from simulator.errors import ConfigError, DimensionError, DivergenceError
from simulator.symplectic import PhaseLike, PhaseVector, as_phase_array, j_apply, skew_product, symplectic_form

HAMILTONIAN_KINDS = ("quadratic", "quartic", "pendulum")


# ---- Hamiltonian ----

class SmoothHamiltonian(ABC):
    """
    光滑 Hamiltonian H(x) 的介面。
    value / gradient / hessian 都接受形狀 (..., 2N) 的陣列，對前面的軸向量化。
    """

    kind: str = ""
    n_modes: int = 1

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]: ...

    @property
    def is_quadratic(self) -> bool:
        return self.kind == "quadratic"

    @property
    def is_polynomial(self) -> bool:
        return self.kind in ("quadratic", "quartic")

    def fingerprint(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _diagonal_hessian(diag: np.ndarray) -> np.ndarray:
    """[輔助函式] (..., 2N) 的對角元 → (..., 2N, 2N)"""
    size = diag.shape[-1]
    out = np.zeros(diag.shape + (size,))
    idx = np.arange(size)
    out[..., idx, idx] = diag
    return out


class QuadraticHamiltonian(SmoothHamiltonian):
    """H = ½ x·Bx + b·x"""

    kind = "quadratic"

    def __init__(self, B: Sequence[Sequence[float]], b: Optional[Sequence[float]] = None):
        matrix = np.asarray(B, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise DimensionError(f"B 必須是 2N×2N 方陣，收到 shape={matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ConfigError("B 含有非有限值")
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
            raise ConfigError("B 必須是對稱矩陣")
        linear = np.zeros(matrix.shape[0]) if b is None else np.asarray(b, dtype=float).ravel()
        if linear.shape != (matrix.shape[0],):
            raise DimensionError(f"b 長度 {linear.shape} 與 B {matrix.shape} 不符")
        self.B = 0.5 * (matrix + matrix.T)
        self.b = linear
        self.n_modes = matrix.shape[0] // 2

    @classmethod
    def harmonic(cls, n_modes: int = 1, omega: float = 1.0) -> "QuadraticHamiltonian":
        """(p² + q²)/2 的 ω 倍"""
        return cls(omega * np.eye(2 * n_modes))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.B, x) + x @ self.b

    def gradient(self, x):
        return np.asarray(x, dtype=float) @ self.B + self.b

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.B, x.shape[:-1] + self.B.shape).copy()

    def to_dict(self):
        return {"kind": self.kind, "B": self.B.tolist(), "b": self.b.tolist()}


class QuarticHamiltonian(SmoothHamiltonian):
    """H = Σ_n p_n²/2 + q_n⁴/4 + κ q_n²"""

    kind = "quartic"

    def __init__(self, kappa: float = 0.0, n_modes: int = 1):
        self.kappa = float(kappa)
        self.n_modes = int(n_modes)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., : self.n_modes], x[..., self.n_modes:]
        return np.sum(0.5 * p**2 + 0.25 * q**4 + self.kappa * q**2, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., : self.n_modes], x[..., self.n_modes:]
        return np.concatenate([p, q**3 + 2.0 * self.kappa * q], axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        q = x[..., self.n_modes:]
        return _diagonal_hessian(np.concatenate([np.ones_like(q), 3.0 * q**2 + 2.0 * self.kappa], axis=-1))

    def to_dict(self):
        return {"kind": self.kind, "kappa": self.kappa, "n_modes": self.n_modes}


class PendulumHamiltonian(SmoothHamiltonian):
    """H = Σ_n p_n²/2 − cos q_n"""

    kind = "pendulum"

    def __init__(self, n_modes: int = 1):
        self.n_modes = int(n_modes)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., : self.n_modes], x[..., self.n_modes:]
        return np.sum(0.5 * p**2 - np.cos(q), axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., : self.n_modes], x[..., self.n_modes:]
        return np.concatenate([p, np.sin(q)], axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        q = x[..., self.n_modes:]
        return _diagonal_hessian(np.concatenate([np.ones_like(q), np.cos(q)], axis=-1))

    def to_dict(self):
        return {"kind": self.kind, "n_modes": self.n_modes}


def hamiltonian_from_dict(data: Dict[str, Any]) -> SmoothHamiltonian:
    """scenario 內的 hamiltonian 區塊 → SmoothHamiltonian"""
    kind = data.get("kind")
    if kind == "quadratic":
        if "B" not in data:
            raise ConfigError("quadratic Hamiltonian 需要 B")
        return QuadraticHamiltonian(data["B"], data.get("b"))
    if kind == "quartic":
        return QuarticHamiltonian(kappa=data.get("kappa", 0.0), n_modes=data.get("n_modes", 1))
    if kind == "pendulum":
        return PendulumHamiltonian(n_modes=data.get("n_modes", 1))
    raise ConfigError(f"未知的 Hamiltonian kind：{kind!r}（可用 {HAMILTONIAN_KINDS}）")


# ---- Lindblad 通道 ----

@dataclass(frozen=True, eq=False)
class LindbladChannel:
    """線性通道 L(x) = l·x，l = l′ + i l″"""

    lp: np.ndarray
    lpp: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.lp, dtype=float).ravel()
        lpp = np.asarray(self.lpp, dtype=float).ravel()
        if lp.shape != lpp.shape or lp.size % 2:
            raise DimensionError(f"l′ / l″ 長度不一致或不是偶數：{lp.shape} vs {lpp.shape}")
        if not (np.all(np.isfinite(lp)) and np.all(np.isfinite(lpp))):
            raise ConfigError("Lindblad 通道含有非有限值")
        if not (np.any(lp) or np.any(lpp)):
            raise ConfigError("Lindblad 通道 l′ 與 l″ 不能同時為 0")
        object.__setattr__(self, "lp", lp)
        object.__setattr__(self, "lpp", lpp)

    @property
    def n_modes(self) -> int:
        return self.lp.size // 2

    @property
    def vector(self) -> np.ndarray:
        return self.lp + 1j * self.lpp

    @property
    def is_self_adjoint(self) -> bool:
        return not np.any(self.lpp)

    def value(self, x: PhaseLike) -> np.ndarray:
        return as_phase_array(x) @ self.vector

    @classmethod
    def annihilation(cls, n_modes: int = 1, mode: int = 0, strength: float = 1.0) -> "LindbladChannel":
        """strength·â：l′ 在 q 分量、l″ 在 p 分量，各為 strength/√2"""
        lp = np.zeros(2 * n_modes)
        lpp = np.zeros(2 * n_modes)
        lp[n_modes + mode] = strength / np.sqrt(2.0)
        lpp[mode] = strength / np.sqrt(2.0)
        return cls(lp=lp, lpp=lpp)

    @classmethod
    def creation(cls, n_modes: int = 1, mode: int = 0, strength: float = 1.0) -> "LindbladChannel":
        """strength·â†"""
        lp = np.zeros(2 * n_modes)
        lpp = np.zeros(2 * n_modes)
        lp[n_modes + mode] = strength / np.sqrt(2.0)
        lpp[mode] = -strength / np.sqrt(2.0)
        return cls(lp=lp, lpp=lpp)

    def to_dict(self) -> Dict[str, List[float]]:
        return {"lp": self.lp.tolist(), "lpp": self.lpp.tolist()}


def dissipation_coefficient(channels: Iterable[LindbladChannel]) -> float:
    """
    γ = Σ_k l″_k ∧ l′_k。
    符號取為讓 â 通道給出 γ = +1/2（中心流收縮）；自伴通道（l″ = 0）貢獻 0。
    """
    return float(sum(skew_product(ch.lpp, ch.lp) for ch in channels))


def environment_matrix(channels: Iterable[LindbladChannel], n_modes: Optional[int] = None) -> np.ndarray:
    """Λ = Σ_k (l′_k l′_kᵀ + l″_k l″_kᵀ)"""
    channels = list(channels)
    if n_modes is None:
        n_modes = channels[0].n_modes if channels else 1
    out = np.zeros((2 * n_modes, 2 * n_modes))
    for ch in channels:
        out += np.outer(ch.lp, ch.lp) + np.outer(ch.lpp, ch.lpp)
    return out


def thermal_channels(A: float, nu: float = 0.0, n_modes: int = 1) -> List[LindbladChannel]:
    """
    阻尼振子的熱浴通道：每個自由度 √(A(ν+1))·â 與 √(Aν)·â†（強度為 0 的通道略過）。
    總 γ = A/2。
    """
    if A < 0 or nu < 0:
        raise ConfigError(f"thermal 參數必須非負：A={A}, nu={nu}")
    out: List[LindbladChannel] = []
    for mode in range(n_modes):
        if A * (nu + 1.0) > 0:
            out.append(LindbladChannel.annihilation(n_modes, mode, np.sqrt(A * (nu + 1.0))))
        if A * nu > 0:
            out.append(LindbladChannel.creation(n_modes, mode, np.sqrt(A * nu)))
    return out


@dataclass(frozen=True, eq=False)
class OpenSystem:
    """Hamiltonian + 線性 Lindblad 通道 + ħ；gamma 由通道導出"""

    hamiltonian: SmoothHamiltonian
    channels: Tuple[LindbladChannel, ...] = field(default_factory=tuple)
    hbar: float = DEFAULT_HBAR
    gamma: float = field(init=False)

    def __post_init__(self):
        channels = tuple(self.channels)
        for ch in channels:
            if ch.n_modes != self.hamiltonian.n_modes:
                raise DimensionError(
                    f"通道維度 N={ch.n_modes} 與 Hamiltonian N={self.hamiltonian.n_modes} 不一致"
                )
        if not np.isfinite(self.hbar) or self.hbar <= 0:
            raise ConfigError(f"hbar 必須為正：{self.hbar}")
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "hbar", float(self.hbar))
        object.__setattr__(self, "gamma", dissipation_coefficient(channels))

    @property
    def n_modes(self) -> int:
        return self.hamiltonian.n_modes

    @property
    def environment(self) -> np.ndarray:
        return environment_matrix(self.channels, self.n_modes)

    @property
    def is_unitary(self) -> bool:
        return len(self.channels) == 0

    @property
    def J(self) -> np.ndarray:
        return symplectic_form(self.n_modes)

    def drift(self, x: np.ndarray) -> np.ndarray:
        """中心流的右手邊 J∇H(x) − γx"""
        return j_apply(self.hamiltonian.gradient(x)) - self.gamma * x

    def fingerprint(self) -> str:
        return json.dumps(
            {
                "hamiltonian": self.hamiltonian.to_dict(),
                "channels": [ch.to_dict() for ch in self.channels],
                "hbar": self.hbar,
            },
            sort_keys=True,
        )


# ---- 雙相空間點與軌跡 ----

@dataclass(frozen=True, eq=False)
class DoublePhasePoint:
    """雙相空間的點 X = (x, y)，y = Jξ"""

    x: PhaseVector
    y: PhaseVector

    def __post_init__(self):
        x = self.x if isinstance(self.x, PhaseVector) else PhaseVector.from_array(self.x)
        y = self.y if isinstance(self.y, PhaseVector) else PhaseVector.from_array(self.y)
        if x.n_modes != y.n_modes:
            raise DimensionError("x 與 y 維度不一致")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def chord(self) -> PhaseVector:
        """ξ = −Jy"""
        return -j_apply(self.y)

    @classmethod
    def from_chord(cls, x: PhaseLike, xi: PhaseLike) -> "DoublePhasePoint":
        x_vec = x if isinstance(x, PhaseVector) else PhaseVector.from_array(x)
        return cls(x=x_vec, y=PhaseVector.from_array(j_apply(as_phase_array(xi))))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x.as_array(), self.y.as_array()])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "DoublePhasePoint":
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size % 4:
            raise DimensionError(f"雙相空間向量長度必須是 4 的倍數，收到 {arr.size}")
        half = arr.size // 2
        return cls(x=PhaseVector.from_array(arr[:half]), y=PhaseVector.from_array(arr[half:]))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    times 與 points 一一對應；kind = centre 時每列是 x，kind = double 時每列是 (x, y)。
    times 沿積分方向嚴格單調（反向積分時遞減）。
    """

    times: np.ndarray
    points: np.ndarray
    kind: str = "centre"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if times.shape[0] != points.shape[0]:
            raise DimensionError(f"times ({times.shape[0]}) 與 points ({points.shape[0]}) 長度不同")
        if self.kind not in ("centre", "double"):
            raise ConfigError(f"未知的 trajectory kind：{self.kind!r}")
        if times.size > 1:
            steps = np.diff(times)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ConfigError("trajectory 的 times 必須嚴格單調")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    @property
    def n_modes(self) -> int:
        width = self.points.shape[1]
        return width // 4 if self.kind == "double" else width // 2

    def __len__(self) -> int:
        return self.times.size

    def final(self) -> Union[PhaseVector, DoublePhasePoint]:
        if self.kind == "double":
            return DoublePhasePoint.from_array(self.points[-1])
        return PhaseVector.from_array(self.points[-1])

    def centres(self) -> np.ndarray:
        return self.points[:, : 2 * self.n_modes]

    def chords(self) -> np.ndarray:
        """每個時間點的 ξ = −Jy（centre 軌跡為 0）"""
        if self.kind != "double":
            return np.zeros((len(self), 2 * self.n_modes))
        return -j_apply(self.points[:, 2 * self.n_modes:])

    def to_frame(self) -> pd.DataFrame:
        """欄位 t, p…, q…（雙相空間再加 y_p…, y_q…）"""
        n = self.n_modes
        suffix = [""] if n == 1 else [str(i + 1) for i in range(n)]
        columns = [f"p{s}" for s in suffix] + [f"q{s}" for s in suffix]
        if self.kind == "double":
            columns += [f"y_p{s}" for s in suffix] + [f"y_q{s}" for s in suffix]
        frame = pd.DataFrame(self.points, columns=columns)
        frame.insert(0, "t", self.times)
        return frame


# ---- 積分器 ----

def _rk4(
    rhs: Callable[[np.ndarray], np.ndarray],
    state0: np.ndarray,
    t: float,
    dt: float,
    label: str,
) -> Tuple[np.ndarray, np.ndarray]:
    """[輔助函式] 固定步長 RK4；t 可為負（反向）。回傳 (times, states)"""
    if dt <= 0:
        raise ConfigError(f"dt 必須為正：{dt}")
    n_steps = int(np.ceil(abs(t) / dt - 1e-9)) if t != 0 else 0
    states = np.empty((n_steps + 1,) + np.shape(state0))
    states[0] = state0
    times = np.linspace(0.0, t, n_steps + 1)
    if n_steps == 0:
        return times, states
    h = t / n_steps
    y = np.array(state0, dtype=float)
    for i in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"[{label}] t={times[i + 1]:.6g} 出現非有限值（軌跡發散）")
        states[i + 1] = y
    logger.debug("[%s] RK4 完成：t=%.4g，%d 步", label, t, n_steps)
    return times, states


def centre_flow(system: OpenSystem, x0: PhaseLike, t: float, dt: float = DEFAULT_DT) -> Trajectory:
    """ẋ = J∇H(x) − γx 的 RK4 積分"""
    x_start = as_phase_array(x0).astype(float)
    if x_start.shape != (2 * system.n_modes,):
        raise DimensionError(f"x0 維度 {x_start.shape} 與系統 N={system.n_modes} 不符")
    times, states = _rk4(system.drift, x_start, t, dt, "CENTRE")
    return Trajectory(times=times, points=states, kind="centre")


def require_quadratic(system: OpenSystem, operation: str) -> None:
    if not system.hamiltonian.is_quadratic:
        raise ConfigError(f"{operation} 只支援 quadratic Hamiltonian，收到 {system.hamiltonian.kind}")


def chord_flow_quadratic(system: OpenSystem, xi0: PhaseLike, t: float) -> PhaseVector:
    """ξ(t) = exp[t(JB + γI)] ξ0"""
    require_quadratic(system, "chord_flow_quadratic")
    xi = as_phase_array(xi0)
    generator = system.J @ system.hamiltonian.B + system.gamma * np.eye(2 * system.n_modes)
    return PhaseVector.from_array(expm(t * generator) @ xi)


def _split_double(system: OpenSystem, state: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    size = 2 * system.n_modes
    return state[..., :size], state[..., size:]


def _double_drift(system: OpenSystem) -> Callable[[np.ndarray], np.ndarray]:
    """[輔助函式] I H 的 Hamilton 方程：ẋ = ∂IH/∂y，ẏ = −∂IH/∂x"""
    grad = system.hamiltonian.gradient
    gamma = system.gamma

    def rhs(state: np.ndarray) -> np.ndarray:
        x, y = _split_double(system, state)
        jy_half = 0.5 * j_apply(y)
        grad_plus = grad(x - jy_half)   # x⁺ = x + ξ/2
        grad_minus = grad(x + jy_half)  # x⁻ = x − ξ/2
        x_dot = 0.5 * j_apply(grad_plus + grad_minus) - gamma * x
        y_dot = -(grad_plus - grad_minus) + gamma * y
        return np.concatenate([x_dot, y_dot], axis=-1)

    return rhs


def double_flow(
    system: OpenSystem,
    X0: Union[DoublePhasePoint, Sequence[float]],
    t: float,
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """雙相空間 Hamiltonian I H(X) = H(x − Jy/2) − H(x + Jy/2) − γ x·y 的 RK4 積分"""
    start = X0.as_array() if isinstance(X0, DoublePhasePoint) else np.asarray(X0, dtype=float).ravel()
    if start.shape != (4 * system.n_modes,):
        raise DimensionError(f"X0 維度 {start.shape} 與系統 N={system.n_modes} 不符")
    times, states = _rk4(_double_drift(system), start, t, dt, "DOUBLE")
    return Trajectory(times=times, points=states, kind="double")


def _double_array(X: Union[DoublePhasePoint, np.ndarray]) -> np.ndarray:
    return X.as_array() if isinstance(X, DoublePhasePoint) else np.asarray(X, dtype=float)


def unitary_double_hamiltonian(system: OpenSystem, X: Union[DoublePhasePoint, np.ndarray]) -> np.ndarray:
    """I H_U(X) = H(x − Jy/2) − H(x + Jy/2)"""
    x, y = _split_double(system, _double_array(X))
    jy_half = 0.5 * j_apply(y)
    return system.hamiltonian.value(x - jy_half) - system.hamiltonian.value(x + jy_half)


def double_hamiltonian(system: OpenSystem, X: Union[DoublePhasePoint, np.ndarray]) -> np.ndarray:
    """I H(X) = I H_U(X) − γ x·y"""
    x, y = _split_double(system, _double_array(X))
    return unitary_double_hamiltonian(system, X) - system.gamma * np.sum(x * y, axis=-1)


def double_lindblad(system: OpenSystem, X: Union[DoublePhasePoint, np.ndarray]) -> np.ndarray:
    """每個通道的 I L_k(X) = L_k(x − Jy/2) − L_k(x + Jy/2) = l_k·ξ，形狀 (..., K)"""
    _, y = _split_double(system, _double_array(X))
    xi = -j_apply(y)
    if not system.channels:
        return np.zeros(xi.shape[:-1] + (0,), dtype=complex)
    vectors = np.stack([ch.vector for ch in system.channels], axis=-1)
    return xi @ vectors


def decoherence_functional(system: OpenSystem, X_traj: Trajectory) -> np.ndarray:
    """
    D(t_i) = Σ_k ∫ |I L_k(X(t′))|² dt′，以累積梯形積分；對經過時間積分，序列不遞減。
    """
    if X_traj.kind != "double":
        return np.zeros(len(X_traj))
    integrand = np.sum(np.abs(double_lindblad(system, X_traj.points)) ** 2, axis=-1)
    elapsed = np.abs(X_traj.times - X_traj.times[0])
    if len(X_traj) == 1:
        return np.zeros(1)
    return cumulative_trapezoid(integrand, x=elapsed, initial=0.0)


def chord_quench_factor(system: OpenSystem, X_traj: Trajectory) -> np.ndarray:
    """沿雙相空間軌跡的振幅衰減 exp(−D/2ħ)"""
    return np.exp(-decoherence_functional(system, X_traj) / (2.0 * system.hbar))
