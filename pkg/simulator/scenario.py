"""
simulator.scenario
scenario JSON → Scenario：系統、初始態、網格、時間點、方法與輸出目錄，並做一致性檢查。
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from simulator import logger
from simulator.config import (
    DEFAULT_DT,
    DEFAULT_GRID_DIMS,
    DEFAULT_HALF_WIDTH_FACTOR,
    DEFAULT_HBAR,
    DEFAULT_TRUNCATION,
    METHODS,
    OUTPUT_ROOT,
)
from simulator.dynamics import (
    LindbladChannel,
    OpenSystem,
    hamiltonian_from_dict,
    thermal_channels,
)
from simulator.errors import ChordLabError, ConfigError
from simulator.smallchord import IterationPolicy
from simulator.states import StateSpec
from simulator.symplectic import GridSpec

_KNOWN_KEYS = {
    "name", "hbar", "seed", "hamiltonian", "channels", "thermal", "state", "grid",
    "times", "methods", "output_dir", "dt", "policy", "oracle",
}


@dataclass(frozen=True, eq=False)
class Scenario:
    """一次 run 的完整描述；raw 保留正規化後的 dict，供 Celery task 傳遞與 hash"""

    name: str
    system: OpenSystem
    state: StateSpec
    grid: GridSpec
    times: Tuple[float, ...]
    methods: Tuple[str, ...]
    output_dir: Path
    dt: float = DEFAULT_DT
    policy: IterationPolicy = field(default_factory=IterationPolicy)
    truncation: int = DEFAULT_TRUNCATION
    seed: int = 0
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def hbar(self) -> float:
        return self.system.hbar

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.raw)


def _grid_from_dict(data: Optional[Dict[str, Any]], n_modes: int, hbar: float) -> GridSpec:
    """[輔助函式] grid 區塊；half_width 可為單一數值"""
    data = data or {}
    dims = data.get("dims", [DEFAULT_GRID_DIMS] * (2 * n_modes))
    if isinstance(dims, int):
        dims = [dims] * (2 * n_modes)
    half_width = data.get("half_width", DEFAULT_HALF_WIDTH_FACTOR * np.sqrt(hbar))
    if isinstance(half_width, (int, float)):
        half_width = [float(half_width)] * len(dims)
    if len(dims) != 2 * n_modes:
        raise ConfigError(f"grid.dims 需要 {2 * n_modes} 軸，收到 {dims}")
    return GridSpec(dims=tuple(dims), half_width=tuple(half_width), hbar=hbar)


def _channels_from_dict(data: Dict[str, Any], n_modes: int) -> List[LindbladChannel]:
    """[輔助函式] channels 清單與 thermal 簡寫串接"""
    channels = [LindbladChannel(lp=ch["lp"], lpp=ch["lpp"]) for ch in data.get("channels") or []]
    thermal = data.get("thermal")
    if thermal:
        channels += thermal_channels(float(thermal.get("A", 0.0)), float(thermal.get("nu", 0.0)), n_modes)
    return channels


def _validate(scenario: Scenario) -> None:
    """[輔助函式] 方法與系統、時間點之間的限制"""
    times = np.asarray(scenario.times, dtype=float)
    if times.size == 0:
        raise ConfigError("times 不能是空的")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ConfigError(f"times 必須非負且嚴格遞增：{list(scenario.times)}")
    if not scenario.methods:
        raise ConfigError("methods 不能是空的")
    unknown = [m for m in scenario.methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"未知的方法 {unknown}（可用 {METHODS}）")
    hamiltonian = scenario.system.hamiltonian
    if "exact" in scenario.methods and not hamiltonian.is_quadratic:
        raise ConfigError(f"exact 方法需要二次 Hamiltonian，收到 {hamiltonian.kind}")
    if "oracle" in scenario.methods:
        if scenario.system.n_modes != 1:
            raise ConfigError("oracle 方法只支援 N = 1")
        if not hamiltonian.is_polynomial:
            raise ConfigError(f"oracle 方法需要多項式 Hamiltonian，收到 {hamiltonian.kind}")
        if scenario.state.kind == "fock" and scenario.state.fock_index >= scenario.truncation:
            raise ConfigError(f"Fock index {scenario.state.fock_index} 必須小於截斷維度 {scenario.truncation}")
    if scenario.state.n_modes != scenario.system.n_modes:
        raise ConfigError(f"初始態 N={scenario.state.n_modes} 與系統 N={scenario.system.n_modes} 不一致")
    if scenario.dt <= 0:
        raise ConfigError(f"dt 必須為正：{scenario.dt}")


def scenario_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> Scenario:
    """
    dict → Scenario。

    參數：
        data (dict): scenario 內容（JSON 結構）
        base_dir (Path): 相對 output_dir 的基準，預設為 CHORD_LAB_OUTPUT_ROOT

    回傳：
        Scenario
    """
    if not isinstance(data, dict):
        raise ConfigError("scenario 必須是 JSON object")
    extra = set(data) - _KNOWN_KEYS
    if extra:
        logger.warning("[SCENARIO] 忽略未知欄位：%s", sorted(extra))
    if "hamiltonian" not in data:
        raise ConfigError("scenario 缺少 hamiltonian")

    try:
        hbar = float(data.get("hbar", DEFAULT_HBAR))
        hamiltonian = hamiltonian_from_dict(data["hamiltonian"])
        n_modes = hamiltonian.n_modes
        system = OpenSystem(hamiltonian=hamiltonian, channels=tuple(_channels_from_dict(data, n_modes)), hbar=hbar)
        state = StateSpec.from_dict(data.get("state") or {"kind": "coherent", "centres": [[0.0] * (2 * n_modes)]})
        grid = _grid_from_dict(data.get("grid"), n_modes, hbar)
        name = str(data.get("name", "scenario"))
        output_dir = Path(data.get("output_dir") or name)
        if not output_dir.is_absolute():
            output_dir = Path(base_dir or OUTPUT_ROOT) / output_dir
        scenario = Scenario(
            name=name,
            system=system,
            state=state,
            grid=grid,
            times=tuple(float(t) for t in data.get("times", [1.0])),
            methods=tuple(data.get("methods", ["exact"])),
            output_dir=output_dir,
            dt=float(data.get("dt", DEFAULT_DT)),
            policy=IterationPolicy.from_dict(data.get("policy")),
            truncation=int((data.get("oracle") or {}).get("truncation", DEFAULT_TRUNCATION)),
            seed=int(data.get("seed", 0)),
            raw=copy.deepcopy(data),
        )
    except ChordLabError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"scenario 格式錯誤：{e}") from e

    _validate(scenario)
    return scenario


def load_scenario(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """讀取 scenario JSON；overrides（例如 CLI 的 --methods / --dt / --out）覆蓋同名欄位"""
    source = Path(path)
    if not source.exists():
        raise ConfigError(f"找不到 scenario 檔：{source}")
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario 不是合法 JSON：{source}（{e}）") from e
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    scenario = scenario_from_dict(data)
    logger.info(
        "[SCENARIO] %s：methods=%s，times=%s，γ=%.4f",
        scenario.name, ",".join(scenario.methods), list(scenario.times), scenario.system.gamma,
    )
    return scenario


def scenario_hash(scenario: Scenario) -> str:
    """正規化 JSON 的 sha256（報告的 provenance）；輸出目錄不影響 hash"""
    content = {k: v for k, v in scenario.raw.items() if k != "output_dir"}
    canonical = json.dumps(content, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
