# simulator/workflow.py
from __future__ import annotations

import itertools
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import scipy
from celery import chord, shared_task

import simulator
from simulator import logger
from simulator.config import DEFAULT_DT, TASK_QUEUE, TOLERANCES
from simulator.errors import ConfigError
from oracle.fock import density_purity
from simulator.dynamics import centre_flow
from simulator.quadratic_exact import chord_generator, coarse_graining_covariance, decoherence_matrix, window_matrix
from simulator.scenario import Scenario, scenario_from_dict, scenario_hash
from simulator.smallchord import DecoherenceReport, decoherence_time
from simulator.storage import (
    read_density_from_dm,
    read_grid_from_psg,
    write_decoherence_report_to_csv,
    write_report_to_json,
    write_trajectory_to_csv,
)
from simulator.states import build_state
from simulator.symplectic import conjugate_spacing, wigner_to_chord
from simulator.tasks_methods import METHOD_TASKS

# describe 的粗略耗時估計：每次「樣本 × chord 點」核函數求值的秒數
_SECONDS_PER_KERNEL_EVAL = 2e-8
# t_dec 的搜尋上限：max(時間點) 的倍數，至少 10
_T_DEC_HORIZON_FACTOR = 4.0


@dataclass
class ComparisonReport:
    """每個時間點、每個方法的診斷量，以及方法兩兩之間的差異"""

    scenario: str
    scenario_hash: str
    methods: List[str]
    per_time: List[Dict[str, Any]] = field(default_factory=list)
    flags: Dict[str, Any] = field(default_factory=dict)
    t_dec: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def max_abs(self, first: str, second: str) -> float:
        key = _pair_key(first, second)
        values = [row["pairs"][key]["max_abs"] for row in self.per_time if key in row["pairs"]]
        return float(max(values)) if values else float("nan")


def _pair_key(first: str, second: str) -> str:
    return "-".join(sorted((first, second)))


def provenance() -> Dict[str, Any]:
    """報告附帶的版本資訊與使用的容許誤差"""
    return {
        "chord_lab": simulator.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "tolerances": dict(TOLERANCES),
    }


def centroid_decoherence(scenario: Scenario, dt: float = DEFAULT_DT) -> DecoherenceReport:
    """初始態中心的局部 decoherence time"""
    horizon = max(_T_DEC_HORIZON_FACTOR * max(scenario.times), 10.0)
    return decoherence_time(scenario.system, scenario.state.centroid(), horizon, dt)


def _compare_grids(paths: Dict[str, str]) -> Dict[str, Dict[str, float]]:
    """[輔助函式] 同一時間點各方法網格的 max-abs 與 L² 差"""
    grids = {method: read_grid_from_psg(path) for method, path in paths.items()}
    pairs: Dict[str, Dict[str, float]] = {}
    for (m1, g1), (m2, g2) in itertools.combinations(sorted(grids.items()), 2):
        if g1.dims != g2.dims or not np.allclose(g1.spacing, g2.spacing):
            raise ConfigError(f"{m1} 與 {m2} 的網格不同，無法比較")
        diff = g1.real_values - g2.real_values
        pairs[_pair_key(m1, m2)] = {
            "max_abs": float(np.max(np.abs(diff))),
            "l2": float(np.sqrt(np.sum(diff**2) * g1.cell_volume)),
        }
    return pairs


def build_report(scenario: Scenario, results: List[Dict[str, Any]], output_dir: Path) -> ComparisonReport:
    """
    依各方法的摘要組出 ComparisonReport。

    參數：
        scenario (Scenario): 本次 run 的 scenario
        results (List[dict]): run_*_method 的回傳值
        output_dir (Path): decoherence 曲線的輸出目錄

    回傳：
        ComparisonReport
    """
    by_method = {r["method"]: {round(row["t"], 12): row for row in r["times"]} for r in results}
    per_time = []
    for t in scenario.times:
        rows = {m: by_method[m][round(t, 12)] for m in by_method if round(t, 12) in by_method[m]}
        entry = {
            "t": t,
            "methods": rows,
            "pairs": _compare_grids({m: row["grid"] for m, row in rows.items()}),
        }
        if "oracle" in rows and "density" in rows["oracle"]:
            # tr ρ² 與 Wigner 網格上的純度：檢查網格是否容得下截斷後的 ρ
            rho = read_density_from_dm(rows["oracle"]["density"])
            entry["oracle_purity_gap"] = abs(density_purity(rho) - rows["oracle"]["purity"])
        per_time.append(entry)

    flags: Dict[str, Any] = {"unitary_limit": scenario.system.is_unitary}
    if scenario.system.is_unitary:
        for method, rows in by_method.items():
            purities = [row["purity"] for row in rows.values()]
            spread = float(np.max(purities) - np.min(purities)) if purities else 0.0
            flags[f"{method}_purity_constant"] = spread <= TOLERANCES["purity_constant"]
            flags[f"{method}_purity_spread"] = spread

    report_dec = centroid_decoherence(scenario, scenario.dt)
    curve = write_decoherence_report_to_csv(report_dec, output_dir / "decoherence_centroid.csv")
    trajectory = centre_flow(scenario.system, report_dec.x, max(scenario.times), scenario.dt)
    trajectory_csv = write_trajectory_to_csv(trajectory, output_dir / "trajectory_centroid.csv")
    return ComparisonReport(
        scenario=scenario.name,
        scenario_hash=scenario_hash(scenario),
        methods=sorted(by_method),
        per_time=per_time,
        flags=flags,
        t_dec={
            "x": report_dec.x.as_array().tolist(),
            "t_dec": report_dec.t_dec,
            "curve": str(curve),
            "trajectory": str(trajectory_csv),
        },
        provenance=provenance(),
    )


@shared_task(name="workflow.process_scenario")
def process_scenario_task(scenario_dict: Dict[str, Any], method: str, output_dir: str) -> Dict[str, Any]:
    """單一方法的完整演化，回傳摘要供 summarize_run_task 使用"""
    task = METHOD_TASKS.get(method)
    if task is None:
        raise ConfigError(f"未知的方法：{method!r}")
    logger.info("[WORKFLOW] 開始 %s（%s）", method, scenario_dict.get("name", "scenario"))
    return task(scenario_dict, output_dir)


@shared_task(name="workflow.summarize_run")
def summarize_run_task(results: List[Dict[str, Any]], scenario_dict: Dict[str, Any], output_dir: str) -> Dict[str, Any]:
    """所有方法完成後：比較網格、寫出 report.json"""
    logger.info("===== 收尾：比較 %d 個方法 =====", len(results))
    scenario = scenario_from_dict(scenario_dict)
    out = Path(output_dir)
    report = build_report(scenario, results, out)
    write_report_to_json(report.to_dict(), out / "report.json")
    for row in report.per_time:
        for key, metrics in row["pairs"].items():
            logger.info("【比較】t=%.4f %s：max-abs %.3e，L² %.3e", row["t"], key, metrics["max_abs"], metrics["l2"])
    if report.flags.get("unitary_limit"):
        logger.info("【總結】沒有 Lindblad 通道：unitary limit")
    logger.info("===== 收尾完成 =====")
    return report.to_dict()


def run(scenario: Scenario, dispatch: bool = False) -> Path:
    """
    執行 scenario 的所有方法並寫出報告。

    參數：
        scenario (Scenario): 已驗證的 scenario
        dispatch (bool): True 時以 Celery chord 派發，report.json 由 callback 寫出

    回傳：
        Path: 輸出目錄
    """
    out = Path(scenario.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = scenario.to_dict()
    payload["output_dir"] = str(out.resolve())

    if dispatch:
        header = [
            process_scenario_task.s(payload, method, str(out)).set(queue=TASK_QUEUE)
            for method in scenario.methods
        ]
        callback = summarize_run_task.s(payload, str(out)).set(queue=TASK_QUEUE)
        chord(header)(callback)
        logger.info("【%s】已派發 %d 個方法，完成後由 callback 寫出報告。", scenario.name, len(header))
        return out

    results = [process_scenario_task(payload, method, str(out)) for method in scenario.methods]
    summarize_run_task(results, payload, str(out))
    return out


def describe(scenario: Scenario) -> str:
    """scenario 的導出量：γ、初始中心的 t_dec、網格 Nyquist 摘要、窗函數共變異、small-chord 步數與耗時估計"""
    system = scenario.system
    grid = scenario.grid
    lines = [
        f"scenario: {scenario.name}  (sha256 {scenario_hash(scenario)[:12]})",
        f"hamiltonian: {system.hamiltonian.kind}, N = {system.n_modes}, hbar = {system.hbar:g}",
        f"channels: {len(system.channels)}, gamma = {system.gamma:.6g}",
    ]
    if system.is_unitary:
        lines.append("unitary limit: no Lindblad channels")
    if not system.hamiltonian.is_quadratic:
        lines.append("exact method unavailable (non-quadratic Hamiltonian)")

    report = centroid_decoherence(scenario, scenario.dt)
    t_dec_text = "∞" if not np.isfinite(report.t_dec) else f"{report.t_dec:.6g}"
    lines.append(f"t_dec at initial centroid {report.x}: {t_dec_text}")

    centre = grid.grid(np.zeros(grid.dims))
    chord_dims, chord_spacing = conjugate_spacing(centre)
    chord_extent = [(d - 1) / 2 * s for d, s in zip(chord_dims, chord_spacing)]
    lines.append(
        "centre grid: dims {} spacing {} half-width {}".format(
            list(grid.dims), [round(s, 6) for s in grid.spacing], list(grid.half_width)
        )
    )
    lines.append(
        "chord grid:  dims {} spacing {} extent {}".format(
            list(chord_dims), [round(s, 6) for s in chord_spacing], [round(e, 4) for e in chord_extent]
        )
    )

    if system.hamiltonian.is_quadratic:
        m_back = decoherence_matrix(system, scenario.times[0])
        window = coarse_graining_covariance(m_back, system.hbar)
        lines.append(f"window covariance at t = {scenario.times[0]:g}: {np.round(window, 6).tolist()}")
        m_window = window_matrix(m_back)
        if m_window is None:
            lines.append("window matrix: M singular, pure transport")
        else:
            lines.append(f"window matrix M': {np.round(m_window, 6).tolist()}")
        rate = chord_generator(system, wigner_to_chord(build_state(scenario.state, grid)))
        lines.append(
            f"chord generator at t = 0: max |dchi/dt| = {float(np.max(np.abs(rate.samples))):.4g}, "
            f"|dchi(0)/dt| = {abs(rate.value_at_origin()):.2e}"
        )

    step = scenario.policy.step_bound(system.gamma, report.t_dec)
    n_steps = int(np.ceil(max(scenario.times) / step - 1e-9)) if max(scenario.times) > 0 else 0
    lines.append(
        f"small-chord plan: step <= {step:.4g} ({n_steps} steps to t = {max(scenario.times):g}), "
        f"max_step = {scenario.policy.max_step:g}, dec_fraction = {scenario.policy.dec_fraction:g}"
    )

    samples = int(np.prod(grid.dims))
    estimate = 0.0
    if "smallchord" in scenario.methods:
        estimate += _SECONDS_PER_KERNEL_EVAL * samples * samples * max(n_steps, 1)
    if "exact" in scenario.methods:
        estimate += _SECONDS_PER_KERNEL_EVAL * samples * max(grid.dims) * len(scenario.times)
    if "oracle" in scenario.methods:
        estimate += _SECONDS_PER_KERNEL_EVAL * scenario.truncation**3 * 4 * max(scenario.times) / scenario.dt
    lines.append(f"methods: {', '.join(scenario.methods)}; estimated runtime ~ {estimate:.0f} s")
    return "\n".join(lines)
