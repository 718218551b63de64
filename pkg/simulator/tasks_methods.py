"""
simulator.tasks_methods
每個方法一個 Celery task：從 scenario dict 建立初始態、依序演化到每個時間點、
檢查網格不變量後寫出 .psg 與 CSV，回傳可 JSON 化的摘要。
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from oracle.fock import (
    MasterEquation,
    chord_from_density,
    density_from_state,
    density_moments,
    density_purity,
    integrate_master,
)
from simulator import logger
from simulator.config import TOLERANCES
from simulator.errors import AccuracyError
from simulator.quadratic_exact import evolve_wigner_exact
from simulator.scenario import Scenario, scenario_from_dict
from simulator.smallchord import evolve_iterated
from simulator.states import build_state
from simulator.storage import (
    write_density_to_dm,
    write_grid_slices_to_csv,
    write_grid_to_psg,
)
from simulator.symplectic import (
    PhaseGrid,
    chord_normalization,
    chord_to_wigner,
    hermiticity_defect,
    phase_moments,
    purity,
    wigner_to_chord,
)
from simulator.worker import app


def grid_file_stem(method: str, t: float) -> str:
    """檔名主幹，例如 exact_t1.0000"""
    return f"{method}_t{t:.4f}"


def grid_diagnostics(w: PhaseGrid, normalization_tol: float) -> Dict[str, Any]:
    """
    寫檔前的不變量檢查與診斷量。

    參數：
        w (PhaseGrid): 中心網格上的 Wigner 函數
        normalization_tol (float): |(2πħ)^N χ(0) − 1| 的容許值

    回傳：
        dict: mass, min_w, purity, normalization, hermiticity, mean, cov
    """
    chi = wigner_to_chord(w)
    normalization = chord_normalization(chi)
    defect = hermiticity_defect(chi)
    if abs(normalization - 1.0) > normalization_tol:
        raise AccuracyError(
            f"normalization 不變量失敗：|(2πħ)^Nχ(0) − 1| = {abs(normalization - 1.0):.3e} > {normalization_tol:.0e}"
        )
    if defect > TOLERANCES["hermiticity"]:
        raise AccuracyError(f"hermiticity 不變量失敗：‖χ(−ξ) − χ(ξ)*‖ = {defect:.3e}")
    mean, cov = phase_moments(w)
    return {
        "mass": float(normalization.real),
        "min_w": float(np.min(w.real_values)),
        "purity": purity(chi),
        "normalization_error": float(abs(normalization - 1.0)),
        "hermiticity": defect,
        "mean": mean.tolist(),
        "cov": cov.tolist(),
    }


def _emit(method: str, t: float, w: PhaseGrid, output_dir: Path, normalization_tol: float) -> Dict[str, Any]:
    """[輔助函式] 檢查、寫出 .psg / CSV，回傳該時間點的摘要"""
    real = w.with_samples(w.real_values)
    diagnostics = grid_diagnostics(real, normalization_tol)
    stem = grid_file_stem(method, t)
    psg = write_grid_to_psg(real, output_dir / f"{stem}.psg")
    csv = write_grid_slices_to_csv(real, output_dir / f"{stem}_slices.csv")
    return {"t": float(t), "grid": str(psg), "slices": str(csv), **diagnostics}


def _summary(method: str, scenario: Scenario, records: List[Dict[str, Any]], **extra) -> Dict[str, Any]:
    logger.info("✅ [%s] %s 完成 %d 個時間點", method.upper(), scenario.name, len(records))
    return {"method": method, "scenario": scenario.name, "times": records, **extra}


def _prepare(scenario_dict: Dict[str, Any], output_dir: str):
    scenario = scenario_from_dict(scenario_dict)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return scenario, out


@app.task(name="simulator.tasks_methods.run_exact_method")
def run_exact_method(scenario_dict: Dict[str, Any], output_dir: str) -> Dict[str, Any]:
    """二次系統的封閉解，每個時間點都直接從初始態演化"""
    scenario, out = _prepare(scenario_dict, output_dir)
    w0 = build_state(scenario.state, scenario.grid)
    records = []
    for t in scenario.times:
        w_t = evolve_wigner_exact(scenario.system, w0, t)
        records.append(_emit("exact", t, w_t, out, TOLERANCES["normalization"]))
    return _summary("exact", scenario, records)


@app.task(name="simulator.tasks_methods.run_smallchord_method")
def run_smallchord_method(scenario_dict: Dict[str, Any], output_dir: str) -> Dict[str, Any]:
    """small-chord 反覆演化：從上一個時間點接續，步長依 IterationPolicy"""
    scenario, out = _prepare(scenario_dict, output_dir)
    w = build_state(scenario.state, scenario.grid)
    elapsed = 0.0
    records = []
    for t in scenario.times:
        w = evolve_iterated(scenario.system, w, t - elapsed, policy=scenario.policy, dt=scenario.dt)
        elapsed = t
        records.append(_emit("smallchord", t, w, out, TOLERANCES["normalization"]))
    return _summary("smallchord", scenario, records)


@app.task(name="simulator.tasks_methods.run_oracle_method")
def run_oracle_method(scenario_dict: Dict[str, Any], output_dir: str) -> Dict[str, Any]:
    """截斷 Fock 空間的主方程；每個時間點另存 .dm"""
    scenario, out = _prepare(scenario_dict, output_dir)
    system = scenario.system
    rho = density_from_state(scenario.state, scenario.truncation, system.hbar)
    equation = MasterEquation(system, scenario.truncation)
    elapsed = 0.0
    records = []
    for t in scenario.times:
        rho = integrate_master(system, rho, t - elapsed, dt=scenario.dt, equation=equation)
        elapsed = t
        chi = chord_from_density(rho, scenario.grid, seed=scenario.seed)
        record = _emit("oracle", t, chord_to_wigner(chi), out, TOLERANCES["oracle_wigner_mass"])
        mean, cov = density_moments(rho)
        dm = write_density_to_dm(rho, out / f"{grid_file_stem('oracle', t)}.dm")
        record.update(
            {
                "density": str(dm),
                "trace": float(rho.trace.real),
                "density_purity": density_purity(rho),
                "density_mean": mean.tolist(),
                "density_cov": cov.tolist(),
            }
        )
        if abs(rho.trace - 1.0) > TOLERANCES["oracle_trace"]:
            raise AccuracyError(f"oracle trace 偏離 1：{rho.trace.real:.12f}")
        records.append(record)
    return _summary("oracle", scenario, records, truncation=scenario.truncation)


METHOD_TASKS: Dict[str, Callable[[Dict[str, Any], str], Dict[str, Any]]] = {
    "exact": run_exact_method,
    "smallchord": run_smallchord_method,
    "oracle": run_oracle_method,
}


def method_task(method: str) -> Optional[Callable[[Dict[str, Any], str], Dict[str, Any]]]:
    return METHOD_TASKS.get(method)
