"""
simulator.storage
網格、密度矩陣、軌跡與報告的讀寫；所有寫入共用一把 process 內的鎖。
"""
from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from oracle.fock import DensityMatrix
from simulator import logger
from simulator.dynamics import Trajectory
from simulator.errors import ConfigError
from simulator.smallchord import DecoherenceReport
from simulator.symplectic import SPACE_TAGS, PhaseGrid, PhaseVector

PathLike = Union[str, Path]

_WRITE_LOCK = threading.Lock()
_FLOAT_LE = "<f8"


def _prepare_path(path: PathLike) -> Path:
    """[輔助函式] 建立上層目錄"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def _write_header_and_pairs(path: PathLike, header: Dict[str, Any], values: np.ndarray) -> Path:
    """[輔助函式] 一行 JSON header，接著 row-major 的 (re, im) float64 little-endian"""
    target = _prepare_path(path)
    pairs = np.empty(values.size * 2, dtype=_FLOAT_LE)
    flat = np.ascontiguousarray(values, dtype=complex).ravel()
    pairs[0::2] = flat.real
    pairs[1::2] = flat.imag
    with _WRITE_LOCK:
        with open(target, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
            fh.write(pairs.tobytes())
    return target


def _read_header_and_pairs(path: PathLike):
    """[輔助函式] 讀回 header 與複數陣列（一維）"""
    source = Path(path)
    if not source.exists():
        raise ConfigError(f"找不到檔案：{source}")
    with open(source, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype=_FLOAT_LE)
    if payload.size % 2:
        raise ConfigError(f"{source} 的資料長度不是 (re, im) 成對")
    return header, payload[0::2] + 1j * payload[1::2]


def write_grid_to_psg(grid: PhaseGrid, path: PathLike) -> Path:
    """
    將 PhaseGrid 寫成 .psg。

    parameters:
        grid (PhaseGrid): centre 或 chord 網格
        path: 輸出路徑

    returns:
        Path: 實際寫入的路徑
    """
    header = {
        "space_tag": grid.space_tag,
        "hbar": grid.hbar,
        "dims": list(grid.dims),
        "spacing": list(grid.spacing),
        "origin": grid.origin.as_array().tolist(),
    }
    target = _write_header_and_pairs(path, header, grid.samples)
    logger.info("[STORAGE] 已寫入 %s（%s，%s）", target, grid.space_tag, "x".join(map(str, grid.dims)))
    return target


def read_grid_from_psg(path: PathLike) -> PhaseGrid:
    header, values = _read_header_and_pairs(path)
    if header.get("space_tag") not in SPACE_TAGS:
        raise ConfigError(f"{path} 的 space_tag 不合法：{header.get('space_tag')!r}")
    dims = tuple(int(d) for d in header["dims"])
    if values.size != int(np.prod(dims)):
        raise ConfigError(f"{path} 的樣本數 {values.size} 與 dims {dims} 不符")
    return PhaseGrid(
        space_tag=header["space_tag"],
        origin=PhaseVector.from_array(header["origin"]),
        spacing=tuple(float(s) for s in header["spacing"]),
        dims=dims,
        hbar=float(header["hbar"]),
        samples=values.reshape(dims),
    )


def write_density_to_dm(rho: DensityMatrix, path: PathLike) -> Path:
    """密度矩陣 → .dm（header {dim, hbar}）"""
    target = _write_header_and_pairs(path, {"dim": rho.dim, "hbar": rho.hbar}, rho.entries)
    logger.info("[STORAGE] 已寫入 %s（D=%d）", target, rho.dim)
    return target


def read_density_from_dm(path: PathLike) -> DensityMatrix:
    header, values = _read_header_and_pairs(path)
    dim = int(header["dim"])
    if values.size != dim * dim:
        raise ConfigError(f"{path} 的元素數 {values.size} 與 dim={dim} 不符")
    return DensityMatrix(entries=values.reshape(dim, dim), hbar=float(header["hbar"]))


def grid_slices_frame(grid: PhaseGrid) -> pd.DataFrame:
    """通過原點、沿各座標軸的切片；欄位 axis, coordinate, value_re, value_im"""
    n = grid.n_modes
    names = [f"p{i + 1}" if n > 1 else "p" for i in range(n)] + [f"q{i + 1}" if n > 1 else "q" for i in range(n)]
    if grid.space_tag != "centre":
        names = ["xi_" + name for name in names]
    frames = []
    centre = grid.centre_index
    for axis, coordinates in enumerate(grid.axes()):
        index = list(centre)
        index[axis] = slice(None)
        line = grid.samples[tuple(index)]
        frames.append(
            pd.DataFrame(
                {
                    "axis": names[axis],
                    "coordinate": coordinates,
                    "value_re": line.real,
                    "value_im": line.imag,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def write_grid_slices_to_csv(grid: PhaseGrid, path: PathLike) -> Path:
    target = _prepare_path(path)
    frame = grid_slices_frame(grid)
    with _WRITE_LOCK:
        frame.to_csv(target, index=False)
    return target


def write_trajectory_to_csv(trajectory: Trajectory, path: PathLike) -> Path:
    target = _prepare_path(path)
    frame = trajectory.to_frame()
    with _WRITE_LOCK:
        frame.to_csv(target, index=False)
    logger.info("[STORAGE] 已寫入軌跡 %s（%d 列）", target, len(frame))
    return target


def write_decoherence_report_to_csv(report: DecoherenceReport, path: PathLike) -> Path:
    target = _prepare_path(path)
    with _WRITE_LOCK:
        report.det_M_curve.to_csv(target, index=False)
    return target


def _json_default(value: Any) -> Any:
    """[輔助函式] numpy 型別 → JSON"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"無法序列化 {type(value).__name__}")


def _finite_or_text(value: Any) -> Any:
    """[輔助函式] inf / nan 寫成字串，report.json 才是合法 JSON"""
    if isinstance(value, dict):
        return {k: _finite_or_text(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_text(v) for v in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return str(float(value))
    return value


def write_report_to_json(report: Dict[str, Any], path: PathLike) -> Path:
    target = _prepare_path(path)
    text = json.dumps(_finite_or_text(report), indent=2, ensure_ascii=False, default=_json_default)
    with _WRITE_LOCK:
        target.write_text(text + "\n", encoding="utf-8")
    logger.info("✅ 報告已寫入 %s", target)
    return target


def read_report_from_json(path: PathLike) -> Dict[str, Any]:
    source = Path(path)
    if not source.exists():
        raise ConfigError(f"找不到報告：{source}")
    return json.loads(source.read_text(encoding="utf-8"))
