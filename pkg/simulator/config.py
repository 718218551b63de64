"""
simulator.config
broker / 輸出目錄（來自 .env）與數值演化的預設值、容許誤差、結束代碼。
"""
from dotenv import load_dotenv
from pathlib import Path
from typing import Dict
import os

# genenv.py 依 local.ini 產生的 .env；沒有 .env 時使用下方預設值（docker compose 內的服務名稱）
load_dotenv(dotenv_path=Path(__file__).resolve().parents[1] / ".env")

RABBITMQ_HOST = os.environ.get("RABBITMQ_HOST", "rabbitmq")
RABBITMQ_PORT = os.environ.get("RABBITMQ_PORT", 5672)
WORKER_ACCOUNT = os.environ.get("WORKER_ACCOUNT", "worker")
WORKER_PASSWORD = os.environ.get("WORKER_PASSWORD", "worker")
REDIS_URL = os.environ.get("REDIS_URL", "redis://localhost:6379/0")

# run 的輸出根目錄（scenario 內的相對 output_dir 以此為基準）
OUTPUT_ROOT = Path(os.environ.get("CHORD_LAB_OUTPUT_ROOT", "runs"))

# ---- 相空間 / 網格 ----
DEFAULT_HBAR: float = 1.0
# 每軸取樣數一律為奇數，原點與每個鏡射點都落在網格上
DEFAULT_GRID_DIMS: int = 129
# 半寬 = 8 √ħ
DEFAULT_HALF_WIDTH_FACTOR: float = 8.0
# 邊界質量超過此值就警告（build_state 則直接報錯）
BOUNDARY_MASS_THRESHOLD: float = 1e-6
# chord 函數在網格邊界仍大於此比例 → 視為不衰減
CHORD_DECAY_THRESHOLD: float = 1e-6
# 回推的 chord 參數落在網格外，且振幅大於此值 → 精度錯誤
OUT_OF_GRID_AMPLITUDE: float = 1e-8
# 直接求和時略過的樣本（相對於最大值）
SIGNIFICANT_SAMPLE_CUTOFF: float = 1e-14

# ---- 時間積分 ----
DEFAULT_DT: float = 1e-3
# Gauss-Legendre 節點數：每單位時間 64 個，至少 64 個
GAUSS_LEGENDRE_NODES_PER_UNIT_TIME: int = 64

# ---- small-chord ----
SMALL_CHORD_RADIUS_FACTOR: float = 3.0
SMALL_CHORD_MASS_THRESHOLD: float = 1e-3
DEFAULT_MAX_STEP: float = 0.5
DEFAULT_DEC_FRACTION: float = 1.0

# ---- Fock oracle ----
DEFAULT_TRUNCATION: int = 80
# 頂端 10 個能階的佔據數上限
TRUNCATION_GUARD_LEVELS: int = 10
TRUNCATION_GUARD_POPULATION: float = 1e-8
# 建構算符時多加的能階（乘積在保留區塊內才正確）
OPERATOR_PADDING: int = 4
# 位移算符 expm 時多加的能階
DISPLACEMENT_PADDING: int = 100
# Wigner 位置積分的 s 網格
WIGNER_S_STEP: float = 0.05
SPOT_CHECK_SAMPLES: int = 10
SPOT_CHECK_TOLERANCE: float = 1e-6

# ---- CLI 結束代碼 ----
EXIT_OK: int = 0
EXIT_FAILURE: int = 1
EXIT_CONFIG_ERROR: int = 2
EXIT_ACCURACY_ERROR: int = 3
EXIT_DIVERGENCE: int = 4

# report.json 內記錄的容許誤差
TOLERANCES: Dict[str, float] = {
    "normalization": 1e-9,
    "hermiticity": 1e-9,
    "oracle_trace": 1e-10,
    "oracle_wigner_mass": 1e-6,
    "exact_vs_oracle_max_abs": 1e-3,
    "smallchord_vs_exact_max_abs": 1e-6,
    "smallchord_mass": 1e-6,
    "purity_constant": 1e-6,
}

METHODS = ("exact", "smallchord", "oracle")

# Celery 佇列名稱
TASK_QUEUE: str = "chord_lab"
