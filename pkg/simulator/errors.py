"""
simulator.errors
整個專案共用的例外階層；CLI 依類別對應結束代碼。
"""
from simulator.config import (
    EXIT_ACCURACY_ERROR,
    EXIT_CONFIG_ERROR,
    EXIT_DIVERGENCE,
    EXIT_FAILURE,
)


class ChordLabError(Exception):
    """所有模擬錯誤的基底類別"""

    exit_code: int = EXIT_FAILURE


class ConfigError(ChordLabError):
    """scenario / 參數不合法"""

    exit_code = EXIT_CONFIG_ERROR


class DimensionError(ConfigError):
    """相空間向量維度不一致"""


class GridError(ConfigError):
    """space_tag 錯誤或網格不對稱"""


class AccuracyError(ChordLabError):
    """數值結果無法保證精度"""

    exit_code = EXIT_ACCURACY_ERROR


class NumericalRankError(AccuracyError):
    """decoherence matrix 不是半正定"""


class TruncationError(AccuracyError):
    """Fock 截斷頂端的佔據數超過上限"""


class DivergenceError(ChordLabError):
    """積分過程出現非有限值"""

    exit_code = EXIT_DIVERGENCE


def exit_code_for(exc: BaseException) -> int:
    """[輔助函式] 例外 → CLI 結束代碼"""
    if isinstance(exc, ChordLabError):
        return exc.exit_code
    return EXIT_FAILURE
