import logging
import os
from pathlib import Path
from logging.handlers import TimedRotatingFileHandler
from datetime import datetime

from dotenv import load_dotenv

# genenv.py 產生的 .env（可能設定 CHORD_LAB_LOG_DIR）
load_dotenv(dotenv_path=Path(__file__).resolve().parents[1] / ".env")


# log 目錄預設放在專案根目錄的 log/，可用 CHORD_LAB_LOG_DIR 改掉
LOG_DIR = Path(os.environ.get("CHORD_LAB_LOG_DIR") or Path(__file__).resolve().parent.parent / "log")


_loggers = {}

def get_logger(name: str = "chord_lab") -> logging.Logger:
    """
    取得共用 logger（同名只建立一次）。
    檔案 handler 每天午夜輪替，保留 30 份；同時輸出到 console。
    """
    if name in _loggers:
        return _loggers[name]

    logger = logging.getLogger(name)

    # 設定 log 等級為 INFO（只記錄 info 以上的訊息）
    logger.setLevel(logging.INFO)
    logger.propagate = False

    formatter = logging.Formatter("[%(asctime)s] [%(levelname)s] %(message)s", datefmt="%Y-%m-%d %H:%M:%S")

    # 清除舊 handler，避免重複
    logger.handlers.clear()

    try:
        LOG_DIR.mkdir(parents=True, exist_ok=True)
        log_file = LOG_DIR / f"{name}_{datetime.now().strftime('%Y-%m-%d')}.log"
        file_handler = TimedRotatingFileHandler(
            log_file, when="midnight", interval=1, backupCount=30, encoding="utf-8"
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except OSError:
        # 唯讀環境（例如 worker 容器）只留 console
        pass

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    _loggers[name] = logger
    return logger
