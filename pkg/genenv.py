"""
依 local.ini 產生 .env：
    ENV=DOCKER python genenv.py
沒有指定 ENV 時依序找 hostname 對應的 section、再退回 DEV。
simulator.config 會用 python-dotenv 讀這個 .env。
"""
import os
import socket
from configparser import ConfigParser
from pathlib import Path

HOME_PATH = Path(__file__).resolve().parent
HOST_NAME = socket.gethostname()


def pick_section(config: ConfigParser) -> str:
    """ENV 環境變數 > hostname > DEV"""
    wanted = os.environ.get("ENV", "")
    if wanted:
        if wanted not in config:
            raise SystemExit(f"local.ini 沒有 [{wanted}] section")
        return wanted
    if HOST_NAME in config:
        return HOST_NAME
    return "DEV"


def render_env(ini_path: Path = HOME_PATH / "local.ini") -> str:
    config = ConfigParser()
    config.optionxform = str  # 保留大寫鍵名
    config.read(ini_path, encoding="utf8")
    section = config[pick_section(config)]
    return "".join(f"{key.upper()}={value}\n" for key, value in section.items())


if __name__ == "__main__":
    target = HOME_PATH / ".env"
    target.write_text(render_env(), encoding="utf8")
    print(f"已寫入 {target}")
