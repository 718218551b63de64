from utils.log import get_logger

# 取得名為 chord_lab 的 logger 實例
logger = get_logger("chord_lab")

__version__ = "0.1.0"
