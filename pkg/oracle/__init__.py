from utils.log import get_logger

logger = get_logger(__name__)

__version__ = "0.1.0"
