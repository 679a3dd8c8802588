import logging
import os
from datetime import datetime

# === 日志配置 ===
log_dir = os.environ.get("STP_LOG_DIR", "logs")
os.makedirs(log_dir, exist_ok=True)

log_file = os.path.join(log_dir, f"{datetime.now().strftime('%Y-%m-%d')}.log")

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - [%(levelname)s] - %(message)s",
    handlers=[
        logging.FileHandler(log_file, encoding="utf-8"),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger("stp")


# === 普通日志 ===
def log_info(message):
    logger.info(message)


# === 调试日志（求解器进度等） ===
def log_debug(message):
    logger.debug(message)


# === 警告日志：结果可用但已降级 ===
def log_warning(message):
    logger.warning(message)


# === 错误日志 ===
def log_error(message):
    logger.error(message)


def set_level(level: str):
    """运行时调整日志级别，供 --verbose 使用。"""
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
