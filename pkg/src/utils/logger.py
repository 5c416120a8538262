import sys
from typing import Iterable, Optional

from loguru import logger

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{line: <4}</cyan> | <cyan>{extra[module]}</cyan> - <level>{message}</level>"
)

# 移除默认的 handler
logger.remove()

# 默认输出到 stderr，INFO 级别
logger.add(sys.stderr, level="INFO", colorize=True, format=LOG_FORMAT)


def get_logger(module_name: str):
    """获取绑定了模块名的 logger 实例"""
    return logger.bind(module=module_name)


def configure_logging(
    debug: bool = False, module_filter: Optional[Iterable[str]] = None, log_file: Optional[str] = None
) -> None:
    """
    重新配置全局日志输出。

    Args:
        debug: 为 True 时使用 DEBUG 级别。
        module_filter: 仅显示这些模块的 INFO/DEBUG 日志 (WARNING 及以上总是显示)。
        log_file: 可选的日志文件路径，文件中不做模块过滤。
    """
    base_level = "DEBUG" if debug else "INFO"
    logger.remove()

    filter_func = None
    if module_filter:
        filtered_modules = set(module_filter)
        warning_no = logger.level("WARNING").no

        def filter_logic(record):
            if record["level"].no >= warning_no:
                return True
            return record["extra"].get("module") in filtered_modules

        filter_func = filter_logic

    logger.add(sys.stderr, level=base_level, colorize=True, format=LOG_FORMAT, filter=filter_func)
    if log_file:
        logger.add(log_file, level="DEBUG", format=LOG_FORMAT, encoding="utf-8")

    if module_filter:
        get_logger("Logger").info(f"日志过滤器已激活: {sorted(set(module_filter))} ({base_level} 级别)")
    elif debug:
        get_logger("Logger").info("已启用 DEBUG 日志级别。")


__all__ = ["get_logger", "configure_logging", "LOG_FORMAT"]
