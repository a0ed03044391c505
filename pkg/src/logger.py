"""
日志记录模块

提供结构化日志配置，支持控制台（stderr）与轮转文件两种输出目标。
标准输出只用于计算结果。
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, TextIO


_LEVEL_COLORS = {
    "DEBUG": "\033[36m",     # 青色
    "INFO": "\033[32m",      # 绿色
    "WARNING": "\033[33m",   # 黄色
    "ERROR": "\033[31m",     # 红色
    "CRITICAL": "\033[35m",  # 紫色
}


class StructuredFormatter(logging.Formatter):
    """
    结构化日志格式化器

    提供包含时间戳、级别、模块、消息的结构化日志格式。
    """

    def __init__(self, use_color: bool = False):
        # 格式: 时间戳 | 级别 | 模块:行号 | 消息
        fmt = "%(asctime)s | %(levelname)-8s | %(name)s:%(lineno)d | %(message)s"
        datefmt = "%Y-%m-%d %H:%M:%S"
        super().__init__(fmt=fmt, datefmt=datefmt)
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        """
        格式化日志记录

        颜色只作用于本次输出，不修改记录本身，因此文件处理器看到的仍是原始级别名。

        Args:
            record: 日志记录对象

        Returns:
            str: 格式化后的日志字符串
        """
        color = _LEVEL_COLORS.get(record.levelname) if self.use_color else None
        if color is None:
            return super().format(record)
        original = record.levelname
        record.levelname = f"{color}{original:<8}\033[0m"
        try:
            return super().format(record)
        finally:
            record.levelname = original


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    log_dir: str = "logs",
    max_bytes: int = 10 * 1024 * 1024,  # 10 MB
    backup_count: int = 5,
    enable_console: bool = True,
    enable_color: bool = True,
    stream: Optional[TextIO] = None,
) -> None:
    """
    配置日志系统

    Args:
        log_level: 日志级别 (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: 日志文件名（可选，如果为 None 则不输出到文件）
        log_dir: 日志文件目录
        max_bytes: 单个日志文件最大字节数（用于日志轮转）
        backup_count: 保留的日志文件备份数量
        enable_console: 是否启用控制台输出
        enable_color: 是否在控制台输出中启用颜色（仅当输出流是终端时生效）
        stream: 控制台输出流，默认 sys.stderr
    """
    root_logger = logging.getLogger()
    level = getattr(logging, log_level.upper(), logging.INFO)
    root_logger.setLevel(level)

    # 清除现有的处理器（避免重复配置）
    root_logger.handlers.clear()

    if enable_console:
        stream = sys.stderr if stream is None else stream
        use_color = enable_color and hasattr(stream, "isatty") and stream.isatty()
        console_handler = logging.StreamHandler(stream)
        console_handler.setLevel(level)
        console_handler.setFormatter(StructuredFormatter(use_color=use_color))
        root_logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)

        file_handler = RotatingFileHandler(
            filename=log_path / log_file,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding="utf-8",
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(StructuredFormatter())
        root_logger.addHandler(file_handler)

    logger = logging.getLogger(__name__)
    logger.debug(f"日志系统初始化完成，级别: {log_level}")
    if log_file:
        logger.info(f"日志文件: {log_dir}/{log_file}")
