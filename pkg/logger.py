"""
日志配置
echlab 根 logger 输出到控制台，可选写入 UTF-8 日志文件；默认级别、目录与格式取自 config.logging。
各模块通过 get_logger("echlab.<area>") 获取子 logger，消息统一经根 logger 的 handler 输出。
"""

import logging
import sys
from pathlib import Path

import config

ROOT_NAME = "echlab"

LOG_LEVELS = {name: getattr(logging, name) for name in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")}


def level_for(verbose: bool = False, quiet: bool = False) -> str:
    """命令行开关对应的级别：-v 为 DEBUG，-q 为 ERROR，否则取配置"""
    if verbose:
        return "DEBUG"
    if quiet:
        return "ERROR"
    return config.logging.level


def _is_console(handler: logging.Handler) -> bool:
    return isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler)


def setup_logger(
    name: str = ROOT_NAME,
    level: str | None = None,
    log_file: str | Path | None = None,
    log_dir: str | Path | None = None,
    format_string: str | None = None,
) -> logging.Logger:
    """
    配置并返回 logger

    重复调用只调整级别；控制台 handler 只装一个，同一路径的文件 handler 也只装一个。

    Args:
        name: logger 名称
        level: 日志级别 (DEBUG, INFO, WARNING, ERROR, CRITICAL)，默认 config.logging.level
        log_file: 日志文件名（指定时写入 log_dir 下的文件）
        log_dir: 日志目录，默认 config.logging.log_dir
        format_string: 日志格式，默认 config.logging.format_string

    Returns:
        配置好的 logger
    """
    cfg = config.logging
    log_level = LOG_LEVELS.get((level or cfg.level).upper(), logging.INFO)
    formatter = logging.Formatter(format_string or cfg.format_string, datefmt=cfg.date_format)

    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    if not any(_is_console(h) for h in logger.handlers):
        console = logging.StreamHandler(sys.stdout)
        console.setFormatter(formatter)
        logger.addHandler(console)

    if log_file:
        log_path = (Path(log_dir or cfg.log_dir) / log_file).resolve()
        known = {Path(h.baseFilename) for h in logger.handlers if isinstance(h, logging.FileHandler)}
        if log_path not in known:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_path, encoding="utf-8")
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    for handler in logger.handlers:
        handler.setLevel(log_level)
    return logger


def get_logger(name: str = ROOT_NAME) -> logging.Logger:
    """子模块使用 "echlab.xxx"，未单独配置时沿用根 logger 的 handler"""
    return logging.getLogger(name)


# 默认 logger 实例
default_logger = setup_logger()
