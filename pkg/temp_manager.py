# temp_manager.py
"""
临时目录与原子写入
报告、CSV、SVG 先写入输出目录下的 _temp_* 临时目录，再通过 os.replace 移动到位，
读者永远看不到写了一半的文件。启动时清理上次异常退出遗留的旧临时目录。
"""

import os
import json
import time
import shutil
import atexit
import itertools
import threading
import contextlib
from pathlib import Path
from typing import Any, Generator
from logger import get_logger

logger = get_logger("echlab.temp")

# 临时目录前缀
TEMP_PREFIX = "_temp_"

# 已创建、尚未清理的临时目录
_temp_dirs: set[Path] = set()
_lock = threading.Lock()
_counter = itertools.count()


def get_temp_dir_path(identifier: str = "") -> Path:
    """
    生成临时目录名：前缀 + 标识符 + 时间戳 + 进程号 + 序号

    同一秒内、多个线程并发写报告也不会重名
    """
    stamp = f"{int(time.time())}_{os.getpid()}_{next(_counter)}"
    if identifier:
        return Path(f"{TEMP_PREFIX}{identifier}_{stamp}")
    return Path(f"{TEMP_PREFIX}{stamp}")


def cleanup_temp_dir(temp_dir: Path) -> None:
    """删除临时目录并停止跟踪；失败只记录警告"""
    try:
        if temp_dir.exists():
            shutil.rmtree(temp_dir)
            logger.debug(f"已清理临时目录: {temp_dir}")
    except OSError as e:
        logger.warning(f"清理临时目录失败 {temp_dir}: {e}")
    with _lock:
        _temp_dirs.discard(temp_dir)


def cleanup_all_temp_dirs() -> None:
    """程序退出时清理所有仍在跟踪的临时目录"""
    with _lock:
        pending = list(_temp_dirs)
    if pending:
        logger.info(f"程序退出，清理 {len(pending)} 个临时目录...")
    for temp_dir in pending:
        cleanup_temp_dir(temp_dir)


def cleanup_old_temp_dirs(base_dir: Path, max_age_hours: int = 24) -> int:
    """
    清理 base_dir 下超过 max_age_hours 的 _temp_* 目录

    Returns:
        清理的目录数量
    """
    if not base_dir.exists():
        return 0
    cutoff = time.time() - max_age_hours * 3600
    cleaned = 0
    for item in base_dir.iterdir():
        if not (item.is_dir() and item.name.startswith(TEMP_PREFIX)):
            continue
        age_hours = (time.time() - item.stat().st_mtime) / 3600
        if item.stat().st_mtime < cutoff:
            try:
                shutil.rmtree(item)
                logger.info(f"清理旧临时目录: {item.name} ({age_hours:.1f} 小时前)")
                cleaned += 1
            except OSError as e:
                logger.warning(f"清理旧临时目录失败 {item.name}: {e}")
    return cleaned


@contextlib.contextmanager
def temporary_directory(identifier: str = "", base_dir: Path | None = None) -> Generator[Path, None, None]:
    """
    临时目录上下文管理器，退出（包括异常退出）时删除

    Example:
        with temporary_directory("report", out_dir) as tmp:
            (tmp / "x.json").write_text("{}")
    """
    base = base_dir or Path.cwd()
    temp_dir = base / get_temp_dir_path(identifier)
    temp_dir.mkdir(parents=True, exist_ok=False)
    with _lock:
        _temp_dirs.add(temp_dir)
    logger.debug(f"创建临时目录: {temp_dir}")
    try:
        yield temp_dir
    finally:
        cleanup_temp_dir(temp_dir)


def atomic_write_text(path: Path | str, content: str, identifier: str = "write") -> Path:
    """
    原子写入文本文件

    临时目录建在目标文件所在目录，保证 os.replace 不跨文件系统
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with temporary_directory(identifier, base_dir=target.parent) as temp_dir:
        staged = temp_dir / target.name
        staged.write_text(content, encoding="utf-8")
        os.replace(staged, target)
    logger.debug(f"已写入: {target}")
    return target


def atomic_write_json(path: Path | str, data: Any, identifier: str = "report") -> Path:
    """原子写入 JSON；键排序，相同数据得到相同字节"""
    content = json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    return atomic_write_text(path, content, identifier)


def atomic_write_bytes(path: Path | str, data: bytes, identifier: str = "blob") -> Path:
    """原子写入二进制文件（SVG 等）"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with temporary_directory(identifier, base_dir=target.parent) as temp_dir:
        staged = temp_dir / target.name
        staged.write_bytes(data)
        os.replace(staged, target)
    return target


atexit.register(cleanup_all_temp_dirs)


def initialize_cleanup(base_dir: Path | None = None, max_age_hours: int = 24) -> None:
    """启动时清理旧临时目录"""
    base = base_dir or Path.cwd()
    cleaned = cleanup_old_temp_dirs(base, max_age_hours)
    if cleaned > 0:
        logger.info(f"启动时清理了 {cleaned} 个旧临时目录")
