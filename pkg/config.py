# config.py
"""
统一配置管理
所有数值求解器的默认参数都集中在这里，支持环境变量覆盖（ECHLAB_*）
"""

import os
from dataclasses import dataclass
from typing import Any
from dotenv import load_dotenv

# 加载 .env 文件
load_dotenv()


def _env_int(name: str) -> int | None:
    """读取整数环境变量，非法值忽略"""
    value = os.getenv(name, '').strip()
    if value.lstrip('-').isdigit():
        return int(value)
    return None


@dataclass(frozen=True)
class RetryConfig:
    """非线性求解重试配置

    每次重试把 Newton 阻尼乘以 damping_factor，迭代预算翻倍
    """
    max_attempts: int = 3
    damping_factor: float = 0.5


@dataclass(frozen=True)
class MonodromyConfig:
    """线性化 Reeb 流 / 单值矩阵配置"""
    # RK4 步数（一个周期 2π）
    steps: int = 4096
    # 周期函数的默认采样点数
    samples: int = 256
    # |trace ∓ 2| < degeneracy_tol 视为退化
    degeneracy_tol: float = 1e-6
    # 双曲旋转数取整容差 |lift/π − k| < lift_tol
    lift_tol: float = 0.25

    def __post_init__(self):
        """从环境变量读取步数与采样数"""
        steps = _env_int('ECHLAB_STEPS')
        if steps is not None:
            object.__setattr__(self, 'steps', steps)
        samples = _env_int('ECHLAB_SAMPLES')
        if samples is not None:
            object.__setattr__(self, 'samples', samples)


@dataclass(frozen=True)
class SpectrumConfig:
    """谱与谱流配置"""
    n_modes: int = 32
    # 零特征值判定容差
    crossing_tol: float = 1e-9
    # 谱流二分细化预算
    refine_budget: int = 40
    # 同伦验证中 R mod 1 的比较容差
    rotation_tol: float = 1e-2


@dataclass(frozen=True)
class EchConfig:
    """ECH 组合数据配置"""
    # 作用量与 L 重合的容差
    action_tol: float = 1e-9
    # qR 接近整数的容差
    elliptic_tol: float = 1e-9


@dataclass(frozen=True)
class VortexGridConfig:
    """涡旋求解器网格与 Newton 配置"""
    points: int = 256
    min_half_width: float = 8.0
    margin: float = 3.0
    newton_tol: float = 1e-10
    max_newton: int = 40
    min_points_per_unit: float = 8.0
    # 外圈 |u| 的容差
    boundary_tol: float = 1e-3
    # 径向求解
    radial_r_max: float = 10.0
    radial_points: int = 1024

    # 重试配置
    retry: RetryConfig = RetryConfig()

    def __post_init__(self):
        """从环境变量读取网格点数"""
        points = _env_int('ECHLAB_GRID')
        if points is not None:
            object.__setattr__(self, 'points', points)


@dataclass(frozen=True)
class DynamicsConfig:
    """模空间哈密顿动力学配置（粗网格）"""
    # 粗网格每边点数：半宽 8 时每单位长度 8 个点以上
    points: int = 130
    fd_step: float = 1e-3
    cache_decimals: int = 6
    divergence_cap: float = 10.0
    refine_threshold: float = 1e-2
    candidate_threshold: float = 1e-3
    max_workers: int = 4

    def __post_init__(self):
        """从环境变量读取并发数"""
        workers = _env_int('ECHLAB_WORKERS')
        if workers is not None and workers > 0:
            object.__setattr__(self, 'max_workers', workers)


@dataclass(frozen=True)
class AppendixConfig:
    """附录估计（接触形式、柱面算子、收缩映射）配置"""
    n_t: int = 32
    n_xy: int = 81
    # ‖·‖★ 要求的最粗网格间距
    star_resolution: float = 0.125
    contraction_tol: float = 1e-10
    contraction_budget: int = 200


@dataclass(frozen=True)
class OutputConfig:
    """输出配置"""
    default_output_dir: str = "output"
    schema_version: int = 1
    plot_format: str = "svg"

    def __post_init__(self):
        """从环境变量读取输出目录"""
        out = os.getenv('ECHLAB_OUTPUT', '')
        if out:
            object.__setattr__(self, 'default_output_dir', out)


@dataclass(frozen=True)
class LoggingConfig:
    """日志配置"""
    level: str = "INFO"
    log_dir: str = "logs"
    format_string: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    date_format: str = "%Y-%m-%d %H:%M:%S"

    def __post_init__(self):
        """从环境变量读取日志级别"""
        level = os.getenv('ECHLAB_LOG_LEVEL', '')
        if level:
            object.__setattr__(self, 'level', level.upper())


# 全局配置实例
monodromy = MonodromyConfig()
spectrum = SpectrumConfig()
ech = EchConfig()
vortex = VortexGridConfig()
dynamics = DynamicsConfig()
appendix = AppendixConfig()
output = OutputConfig()
logging = LoggingConfig()


def validate_config() -> dict[str, Any]:
    """
    验证配置是否合法

    Returns:
        dict: {"valid": bool, "errors": list[str]}
    """
    errors = []

    if monodromy.steps < 64:
        errors.append(f"ECHLAB_STEPS 至少为 64，当前 {monodromy.steps}")
    if monodromy.samples < 8:
        errors.append(f"ECHLAB_SAMPLES 至少为 8，当前 {monodromy.samples}")
    if spectrum.n_modes < 8:
        errors.append(f"n_modes 至少为 8，当前 {spectrum.n_modes}")
    resolution = (vortex.points - 1) / (2 * vortex.min_half_width)
    if resolution < vortex.min_points_per_unit:
        errors.append(
            f"ECHLAB_GRID={vortex.points} 分辨率不足: 每单位 {resolution:.2f} 点 "
            f"(需要 ≥ {vortex.min_points_per_unit})"
        )

    # 验证输出目录
    try:
        os.makedirs(output.default_output_dir, exist_ok=True)
    except Exception as e:
        errors.append(f"无法创建输出目录: {e}")

    # 验证日志目录
    try:
        os.makedirs(logging.log_dir, exist_ok=True)
    except Exception as e:
        errors.append(f"无法创建日志目录: {e}")

    return {"valid": len(errors) == 0, "errors": errors}
