# vortex_solver.py
"""
平面涡旋方程数值解
在 ℂ 上给定零点多重集 {z_j}，求解临界耦合涡旋方程

    *F_A = −i(1 − |α|²),  ∂̄_A α = 0,  |α| ≤ 1,  ∫(1 − |α|²) = 2πn

标量化：u = log|α|² 满足 Δu = 2(e^u − 1) + 4πΣδ_{z_j}。
奇异部分 u_sing = Σ log(ρ_j²/(1+ρ_j²)) 解析地分离，Newton 只在光滑部分 w = u − u_sing 上迭代：

    Δw = 2(e^{u_sing + w} − 1) + Σ 4/(1 + ρ_j²)²

重建（相位约定 α = e^{u/2}·Π (z−z_j)/|z−z_j|）：

    α = e^{w/2}·Π (z−z_j)/√(1+ρ_j²)
    a = ½Σ (z−z_j)/(1+ρ_j²) − ½∂̄w        （∂̄_A α = ∂̄α + a·α）

正确性以直接残差为准，而不是标量化本身。
"""

import io
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.sparse.linalg import eigsh, spsolve, splu
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from config import vortex as cfg
from logger import get_logger
from temp_manager import atomic_write_json, atomic_write_text

logger = get_logger("echlab.vortex")

SQRT2 = math.sqrt(2.0)
# 1 − |α|² 的数值下限
FIELD_FLOOR = 1e-12
# 直接残差阈值
RESIDUAL_TOL = 1e-4
# 零点恰好落在网格点上时的距离平方下限
_RHO2_FLOOR = 1e-30


class VortexDomainError(ValueError):
    """配置、网格或方向不合法"""


class VortexSolveError(RuntimeError):
    """数值求解失败"""


class NewtonConvergenceError(VortexSolveError):
    """Newton 迭代在预算内未收敛"""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


# ============ 配置与网格 ============

@dataclass(frozen=True)
class VortexConfig:
    """零点多重集（重数按重复次数计）"""
    zeros: tuple[complex, ...] = ()

    def __post_init__(self):
        zeros = tuple(complex(z) for z in self.zeros)
        if not all(math.isfinite(z.real) and math.isfinite(z.imag) for z in zeros):
            raise VortexDomainError(f"零点必须有限: {zeros}")
        object.__setattr__(self, 'zeros', zeros)

    @property
    def n(self) -> int:
        return len(self.zeros)

    @property
    def centroid(self) -> complex:
        return complex(np.mean(self.zeros)) if self.zeros else 0j

    def translated(self, shift: complex) -> "VortexConfig":
        return VortexConfig(tuple(z + shift for z in self.zeros))

    def power_sums(self, q_max: int) -> list[complex]:
        """σ_q = Σ z_j^q，q = 1..q_max"""
        z = np.asarray(self.zeros, dtype=complex)
        return [complex(np.sum(z ** q)) for q in range(1, q_max + 1)]

    @classmethod
    def parse(cls, text: str) -> "VortexConfig":
        """解析 "0.5,-0.5" 或 "1,1i" 这样的零点列表（i 与 j 都可作虚数单位）"""
        tokens = [t.strip() for t in text.split(',') if t.strip()]
        try:
            return cls(tuple(complex(t.replace('i', 'j').replace(' ', '')) for t in tokens))
        except ValueError as e:
            raise VortexDomainError(f"无法解析零点列表 '{text}': {e}") from e

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "zeros": [[z.real, z.imag] for z in self.zeros]}


@dataclass(frozen=True)
class VortexGrid:
    """以 center 为中心、半宽 half_width、每边 points 个点的正方形网格"""
    center: complex
    half_width: float
    points: int

    @classmethod
    def default(cls, config: VortexConfig, points: int | None = None,
                min_half_width: float | None = None) -> "VortexGrid":
        """中心取零点质心，半宽 max(8, 3 + 2·max|z_j − c|)"""
        center = config.centroid
        spread = max((abs(z - center) for z in config.zeros), default=0.0)
        half = max(min_half_width or cfg.min_half_width, cfg.margin + 2.0 * spread)
        return cls(center, float(half), int(points or cfg.points))

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def points_per_unit(self) -> float:
        return (self.points - 1) / (2.0 * self.half_width)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    def offsets(self) -> np.ndarray:
        """相对中心的复坐标 ζ，indexing="ij"（第 0 轴为 x）"""
        x, y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return x + 1j * y

    def coords(self) -> np.ndarray:
        return self.center + self.offsets()

    def validate(self, config: VortexConfig) -> None:
        if self.points < 5:
            raise VortexDomainError(f"网格每边至少 5 个点，当前 {self.points}")
        if self.points_per_unit < cfg.min_points_per_unit:
            raise VortexDomainError(
                f"分辨率不足: 每单位 {self.points_per_unit:.2f} 点 (需要 ≥ {cfg.min_points_per_unit})"
            )
        for z in config.zeros:
            if abs(z - self.center) > 0.5 * self.half_width:
                raise VortexDomainError(
                    f"零点 {z} 离边界太近: |z − center| > half_width/2 = {0.5 * self.half_width}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": [self.center.real, self.center.imag],
            "half_width": self.half_width,
            "points": self.points,
        }


# ============ 差分算子 ============

def _laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """五点 Laplace，边界一圈置 0"""
    out = np.zeros_like(f)
    out[1:-1, 1:-1] = (
        f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2] - 4.0 * f[1:-1, 1:-1]
    ) / h ** 2
    return out


def _interior_laplacian(m: int, h: float) -> sparse.csc_matrix:
    """内部 m×m 点上的五点 Laplace（Dirichlet）"""
    d = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m))
    eye = sparse.identity(m)
    return ((sparse.kron(d, eye) + sparse.kron(eye, d)) / h ** 2).tocsc()


def _partial(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """四阶中心差分，边缘两层退化为二阶"""
    d = np.gradient(f, h, axis=axis, edge_order=2)
    g = np.moveaxis(f, axis, 0)
    out = np.moveaxis(d, axis, 0)
    out[2:-2] = (-g[4:] + 8.0 * g[3:-1] - 8.0 * g[1:-3] + g[:-4]) / (12.0 * h)
    return d


def dbar(f: np.ndarray, h: float) -> np.ndarray:
    """∂̄ = ½(∂_x + i∂_y)"""
    return 0.5 * (_partial(f, h, 0) + 1j * _partial(f, h, 1))


def dee(f: np.ndarray, h: float) -> np.ndarray:
    """∂ = ½(∂_x − i∂_y)"""
    return 0.5 * (_partial(f, h, 0) - 1j * _partial(f, h, 1))


def _retrying() -> Retrying:
    return Retrying(
        stop=stop_after_attempt(cfg.retry.max_attempts),
        retry=retry_if_exception_type(NewtonConvergenceError),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )


# ============ 径向解 ============

@dataclass(frozen=True, eq=False)
class RadialProfile:
    """α = f(r)e^{inθ} 的径向剖面"""
    n: int
    r: np.ndarray
    f: np.ndarray
    gauge: np.ndarray          # A_θ(r) = n − r f′/f
    second_moment: float       # (1/2π)∫|z|²(1 − f²)
    flux: float                # (1/2π)∫(1 − f²)
    residual: float            # [0, 0.9 r_max] 上离散方程的 sup 残差
    identity_residual: float   # sup |A_θ′/r − (1 − f²)|（差分误差量级）

    def magnitude(self, r: np.ndarray | float) -> np.ndarray:
        return np.interp(r, self.r, self.f)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "r_max": float(self.r[-1]),
            "points": int(self.r.size),
            "flux": self.flux,
            "second_moment": self.second_moment,
            "residual": self.residual,
            "identity_residual": self.identity_residual,
        }


def _newton_radial(n: int, r: np.ndarray, damping: float, budget: int, tol: float) -> tuple[np.ndarray, int]:
    P = r.size
    h = r[1] - r[0]
    base = (r ** 2 / (1.0 + r ** 2)) ** n
    source = 4.0 * n / (1.0 + r ** 2) ** 2
    W = np.zeros(P)
    W[-1] = -n * math.log(r[-1] ** 2 / (1.0 + r[-1] ** 2))

    inner = r[1:-1]
    lower = 1.0 / h ** 2 - 1.0 / (2.0 * inner * h)
    upper = np.concatenate(([4.0 / h ** 2], 1.0 / h ** 2 + 1.0 / (2.0 * inner[:-1] * h)))
    main = np.full(P - 1, -2.0 / h ** 2)
    main[0] = -4.0 / h ** 2
    lap = sparse.diags([lower, main, upper], [-1, 0, 1], shape=(P - 1, P - 1), format="csc")

    def residual(W):
        out = np.empty(P - 1)
        out[0] = 4.0 * (W[1] - W[0]) / h ** 2
        out[1:] = (W[2:] - 2.0 * W[1:-1] + W[:-2]) / h ** 2 + (W[2:] - W[:-2]) / (2.0 * inner * h)
        eu = base * np.exp(np.minimum(W, 50.0))
        return out - 2.0 * (eu[:-1] - 1.0) - source[:-1], eu

    F, eu = residual(W)
    norm = float(np.max(np.abs(F)))
    for it in range(budget + 1):
        if norm < tol:
            return W, it
        if it == budget:
            break
        J = lap - sparse.diags(2.0 * eu[:-1], format="csc")
        delta = spsolve(J, -F)
        step = damping
        while True:
            trial = W.copy()
            trial[:-1] += step * delta
            F_t, eu_t = residual(trial)
            norm_t = float(np.max(np.abs(F_t)))
            if norm_t < (1.0 - 1e-4 * step) * norm or step < 1e-6:
                break
            step *= 0.5
        W, F, eu, norm = trial, F_t, eu_t, norm_t
        logger.debug(f"径向 Newton 第 {it + 1} 步: 残差 {norm:.3e}, 步长 {step:.3g}")
    raise NewtonConvergenceError(f"径向 Newton 未收敛: {budget} 步后残差 {norm:.3e}", budget, norm)


def solve_radial(n: int, r_max: float | None = None, points: int | None = None) -> RadialProfile:
    """
    求解径向约化方程，返回 α = f(r)e^{inθ} 的剖面

    u = n·log(r²/(1+r²)) + w，w′(0) = 0，u(r_max) = 0

    Raises:
        VortexDomainError: 参数不合法或 r_max 太小（通量亏损 > 2%）
        NewtonConvergenceError: 重试后仍不收敛
    """
    r_max = float(r_max if r_max is not None else cfg.radial_r_max)
    points = int(points if points is not None else cfg.radial_points)
    if n < 0:
        raise VortexDomainError(f"涡旋数必须非负，当前 {n}")
    if r_max < 8.0 or points < 512:
        raise VortexDomainError(f"需要 r_max ≥ 8 且 points ≥ 512，当前 r_max={r_max}, points={points}")

    r = np.linspace(0.0, r_max, points)
    h = r[1] - r[0]
    for attempt in _retrying():
        with attempt:
            k = attempt.retry_state.attempt_number
            W, iterations = _newton_radial(
                n, r, cfg.retry.damping_factor ** (k - 1), cfg.max_newton * 2 ** (k - 1), cfg.newton_tol
            )

    f = r ** n / (1.0 + r ** 2) ** (n / 2.0) * np.exp(W / 2.0)
    rho = 1.0 - f ** 2
    flux_value = float(trapezoid(r * rho, r))
    second = float(trapezoid(r ** 3 * rho, r))
    if n > 0 and abs(flux_value - n) > 0.02 * n:
        raise VortexDomainError(f"r_max={r_max} 太小: 通量 {flux_value:.4f} 与 {n} 相差超过 2%")

    # A_θ = n·r²/(1+r²) − r·w′/2
    dW = np.gradient(W, h, edge_order=2)
    gauge = n * r ** 2 / (1.0 + r ** 2) - 0.5 * r * dW
    window = (r > 0) & (r <= 0.9 * r_max)
    identity = np.gradient(gauge, h, edge_order=2)[window] / r[window] - rho[window]

    # 同一离散算子下的方程残差
    eu = f ** 2
    lap = np.empty_like(W)
    lap[0] = 4.0 * (W[1] - W[0]) / h ** 2
    lap[1:-1] = (W[2:] - 2.0 * W[1:-1] + W[:-2]) / h ** 2 + (W[2:] - W[:-2]) / (2.0 * r[1:-1] * h)
    lap[-1] = 0.0
    eq = lap - 2.0 * (eu - 1.0) - 4.0 * n / (1.0 + r ** 2) ** 2
    residual = float(np.max(np.abs(eq[r <= 0.9 * r_max])))

    if np.any(np.diff(f) < -1e-9):
        logger.warning(f"n={n} 的径向剖面不单调")
    logger.info(f"径向涡旋 n={n}: 通量 {flux_value:.6f}, 二阶矩 {second:.6f}, {iterations} 次迭代")
    return RadialProfile(n, r, f, gauge, second, flux_value, residual, float(np.max(np.abs(identity))))


# ============ 平面解 ============

@dataclass(frozen=True)
class ResidualReport:
    """涡旋方程前两条的直接残差（距零点两格以外的内部点）"""
    curvature_sup: float
    curvature_l2: float
    dbar_sup: float
    dbar_l2: float
    newton_residual: float
    max_abs_alpha: float
    max_u: float
    boundary_u: float
    effective_radius: float

    @property
    def ok(self) -> bool:
        return (
            self.curvature_sup <= RESIDUAL_TOL
            and self.dbar_sup <= RESIDUAL_TOL
            and self.max_abs_alpha <= 1.0 + 1e-6
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "curvature_sup": self.curvature_sup,
            "curvature_l2": self.curvature_l2,
            "dbar_sup": self.dbar_sup,
            "dbar_l2": self.dbar_l2,
            "newton_residual": self.newton_residual,
            "max_abs_alpha": self.max_abs_alpha,
            "max_u": self.max_u,
            "boundary_u": self.boundary_u,
            "effective_radius": self.effective_radius,
            "ok": self.ok,
        }


@dataclass(frozen=True, eq=False)
class VortexSolution:
    config: VortexConfig
    grid: VortexGrid
    u: np.ndarray
    w: np.ndarray
    alpha: np.ndarray
    a_conn: np.ndarray
    flux: float
    residual_report: ResidualReport
    iterations: int
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def rho(self) -> np.ndarray:
        """1 − |α|²"""
        return 1.0 - np.exp(self.u)

    def local_zeros(self) -> np.ndarray:
        return np.asarray(self.config.zeros, dtype=complex) - self.grid.center

    def zero_distance(self) -> np.ndarray:
        """每个网格点到最近零点的距离（无零点时为 +inf）"""
        zeta = self.grid.offsets()
        if self.config.n == 0:
            return np.full(zeta.shape, np.inf)
        return np.min(np.abs(zeta[..., None] - self.local_zeros()), axis=-1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "grid": self.grid.to_dict(),
            "flux": self.flux,
            "iterations": self.iterations,
            "residuals": self.residual_report.to_dict(),
        }


def _singular_parts(zeta: np.ndarray, zeros: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """u_sing、源项 Σ4/(1+ρ²)²、α 的有理因子和 a 的解析部分"""
    u_sing = np.zeros(zeta.shape)
    source = np.zeros(zeta.shape)
    factor = np.ones(zeta.shape, dtype=complex)
    a_part = np.zeros(zeta.shape, dtype=complex)
    for zj in zeros:
        d = zeta - zj
        rho2 = np.maximum(np.abs(d) ** 2, _RHO2_FLOOR)
        u_sing += np.log(rho2 / (1.0 + rho2))
        source += 4.0 / (1.0 + rho2) ** 2
        factor *= d / np.sqrt(1.0 + rho2)
        a_part += 0.5 * d / (1.0 + rho2)
    return u_sing, source, factor, a_part


def _newton_planar(u_sing, source, w_init, h, damping, budget, tol) -> tuple[np.ndarray, int, float]:
    m = w_init.shape[0] - 2
    lap = _interior_laplacian(m, h)

    def residual(W):
        eu = np.exp(np.minimum(u_sing + W, 50.0))
        F = (_laplacian(W, h) - 2.0 * (eu - 1.0) - source)[1:-1, 1:-1].ravel()
        return F, eu

    W = w_init.copy()
    F, eu = residual(W)
    norm = float(np.max(np.abs(F)))
    for it in range(budget + 1):
        if norm < tol:
            return W, it, norm
        if it == budget:
            break
        J = lap - sparse.diags(2.0 * eu[1:-1, 1:-1].ravel(), format="csc")
        delta = spsolve(J, -F).reshape(m, m)
        step = damping
        while True:
            trial = W.copy()
            trial[1:-1, 1:-1] += step * delta
            F_t, eu_t = residual(trial)
            norm_t = float(np.max(np.abs(F_t)))
            if norm_t < (1.0 - 1e-4 * step) * norm or step < 1e-6:
                break
            step *= 0.5
        W, F, eu, norm = trial, F_t, eu_t, norm_t
        logger.debug(f"Newton 第 {it + 1} 步: 残差 {norm:.3e}, 步长 {step:.3g}")
    raise NewtonConvergenceError(f"Newton 未收敛: {budget} 步后残差 {norm:.3e}", budget, norm)


def _residual_fields(zeta, zeros, w, u, alpha, a_conn, h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """*F_A + i(1−|α|²) 与 ∂̄_A α 的逐点残差，以及排除边缘和零点附近的掩码

    *F_A = −4i·Re(∂a)，其中 ∂∂̄ 复合取紧致五点模板 ¼Δ_h
    """
    _, source, _, _ = _singular_parts(zeta, zeros)
    four_re_da = 0.5 * source - 0.5 * _laplacian(w, h)
    curvature = np.abs((1.0 - np.exp(u)) - four_re_da)
    dbar_res = np.abs(dbar(alpha, h) + a_conn * alpha)

    mask = np.zeros(zeta.shape, dtype=bool)
    mask[2:-2, 2:-2] = True
    for zj in zeros:
        mask &= np.abs(zeta - zj) > 2.0 * h
    return curvature, dbar_res, mask


def _direct_residuals(zeta, zeros, w, u, alpha, a_conn, h) -> tuple[float, float, float, float]:
    """sup/L² 残差"""
    curvature, dbar_res, mask = _residual_fields(zeta, zeros, w, u, alpha, a_conn, h)
    if not mask.any():
        return 0.0, 0.0, 0.0, 0.0
    curv, dres = curvature[mask], dbar_res[mask]
    return (
        float(curv.max()),
        float(math.sqrt(np.sum(curv ** 2) * h ** 2)),
        float(dres.max()),
        float(math.sqrt(np.sum(dres ** 2) * h ** 2)),
    )


def solve_planar(config: VortexConfig, grid: VortexGrid | None = None, strict: bool = True) -> VortexSolution:
    """
    求解给定零点的平面涡旋

    Args:
        config: 零点多重集
        grid: 网格（缺省按零点质心和默认半宽规则生成）
        strict: 直接残差超标时抛错；粗网格扫描时传 False 只记警告

    Returns:
        VortexSolution，其 residual_report 为直接残差检查

    Raises:
        VortexDomainError: 零点离边界太近或分辨率不足
        NewtonConvergenceError: 重试后仍不收敛
        VortexSolveError: 直接残差超过阈值
    """
    grid = grid or VortexGrid.default(config)
    grid.validate(config)
    h = grid.h
    zeta = grid.offsets()
    zeros = np.asarray(config.zeros, dtype=complex) - grid.center
    u_sing, source, factor, a_part = _singular_parts(zeta, zeros)

    # 边界上 u = 0
    w_init = np.zeros(zeta.shape)
    for edge in (np.s_[0, :], np.s_[-1, :], np.s_[:, 0], np.s_[:, -1]):
        w_init[edge] = -u_sing[edge]

    for attempt in _retrying():
        with attempt:
            k = attempt.retry_state.attempt_number
            w, iterations, newton_res = _newton_planar(
                u_sing, source, w_init, h,
                cfg.retry.damping_factor ** (k - 1), cfg.max_newton * 2 ** (k - 1), cfg.newton_tol,
            )

    u = u_sing + w
    alpha = np.exp(w / 2.0) * factor
    a_conn = a_part - 0.5 * dbar(w, h)
    rho = 1.0 - np.exp(u)
    flux_value = float(np.sum(rho) * h ** 2 / (2.0 * math.pi))

    curv_sup, curv_l2, dbar_sup, dbar_l2 = _direct_residuals(zeta, zeros, w, u, alpha, a_conn, h)
    ring = np.concatenate([u[1, 1:-1], u[-2, 1:-1], u[1:-1, 1], u[1:-1, -2]])
    spread = float(np.max(np.abs(zeros))) if zeros.size else 0.0
    report = ResidualReport(
        curvature_sup=curv_sup,
        curvature_l2=curv_l2,
        dbar_sup=dbar_sup,
        dbar_l2=dbar_l2,
        newton_residual=newton_res,
        max_abs_alpha=float(np.max(np.abs(alpha))),
        max_u=float(np.max(u)),
        boundary_u=float(np.max(np.abs(ring))),
        effective_radius=grid.half_width - spread,
    )
    if report.boundary_u > cfg.boundary_tol:
        logger.warning(f"外圈 |u| = {report.boundary_u:.2e} 超过 {cfg.boundary_tol}，网格半宽可能不足")
    if not report.ok:
        message = (
            f"直接残差超过阈值 (curvature {curv_sup:.2e}, dbar {dbar_sup:.2e}, "
            f"max|α| {report.max_abs_alpha:.8f})，请提高分辨率"
        )
        if strict:
            raise VortexSolveError(message)
        logger.debug(message)

    logger.info(
        f"涡旋 n={config.n}: 通量 {flux_value:.6f}, {iterations} 次 Newton, "
        f"残差 curvature {curv_sup:.2e} / dbar {dbar_sup:.2e}"
    )
    return VortexSolution(config, grid, u, w, alpha, a_conn, flux_value, report, iterations)


# ============ 导出量 ============

def residual_map(sol: VortexSolution) -> np.ndarray:
    """曲率方程的逐点残差；网格边缘两层和零点 2h 邻域内置 0"""
    zeta = sol.grid.offsets()
    zeros = np.asarray(sol.config.zeros, dtype=complex) - sol.grid.center
    curvature, _, mask = _residual_fields(zeta, zeros, sol.w, sol.u, sol.alpha, sol.a_conn, sol.grid.h)
    return np.where(mask, curvature, 0.0)


def flux(sol: VortexSolution) -> float:
    """(1/2π)∫(1 − |α|²)"""
    return sol.flux


def moments(sol: VortexSolution, q_max: int) -> list[complex]:
    """(1/2π)∫ z^q (1 − |α|²)，q = 1..q_max

    精度随 q 下降，可参考 residual_report.effective_radius
    """
    if q_max < 1:
        raise VortexDomainError(f"q_max 至少为 1，当前 {q_max}")
    z = sol.grid.coords()
    weight = sol.rho * sol.grid.h ** 2 / (2.0 * math.pi)
    return [complex(np.sum(z ** q * weight)) for q in range(1, q_max + 1)]


def decay_fit(sol: VortexSolution, r_lo: float, r_hi: float) -> float:
    """
    拟合远场衰减指数

    对 log(√r·(1 − |α|²)) 关于到质心距离 r 做最小二乘直线拟合，返回 −斜率

    Raises:
        VortexDomainError: 窗口越界或窗口内场低于数值下限
    """
    if not 0 < r_lo < r_hi:
        raise VortexDomainError(f"拟合窗口不合法: [{r_lo}, {r_hi}]")
    if r_hi >= sol.grid.half_width:
        raise VortexDomainError(f"r_hi={r_hi} 超出网格半宽 {sol.grid.half_width}")
    r = np.abs(sol.grid.coords() - sol.config.centroid)
    window = (r >= r_lo) & (r <= r_hi)
    values = sol.rho[window]
    if values.size < 2 or np.min(values) <= FIELD_FLOOR:
        raise VortexDomainError(f"窗口 [{r_lo}, {r_hi}] 内 1 − |α|² 低于数值下限 {FIELD_FLOOR}")
    rs = r[window]
    slope, _ = np.polyfit(rs, np.log(np.sqrt(rs) * values), 1)
    return float(-slope)


def hamiltonian(sol: VortexSolution, nu: float, mu: complex) -> float:
    """ĥ = (1/4π)∫(2ν|z|² + μz̄² + μ̄z²)(1 − |α|²)"""
    z = sol.grid.coords()
    density = 2.0 * nu * np.abs(z) ** 2 + 2.0 * np.real(np.conj(mu) * z ** 2)
    return float(np.sum(density * sol.rho) * sol.grid.h ** 2 / (4.0 * math.pi))


# ============ 切方程 ============

@dataclass(frozen=True)
class TangentDirection:
    """零点多项式 p = Π(z − z_j) 的一阶变化 δp（系数低次在前，次数 < n）"""
    delta_p: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, 'delta_p', tuple(complex(c) for c in self.delta_p))

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.delta_p)

    def __add__(self, other: "TangentDirection") -> "TangentDirection":
        size = max(len(self.delta_p), len(other.delta_p))
        a = np.pad(np.asarray(self.delta_p, complex), (0, size - len(self.delta_p)))
        b = np.pad(np.asarray(other.delta_p, complex), (0, size - len(other.delta_p)))
        return TangentDirection(tuple(a + b))

    def scaled(self, factor: complex) -> "TangentDirection":
        return TangentDirection(tuple(factor * c for c in self.delta_p))

    @classmethod
    def zero(cls, config: VortexConfig) -> "TangentDirection":
        return cls((0j,) * config.n)

    @classmethod
    def from_zero_motion(cls, config: VortexConfig, dz: Sequence[complex]) -> "TangentDirection":
        """零点速度 dz_j 对应 δp = −Σ dz_j·Π_{k≠j}(z − z_k)"""
        if len(dz) != config.n:
            raise VortexDomainError(f"方向长度 {len(dz)} 与零点数 {config.n} 不一致")
        coeffs = np.zeros(config.n, dtype=complex)
        for j, v in enumerate(dz):
            others = config.zeros[:j] + config.zeros[j + 1:]
            coeffs -= complex(v) * np.poly(others)[::-1] if others else complex(v)
        return cls(tuple(coeffs))

    @classmethod
    def from_moment_motion(cls, config: VortexConfig, dsigma: Sequence[complex]) -> "TangentDirection":
        """幂和坐标的变化 dσ_q (q = 1..n) 经 Newton 恒等式线性化得到 δp

        在重合零点处仍然有定义
        """
        m = config.n
        if len(dsigma) != m:
            raise VortexDomainError(f"方向长度 {len(dsigma)} 与零点数 {m} 不一致")
        sigma = config.power_sums(m)
        e = [1.0 + 0j]
        de = [0j]
        for k in range(1, m + 1):
            ek = sum((-1) ** (i - 1) * e[k - i] * sigma[i - 1] for i in range(1, k + 1)) / k
            dek = sum(
                (-1) ** (i - 1) * (de[k - i] * sigma[i - 1] + e[k - i] * complex(dsigma[i - 1]))
                for i in range(1, k + 1)
            ) / k
            e.append(ek)
            de.append(dek)
        coeffs = np.zeros(m, dtype=complex)
        for k in range(1, m + 1):
            coeffs[m - k] = (-1) ** k * de[k]
        return cls(tuple(coeffs))

    @classmethod
    def translation(cls, config: VortexConfig, shift: complex = 1.0) -> "TangentDirection":
        return cls.from_zero_motion(config, [shift] * config.n)

    @classmethod
    def rotation(cls, config: VortexConfig) -> "TangentDirection":
        """绕质心的无穷小旋转 dz_j = i(z_j − c)"""
        c = config.centroid
        return cls.from_zero_motion(config, [1j * (z - c) for z in config.zeros])


@dataclass(frozen=True, eq=False)
class TangentPair:
    """切方程的解 (x, ι)"""
    x: np.ndarray
    iota: np.ndarray
    l2_norm: float
    metric_norm: float
    residual: float  # 相对 sup 残差
    h: float

    def inner(self, other: "TangentPair") -> complex:
        """度量内积 π^{−1}∫(x̄₁x₂ + ῑ₁ι₂)"""
        total = np.sum(np.conj(self.x) * other.x + np.conj(self.iota) * other.iota)
        return complex(total * self.h ** 2 / math.pi)


def _tangent_factor(sol: VortexSolution):
    """(−Δ_h/2 + e^u) 的 LU 分解，按解缓存"""
    with sol._lock:
        lu = sol._cache.get("tangent_lu")
        if lu is None:
            m = sol.grid.points - 2
            A = -0.5 * _interior_laplacian(m, sol.grid.h) + sparse.diags(
                np.exp(sol.u[1:-1, 1:-1]).ravel(), format="csc"
            )
            lu = splu(A.tocsc())
            sol._cache["tangent_lu"] = lu
        return lu


def tangent_solve(sol: VortexSolution, direction: TangentDirection, strict: bool = True) -> TangentPair:
    """
    求解切方程 ∂x + 2^{−1/2}ᾱι = 0, ∂̄_A ι + 2^{−1/2}αx = 0

    取复规范变换 φ 使 α_ε = e^{v+εφ}(p + εδp)，其中 α = e^v·p：
        (−Δ/2 + e^u)φ = −e^{2v}·p̄·δp，边界 φ = −δp/p
        x = −√2·∂̄φ，ι = e^v(pφ + δp)
    第二式自动成立，第一式即上面的椭圆方程。

    strict=False 时残差超限只记 DEBUG（Gram 矩阵批量求解用，残差仍写入返回值）。

    Raises:
        VortexDomainError: 方向与零点数不一致
    """
    config, grid = sol.config, sol.grid
    if len(direction.delta_p) > max(config.n, 1) or (config.n == 0 and not direction.is_zero):
        raise VortexDomainError(f"方向 δp 的次数必须小于零点数 {config.n}")
    shape = sol.u.shape
    if direction.is_zero:
        zero = np.zeros(shape, dtype=complex)
        return TangentPair(zero, zero.copy(), 0.0, 0.0, 0.0, grid.h)

    h = grid.h
    z = grid.coords()
    p = np.polyval(np.poly(config.zeros), z) if config.n else np.ones(shape, complex)
    dp = np.polynomial.polynomial.polyval(z, np.asarray(direction.delta_p, complex))
    # e^v = e^{w/2}/Π√(1+ρ²)，使 α = e^v·p
    zeta = grid.offsets()
    ev = np.exp(sol.w / 2.0)
    for zj in sol.local_zeros():
        ev = ev / np.sqrt(1.0 + np.abs(zeta - zj) ** 2)
    rhs_full = -(ev ** 2) * np.conj(p) * dp

    phi = np.zeros(shape, dtype=complex)
    boundary = np.ones(shape, dtype=bool)
    boundary[1:-1, 1:-1] = False
    phi[boundary] = -dp[boundary] / p[boundary]

    # 边界值移到右端
    rhs = rhs_full[1:-1, 1:-1].copy()
    rhs[0, :] += 0.5 * phi[0, 1:-1] / h ** 2
    rhs[-1, :] += 0.5 * phi[-1, 1:-1] / h ** 2
    rhs[:, 0] += 0.5 * phi[1:-1, 0] / h ** 2
    rhs[:, -1] += 0.5 * phi[1:-1, -1] / h ** 2

    lu = _tangent_factor(sol)
    b = rhs.ravel()
    interior = lu.solve(b.real) + 1j * lu.solve(b.imag)
    phi[1:-1, 1:-1] = interior.reshape(shape[0] - 2, shape[1] - 2)

    x = -SQRT2 * dbar(phi, h)
    iota = ev * (p * phi + dp)

    # 第一式用紧致模板 ∂∂̄ = ¼Δ_h，第二式用四阶差分
    res1 = -SQRT2 * 0.25 * _laplacian(phi, h) + np.conj(sol.alpha) * iota / SQRT2
    res2 = dbar(iota, h) + sol.a_conn * iota + sol.alpha * x / SQRT2
    scale = max(float(np.max(np.abs(x))), float(np.max(np.abs(iota))), 1e-300)
    inner = np.s_[2:-2, 2:-2]
    residual = max(float(np.max(np.abs(res1[inner]))), float(np.max(np.abs(res2[inner])))) / scale

    l2 = math.sqrt(float(np.sum(np.abs(x) ** 2 + np.abs(iota) ** 2)) * h ** 2)
    metric = l2 / math.sqrt(math.pi)
    if residual > RESIDUAL_TOL:
        report = logger.warning if strict else logger.debug
        report(f"切方程相对残差 {residual:.2e} 超过 {RESIDUAL_TOL}")
    logger.debug(f"切方程: L² 范数 {l2:.6f}, 度量范数 {metric:.6f}, 相对残差 {residual:.2e}")
    return TangentPair(x, iota, l2, metric, residual, h)


# ============ 补充检查 ============

def gradient_energy_bound(sol: VortexSolution, r_min: float = 3.0) -> float:
    """sup_{dist ≥ r_min} |∇_A α|²·e^{√2·dist}

    ∂̄_A α = 0 时 |∇_A α|² = 2|∂_A α|²，∂_A α = ∂α − ā·α
    """
    if sol.config.n == 0:
        return 0.0
    h = sol.grid.h
    d_alpha = dee(sol.alpha, h) - np.conj(sol.a_conn) * sol.alpha
    dist = sol.zero_distance()
    mask = np.zeros(dist.shape, dtype=bool)
    mask[2:-2, 2:-2] = True
    mask &= dist >= r_min
    if not mask.any():
        raise VortexDomainError(f"网格内没有距零点 ≥ {r_min} 的点")
    values = 2.0 * np.abs(d_alpha[mask]) ** 2 * np.exp(SQRT2 * dist[mask])
    return float(values.max())


def linearized_kernel_check(sol: VortexSolution) -> float:
    """线性化标量算子 −Δ + 2e^u 的最小特征值（为正即非退化）"""
    m = sol.grid.points - 2
    A = -_interior_laplacian(m, sol.grid.h) + sparse.diags(
        2.0 * np.exp(sol.u[1:-1, 1:-1]).ravel(), format="csc"
    )
    value = float(eigsh(A, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0])
    logger.info(f"线性化算子最小特征值: {value:.6f}")
    return value


def export_solution(sol: VortexSolution, directory: Path | str, stem: str = "vortex") -> tuple[Path, Path]:
    """导出 CSV 网格 (x, y, u, abs_alpha) 与 JSON 头"""
    out = Path(directory)
    z = sol.grid.coords()
    table = np.column_stack([z.real.ravel(), z.imag.ravel(), sol.u.ravel(), np.abs(sol.alpha).ravel()])
    buffer = io.StringIO()
    np.savetxt(buffer, table, delimiter=",", header="x,y,u,abs_alpha", comments="", fmt="%.12e")
    csv_path = atomic_write_text(out / f"{stem}.csv", buffer.getvalue(), identifier="vortex")
    json_path = atomic_write_json(out / f"{stem}.json", sol.to_dict(), identifier="vortex")
    logger.info(f"涡旋解已导出: {csv_path}, {json_path}")
    return csv_path, json_path
