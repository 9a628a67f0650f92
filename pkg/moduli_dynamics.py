# moduli_dynamics.py
"""
涡旋模空间上的哈密顿动力学
点 c ∈ 𝔠_m 用幂和坐标 σ_q = Σ z_j^q (q = 1..m) 表示，流方程

    ½c′ + ∇^{(1,0)}ĥ|_c = 0,   ∇^{(1,0)}ĥ = −i·G⁻¹·∂ĥ/∂σ̄

其中 ĥ 由 vortex_solver.hamiltonian 给出，G 为由切方程范数估计的 Gram 矩阵。
G = 1 时退化为 z′ = 2i(νz + μz̄)。
"""

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Any, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares
from tqdm import tqdm

from config import dynamics as cfg
from config import vortex as vortex_cfg
from logger import get_logger
from reeb_linops import PeriodicPair
from vortex_solver import (
    TangentDirection,
    VortexConfig,
    VortexGrid,
    VortexSolution,
    VortexSolveError,
    hamiltonian,
    solve_planar,
    tangent_solve,
)

logger = get_logger("echlab.dynamics")

TWO_PI = 2.0 * math.pi
# Gram 矩阵条件数上限
MAX_CONDITION = 1e8


class DynamicsError(RuntimeError):
    """动力学计算失败"""


class StencilFailure(DynamicsError):
    """差分模板上某点的涡旋求解失败"""

    def __init__(self, message: str, moments: Sequence[complex]):
        super().__init__(message)
        self.moments = tuple(moments)


class GramConditionError(DynamicsError):
    """Gram 矩阵病态"""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class FixedTrajectoryError(ValueError):
    """对称点不是给定 (ν, μ) 的不动轨道"""

    def __init__(self, message: str, t: float, gradient: float):
        super().__init__(message)
        self.t = t
        self.gradient = gradient


# ============ 坐标 ============

def zeros_to_moments(zeros: Sequence[complex]) -> list[complex]:
    z = np.asarray(zeros, dtype=complex)
    return [complex(np.sum(z ** q)) for q in range(1, z.size + 1)]


def moments_to_zeros(sigma: Sequence[complex]) -> tuple[complex, ...]:
    """Newton 恒等式求初等对称多项式，再求多项式的根"""
    m = len(sigma)
    if m == 0:
        return ()
    e = [1.0 + 0j]
    for k in range(1, m + 1):
        e.append(sum((-1) ** (i - 1) * e[k - i] * complex(sigma[i - 1]) for i in range(1, k + 1)) / k)
    coeffs = [(-1) ** k * e[k] for k in range(m + 1)]
    roots = np.roots(coeffs) if m > 1 else np.array([-coeffs[1]])
    return tuple(sorted((complex(r) for r in roots), key=lambda z: (z.real, z.imag)))


@dataclass(frozen=True)
class ModuliPoint:
    """𝔠_m 中的点：零点多重集及其幂和坐标"""
    zeros: tuple[complex, ...]
    moments: tuple[complex, ...] = field(init=False)

    def __post_init__(self):
        zeros = tuple(complex(z) for z in self.zeros)
        if not zeros:
            raise ValueError("模空间的点至少需要一个零点")
        object.__setattr__(self, 'zeros', zeros)
        object.__setattr__(self, 'moments', tuple(zeros_to_moments(zeros)))

    @property
    def m(self) -> int:
        return len(self.zeros)

    @property
    def config(self) -> VortexConfig:
        return VortexConfig(self.zeros)

    @classmethod
    def from_moments(cls, sigma: Sequence[complex]) -> "ModuliPoint":
        return cls(moments_to_zeros(sigma))

    @classmethod
    def origin(cls, m: int) -> "ModuliPoint":
        return cls((0j,) * m)

    def as_real(self) -> np.ndarray:
        s = np.asarray(self.moments)
        return np.concatenate([s.real, s.imag])

    @classmethod
    def from_real(cls, y: np.ndarray) -> "ModuliPoint":
        m = len(y) // 2
        return cls.from_moments(np.asarray(y[:m]) + 1j * np.asarray(y[m:]))

    def shape_key(self, decimals: int) -> tuple:
        """平移到质心后的矩坐标，按 decimals 位取整"""
        c = np.mean(self.zeros)
        centered = zeros_to_moments([z - c for z in self.zeros])
        return tuple((round(s.real, decimals) + 0.0, round(s.imag, decimals) + 0.0) for s in centered)

    def moment_key(self, decimals: int) -> tuple:
        return tuple((round(s.real, decimals) + 0.0, round(s.imag, decimals) + 0.0) for s in self.moments)


def rotate_point(point: ModuliPoint, angle: float) -> ModuliPoint:
    phase = complex(math.cos(angle), math.sin(angle))
    return ModuliPoint(tuple(phase * z for z in point.zeros))


@dataclass(frozen=True)
class FlowState:
    t: float
    point: ModuliPoint
    energy: float


@dataclass(frozen=True)
class Trajectory:
    states: tuple[FlowState, ...]
    diverged: bool = False
    escape_time: float | None = None

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    def csv_rows(self) -> list[list[float]]:
        """每行 t, Re σ_1, Im σ_1, ..., ĥ"""
        rows = []
        for s in self.states:
            row = [s.t]
            for q in s.point.moments:
                row += [q.real, q.imag]
            rows.append(row + [s.energy])
        return rows

    def csv_header(self) -> list[str]:
        m = self.states[0].point.m
        cols = ["t"]
        for q in range(1, m + 1):
            cols += [f"re_sigma_{q}", f"im_sigma_{q}"]
        return cols + ["energy"]


def energy_drift(trajectory: Trajectory) -> float:
    """max |ĥ(t) − ĥ(0)| / |ĥ(0)|"""
    energies = np.array([s.energy for s in trajectory.states])
    scale = max(abs(energies[0]), 1e-300)
    return float(np.max(np.abs(energies - energies[0])) / scale)


# ============ 缓存 ============

class ModuliModel:
    """ĥ 与 Gram 矩阵的求值器，带线程安全缓存

    涡旋解按形状（平移到质心后的矩坐标）缓存，平移后的解直接移动网格中心得到
    """

    def __init__(self, points: int | None = None, fd_step: float | None = None,
                 decimals: int | None = None):
        self.points = points or cfg.points
        self.fd_step = fd_step or cfg.fd_step
        self.decimals = decimals if decimals is not None else cfg.cache_decimals
        self._solutions: dict[tuple, VortexSolution] = {}
        self._grams: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()
        self.solves = 0

    def _grid(self, config: VortexConfig) -> VortexGrid:
        grid = VortexGrid.default(config, points=self.points)
        if grid.points_per_unit < vortex_cfg.min_points_per_unit:
            points = int(math.ceil(vortex_cfg.min_points_per_unit * 2 * grid.half_width)) + 1
            grid = VortexGrid(grid.center, grid.half_width, points)
        return grid

    def solution(self, point: ModuliPoint) -> VortexSolution:
        key = point.shape_key(self.decimals)
        with self._lock:
            base = self._solutions.get(key)
        if base is None:
            c = complex(np.mean(point.zeros))
            centered = VortexConfig(tuple(z - c for z in point.zeros))
            try:
                solved = solve_planar(centered, self._grid(centered), strict=False)
            except (VortexSolveError, ValueError) as e:
                raise StencilFailure(f"σ = {point.moments} 处涡旋求解失败: {e}", point.moments) from e
            with self._lock:
                base = self._solutions.setdefault(key, solved)
                self.solves += 1
            logger.debug(f"新形状 {key} 已求解（累计 {self.solves} 次）")
        center = complex(np.mean(point.zeros))
        return replace(base, config=point.config, grid=replace(base.grid, center=center))

    def energy(self, point: ModuliPoint, nu: float, mu: complex) -> float:
        return hamiltonian(self.solution(point), nu, mu)

    def gram(self, point: ModuliPoint) -> np.ndarray:
        """G_ab = ⟨T e_a, T e_b⟩，e_a 为矩坐标方向

        m = 1 时度量与平移无关，按形状缓存
        """
        key = point.shape_key(self.decimals) if point.m == 1 else point.moment_key(self.decimals)
        with self._lock:
            cached = self._grams.get(key)
        if cached is not None:
            return cached
        sol = self.solution(point)
        basis = np.eye(point.m, dtype=complex)
        pairs = [
            tangent_solve(sol, TangentDirection.from_moment_motion(point.config, basis[a]), strict=False)
            for a in range(point.m)
        ]
        G = np.array([[pa.inner(pb) for pb in pairs] for pa in pairs])
        G = 0.5 * (G + G.conj().T)
        with self._lock:
            self._grams.setdefault(key, G)
        return G

    def energy_differential(self, point: ModuliPoint, nu: float, mu: complex) -> np.ndarray:
        """∂ĥ/∂σ̄_q = ½(∂_x + i∂_y)ĥ，中心差分"""
        step = self.fd_step
        sigma = np.asarray(point.moments)
        out = np.zeros(point.m, dtype=complex)
        for q in range(point.m):
            partial = []
            for direction in (1.0, 1j):
                shift = np.zeros(point.m, dtype=complex)
                shift[q] = step * direction
                plus = self.energy(ModuliPoint.from_moments(sigma + shift), nu, mu)
                minus = self.energy(ModuliPoint.from_moments(sigma - shift), nu, mu)
                partial.append((plus - minus) / (2.0 * step))
            out[q] = 0.5 * (partial[0] + 1j * partial[1])
        return out

    def gradient(self, point: ModuliPoint, nu: float, mu: complex) -> np.ndarray:
        G = self.gram(point)
        condition = float(np.linalg.cond(G))
        if not math.isfinite(condition) or condition > MAX_CONDITION:
            raise GramConditionError(f"Gram 矩阵病态: cond = {condition:.3e}", condition)
        return -1j * np.linalg.solve(G, self.energy_differential(point, nu, mu))


_default_model = ModuliModel()


def default_model() -> ModuliModel:
    return _default_model


# ============ 梯度与流 ============

def grad_h(point: ModuliPoint, nu: float, mu: complex, step: float | None = None,
           model: ModuliModel | None = None) -> np.ndarray:
    """
    ∇^{(1,0)}ĥ 在矩坐标下的分量

    Raises:
        StencilFailure: 模板点上涡旋求解失败
        GramConditionError: Gram 矩阵病态
    """
    model = model or _default_model
    if step is not None and step != model.fd_step:
        model = ModuliModel(model.points, step, model.decimals)
    return model.gradient(point, nu, mu)


def flow(pair: PeriodicPair, m: int, start: ModuliPoint, steps: int = 64,
         model: ModuliModel | None = None, cap: float | None = None) -> Trajectory:
    """
    在 t ∈ [0, 2π] 上积分 c′ = −2∇^{(1,0)}ĥ|_c（RK45 自适应步长，最大步长 2π/steps）

    |σ_q| 超过 cap 时停止并标记发散，不抛错
    """
    if steps < 64:
        raise ValueError(f"steps 至少为 64，当前 {steps}")
    if start.m != m:
        raise ValueError(f"起点的零点数 {start.m} 与 m = {m} 不一致")
    model = model or _default_model
    cap = cap if cap is not None else cfg.divergence_cap

    def rhs(t, y):
        point = ModuliPoint.from_real(y)
        g = model.gradient(point, float(pair.nu_at(t)), complex(pair.mu_at(t)))
        v = -2.0 * g
        return np.concatenate([v.real, v.imag])

    def escape(t, y):
        s = y[:m] + 1j * y[m:]
        return cap - float(np.max(np.abs(s)))

    escape.terminal = True
    t_eval = np.linspace(0.0, TWO_PI, steps + 1)
    result = solve_ivp(
        rhs, (0.0, TWO_PI), start.as_real(), method="RK45", t_eval=t_eval,
        max_step=TWO_PI / steps, rtol=1e-8, atol=1e-10, events=escape,
    )
    if result.status == -1:
        raise DynamicsError(f"流积分失败: {result.message}")

    states = []
    for k, t in enumerate(result.t):
        point = ModuliPoint.from_real(result.y[:, k])
        energy = model.energy(point, float(pair.nu_at(t)), complex(pair.mu_at(t)))
        states.append(FlowState(float(t), point, energy))
    diverged = result.status == 1
    escape_time = float(result.t_events[0][0]) if diverged else None
    if diverged:
        logger.info(f"轨道在 t = {escape_time:.4f} 逃逸 (|σ| > {cap})")
    return Trajectory(tuple(states), diverged, escape_time)


def return_map(pair: PeriodicPair, point: ModuliPoint, steps: int = 64,
               model: ModuliModel | None = None) -> ModuliPoint | None:
    """时间 2π 的回归映射；发散时返回 None"""
    trajectory = flow(pair, point.m, point, steps, model)
    if trajectory.diverged:
        return None
    return trajectory.final.point


# ============ 闭轨搜索 ============

@dataclass
class OrbitSearchReport:
    m: int
    samples: list[dict[str, Any]] = field(default_factory=list)
    candidates: list[list[float]] = field(default_factory=list)
    min_displacement: float = math.inf
    argmin: list[float] | None = None
    degenerate: bool = False
    complete: bool = True

    @property
    def coverage(self) -> list[bool]:
        return [s["completed"] for s in self.samples]

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "samples": self.samples,
            "candidates": self.candidates,
            "min_displacement": self.min_displacement if math.isfinite(self.min_displacement) else None,
            "argmin": self.argmin,
            "degenerate": self.degenerate,
            "complete": self.complete,
            "coverage": self.coverage,
        }


def search_samples(m: int, radius: float, grid: int) -> list[np.ndarray]:
    """矩坐标多圆盘 |σ_q| ≤ radius 内的均匀网格（实坐标 Re σ..., Im σ...）"""
    axis = np.linspace(-radius, radius, grid)
    samples = []
    for combo in product(axis, repeat=2 * m):
        y = np.asarray(combo)
        if np.all(np.abs(y[:m] + 1j * y[m:]) <= radius + 1e-12):
            samples.append(y)
    return samples


def _displacement(pair, y, steps, model) -> float:
    end = return_map(pair, ModuliPoint.from_real(y), steps, model)
    if end is None:
        return math.inf
    return float(np.linalg.norm(end.as_real() - y))


def closed_orbit_search(
    pair: PeriodicPair,
    m: int,
    radius: float,
    grid: int,
    steps: int = 64,
    model: ModuliModel | None = None,
    max_workers: int | None = None,
    max_seconds: float | None = None,
    show_progress: bool = True,
) -> OrbitSearchReport:
    """
    在采样区域上计算回归映射，寻找闭轨候选

    位移 < refine_threshold 的样本用最小二乘细化，细化后 < candidate_threshold 记为候选。
    超出时间预算时取消剩余样本，返回带覆盖标记的部分报告。
    """
    model = model or _default_model
    samples = search_samples(m, radius, grid)
    report = OrbitSearchReport(m)
    results: dict[int, dict[str, Any]] = {}
    started = time.monotonic()
    logger.info(f"闭轨搜索: m={m}, {len(samples)} 个样本, 半径 {radius}")

    with ThreadPoolExecutor(max_workers=max_workers or cfg.max_workers) as executor:
        futures = {
            executor.submit(_displacement, pair, y, steps, model): i for i, y in enumerate(samples)
        }
        with tqdm(total=len(samples), desc="回归映射", disable=not show_progress, unit="样本") as pbar:
            for future in as_completed(futures):
                i = futures[future]
                entry = {"start": samples[i].tolist(), "completed": True, "displacement": None}
                try:
                    entry["displacement"] = future.result()
                except DynamicsError as e:
                    entry["completed"] = False
                    entry["error"] = str(e)
                    logger.warning(f"样本 {i} 失败: {e}")
                results[i] = entry
                pbar.update(1)
                if max_seconds is not None and time.monotonic() - started > max_seconds:
                    for other in futures:
                        other.cancel()
                    report.complete = False
                    logger.warning(f"超出时间预算 {max_seconds}s，输出部分报告")
                    break

    for i, y in enumerate(samples):
        report.samples.append(results.get(i, {"start": y.tolist(), "completed": False, "displacement": None}))

    finished = [s for s in report.samples if s["completed"] and s["displacement"] is not None]
    if finished:
        best = min(finished, key=lambda s: s["displacement"])
        report.min_displacement = best["displacement"]
        report.argmin = best["start"]
        report.degenerate = all(s["displacement"] < cfg.candidate_threshold for s in finished)

    if report.degenerate:
        logger.info("所有样本都是不动点（退化情形）")
        return report

    for s in finished:
        if s["displacement"] >= cfg.refine_threshold:
            continue
        y0 = np.asarray(s["start"])
        if s["displacement"] < cfg.candidate_threshold:
            refined, value = y0, s["displacement"]
        else:
            def residual(y):
                end = return_map(pair, ModuliPoint.from_real(y), steps, model)
                return (end.as_real() if end is not None else np.full_like(y, 1e3)) - y

            fit = least_squares(residual, y0, xtol=1e-10, ftol=1e-10, max_nfev=20)
            refined, value = fit.x, float(np.linalg.norm(fit.fun))
        s["refined_displacement"] = value
        if value < cfg.candidate_threshold and not any(
            np.linalg.norm(np.asarray(c) - refined) < cfg.candidate_threshold for c in report.candidates
        ):
            report.candidates.append(refined.tolist())

    logger.info(
        f"闭轨搜索完成: 最小位移 {report.min_displacement:.3e}, 候选 {len(report.candidates)} 个"
    )
    return report


# ============ 线性化 ============

@dataclass(frozen=True, eq=False)
class FloquetResult:
    multipliers: np.ndarray
    matrix: np.ndarray
    rotation_angle: float | None

    @property
    def product(self) -> complex:
        return complex(np.prod(self.multipliers))

    @property
    def is_unit_pair(self) -> bool:
        return bool(np.all(np.abs(np.abs(self.multipliers) - 1.0) < 0.02))

    @property
    def is_real_pair(self) -> bool:
        return bool(np.all(np.abs(self.multipliers.imag) < 1e-8))

    def to_dict(self) -> dict[str, Any]:
        return {
            "multipliers": [[complex(v).real, complex(v).imag] for v in self.multipliers],
            "product": [self.product.real, self.product.imag],
            "rotation_angle": self.rotation_angle,
        }


def linearized_monodromy(pair: PeriodicPair, m: int, delta: float = 1e-4, steps: int = 64,
                         model: ModuliModel | None = None, check_times: int = 16) -> FloquetResult:
    """
    所有零点重合于原点处，回归映射的有限差分线性化

    Raises:
        FixedTrajectoryError: 原点不是不动轨道
    """
    model = model or _default_model
    origin = ModuliPoint.origin(m)
    for t in TWO_PI * np.arange(check_times) / check_times:
        nu, mu = float(pair.nu_at(t)), complex(pair.mu_at(t))
        g = float(np.max(np.abs(model.gradient(origin, nu, mu))))
        scale = max(abs(nu), abs(mu), 1.0)
        if g > 1e-6 * scale:
            raise FixedTrajectoryError(f"t = {t:.4f} 处 |∇ĥ| = {g:.3e}，原点不是不动轨道", t, g)

    n = 2 * m
    J = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = delta
        plus = return_map(pair, ModuliPoint.from_real(e), steps, model)
        minus = return_map(pair, ModuliPoint.from_real(-e), steps, model)
        if plus is None or minus is None:
            raise DynamicsError("线性化扰动发散")
        J[:, k] = (plus.as_real() - minus.as_real()) / (2.0 * delta)

    multipliers = np.linalg.eigvals(J)
    angle = None
    if m == 1 and np.all(np.abs(multipliers.imag) > 1e-8):
        angle = float(abs(np.angle(multipliers[0])))
    logger.info(f"Floquet 乘子: {np.round(multipliers, 6).tolist()}，旋转角 {angle}")
    return FloquetResult(multipliers, J, angle)
