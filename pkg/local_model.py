# local_model.py
"""
可积局部模型
坐标 w = (2π/ℓ)s − |z|²/2 下，图 z = f(w, t) 是伪全纯曲线当且仅当

    (∂_w + i∂_t + R) f = 0

本模块提供模型坐标、方程残差、闭式解 c·e^{(n−R)w + int}、全纯坐标恒等式检查，
以及与 L 的谱（端点展开）的匹配。
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from logger import get_logger
from reeb_linops import SpectrumResult, spectral_derivative, trig_eval

logger = get_logger("echlab.model")

TWO_PI = 2.0 * math.pi

# f(w, t) 与 (f, ∂_w f, ∂_t f)
FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
JetFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


class ModelDomainError(ValueError):
    """模型参数或定义域不合法"""


class StencilError(ValueError):
    """采样定义域太小，差分模板放不下"""


def model_coords(s: np.ndarray | float, z: np.ndarray | complex, ell: float) -> np.ndarray | float:
    """w = (2π/ℓ)s − |z|²/2（t 不变）"""
    if ell <= 0:
        raise ModelDomainError(f"ℓ 必须为正，当前 {ell}")
    return (TWO_PI / ell) * np.asarray(s) - 0.5 * np.abs(z) ** 2


@dataclass(frozen=True, eq=False)
class ModelField:
    """模型中的复函数 f(w, t)

    三种表示之一：
      - modes: 闭式模式之和 Σ c·e^{(n−R)w + int}
      - jet: 返回 (f, ∂_w f, ∂_t f) 的可调用对象
      - samples: w_grid × [0, 2π) 网格上的采样，形状 (len(w_grid), n_t)
    """
    R: float
    ell: float = TWO_PI
    modes: tuple[tuple[int, complex], ...] = ()
    jet: JetFn | None = None
    samples: np.ndarray | None = None
    w_grid: np.ndarray | None = None

    def __post_init__(self):
        if self.ell <= 0:
            raise ModelDomainError(f"ℓ 必须为正，当前 {self.ell}")
        if self.samples is not None:
            values = np.asarray(self.samples, dtype=complex)
            grid = np.asarray(self.w_grid, dtype=float)
            if values.ndim != 2 or values.shape[0] != grid.size:
                raise ModelDomainError("采样形状必须为 (len(w_grid), n_t)")
            object.__setattr__(self, 'samples', values)
            object.__setattr__(self, 'w_grid', grid)

    @property
    def is_sampled(self) -> bool:
        return self.samples is not None

    @property
    def is_mode_sum(self) -> bool:
        return self.jet is None and self.samples is None

    @property
    def n_t(self) -> int:
        return self.samples.shape[1] if self.is_sampled else 0

    def derivatives(self, w: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """解析的 (f, ∂_w f, ∂_t f)"""
        if self.is_sampled:
            raise ModelDomainError("采样场没有解析导数")
        if self.jet is not None:
            return self.jet(w, t)
        f = np.zeros(np.broadcast(w, t).shape, dtype=complex)
        f_w = np.zeros_like(f)
        f_t = np.zeros_like(f)
        for n, c in self.modes:
            rate = n - self.R
            term = c * np.exp(rate * w + 1j * n * t)
            f += term
            f_w += rate * term
            f_t += 1j * n * term
        return f, f_w, f_t

    def __call__(self, w: np.ndarray, t: np.ndarray) -> np.ndarray:
        return self.derivatives(np.asarray(w, float), np.asarray(t, float))[0]

    def sampled(self, w_grid: Sequence[float], n_t: int = 32) -> "ModelField":
        """在 w_grid × [0, 2π) 上采样"""
        w = np.asarray(w_grid, dtype=float)
        t = TWO_PI * np.arange(n_t) / n_t
        ww, tt = np.meshgrid(w, t, indexing="ij")
        return ModelField(self.R, self.ell, samples=self(ww, tt), w_grid=w)

    def times_exp_rw(self) -> "ModelField":
        """e^{Rw}·f，导数按乘积法则传递"""
        R = self.R
        if self.is_sampled:
            weight = np.exp(R * self.w_grid)[:, None]
            return ModelField(R, self.ell, samples=weight * self.samples, w_grid=self.w_grid)

        def jet(w, t):
            f, f_w, f_t = self.derivatives(w, t)
            weight = np.exp(R * w)
            return weight * f, weight * (f_w + R * f), weight * f_t

        return ModelField(R, self.ell, jet=jet)


def generate_mode(n: int, c: complex, R: float, ell: float = TWO_PI) -> ModelField:
    """闭式解 f = c·e^{(n−R)w + int}"""
    return ModelField(float(R), ell, modes=((int(n), complex(c)),))


def superpose(fields: Sequence[ModelField]) -> ModelField:
    """有限个场之和（R、ℓ 必须一致）"""
    if not fields:
        raise ModelDomainError("至少需要一个场")
    R, ell = fields[0].R, fields[0].ell
    if any(f.R != R or f.ell != ell for f in fields):
        raise ModelDomainError("叠加的场 R 或 ℓ 不一致")
    if all(f.is_mode_sum for f in fields):
        return ModelField(R, ell, modes=tuple(m for f in fields for m in f.modes))
    if any(f.is_sampled for f in fields):
        raise ModelDomainError("采样场请先在同一网格上采样再相加")

    def jet(w, t):
        parts = [f.derivatives(w, t) for f in fields]
        return tuple(sum(p[i] for p in parts) for i in range(3))

    return ModelField(R, ell, jet=jet)


# ============ 导数栈 ============

def _default_domain() -> tuple[np.ndarray, np.ndarray]:
    w = np.linspace(-1.0, 1.0, 41)
    t = TWO_PI * np.arange(32) / 32
    return np.meshgrid(w, t, indexing="ij")


def _grid_derivatives(field: ModelField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """采样场：t 方向谱导数，w 方向四阶中心差分；只返回内部点"""
    w = field.w_grid
    if w.size < 5:
        raise StencilError(f"w 方向至少需要 5 个点，当前 {w.size}")
    if field.n_t < 8:
        raise StencilError(f"t 方向至少需要 8 个点，当前 {field.n_t}")
    h = np.diff(w)
    if not np.allclose(h, h[0], rtol=1e-9):
        raise StencilError("w 网格必须等距")
    h = h[0]
    f = field.samples
    f_t = np.apply_along_axis(spectral_derivative, 1, f, TWO_PI)
    f_w = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)
    return f[2:-2], f_w, f_t[2:-2]


def _jet(field: ModelField, w=None, t=None):
    if field.is_sampled:
        return _grid_derivatives(field)
    if w is None:
        w, t = _default_domain()
    return field.derivatives(w, t)


def model_residual(field: ModelField, w: np.ndarray | None = None, t: np.ndarray | None = None) -> float:
    """sup |(∂_w + i∂_t + R) f|

    解析场在 (w, t) 上求值（缺省 [−1, 1] × [0, 2π) 网格），采样场在内部网格点上求值
    """
    f, f_w, f_t = _jet(field, w, t)
    if f.size == 0:
        return 0.0
    return float(np.max(np.abs(f_w + 1j * f_t + field.R * f)))


@dataclass(frozen=True)
class HoloReport:
    """∂_ū(e^{Rw}f) = ½e^{Rw}(∂_w + i∂_t + R)f 的检查结果"""
    discrepancy: float
    dbar_norm: float


def holo_check(field: ModelField, w: np.ndarray | None = None, t: np.ndarray | None = None) -> HoloReport:
    """用同一导数栈分别计算恒等式两边，返回差的 sup 范数

    dbar_norm 为 sup |∂_ū(e^{Rw}f)|，非零说明 f 不是解但恒等式仍成立
    """
    if not field.is_sampled and w is None:
        w, t = _default_domain()
    g, g_w, g_t = _jet(field.times_exp_rw(), w, t)
    f, f_w, f_t = _jet(field, w, t)
    if field.is_sampled:
        weight = np.exp(field.R * field.w_grid[2:-2])[:, None]
    else:
        weight = np.exp(field.R * w)
    dbar = 0.5 * (g_w + 1j * g_t)
    rhs = 0.5 * weight * (f_w + 1j * f_t + field.R * f)
    if dbar.size == 0:
        return HoloReport(0.0, 0.0)
    return HoloReport(float(np.max(np.abs(dbar - rhs))), float(np.max(np.abs(dbar))))


# ============ 端点展开 ============

@dataclass(frozen=True, eq=False)
class EndTerm:
    q_prime: int
    eigenvalue: float
    zeta: np.ndarray  # [0, 2πq′) 上的均匀采样


@dataclass(frozen=True, eq=False)
class EndExpansion:
    """端点展开 Σ ζ_{q′}(t)·e^{−2λ_{q′}s}（余项取零）"""
    q_E: int
    terms: tuple[EndTerm, ...]
    side: str  # "positive" | "negative"

    def validate(self) -> list[str]:
        """检查整除与符号规则；返回排序约定方面的提示（不强制）"""
        if self.side not in ("positive", "negative"):
            raise ModelDomainError(f"未知端点类型: {self.side}")
        notes = []
        for term in self.terms:
            if term.q_prime < 1 or self.q_E % term.q_prime:
                raise ModelDomainError(f"q′={term.q_prime} 不整除 q_E={self.q_E}")
            if self.side == "negative" and not term.eigenvalue < 0:
                raise ModelDomainError(f"负端要求 λ < 0，得到 {term.eigenvalue}")
            if self.side == "positive" and not term.eigenvalue > 0:
                raise ModelDomainError(f"正端要求 λ > 0，得到 {term.eigenvalue}")
        tail = [t.eigenvalue for t in self.terms if t.q_prime == self.q_E]
        if self.side == "negative" and tail:
            for term in self.terms:
                if term.eigenvalue < min(tail):
                    notes.append(f"λ_{term.q_prime} = {term.eigenvalue} 小于 λ_{self.q_E}")
        return notes

    def evaluate(self, s: np.ndarray | float, t: np.ndarray | float) -> np.ndarray:
        """ζ_{q′} 在采样点之间按三角插值"""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        total = np.zeros(np.broadcast(s, t).shape, dtype=complex)
        for term in self.terms:
            n = term.zeta.size
            period = TWO_PI * term.q_prime
            zeta_t = trig_eval(np.fft.fft(term.zeta) / n, t, period)
            total += zeta_t * np.exp(-2 * term.eigenvalue * s)
        return total


@dataclass
class EndMatchReport:
    """模式 n 的 w-指数 (n − R) 与特征值 λ = (R − n)/2 的匹配"""
    matched: list[dict[str, Any]] = field(default_factory=list)
    scale_factor: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"matched": self.matched, "scale_factor": self.scale_factor}


def end_match(field: ModelField, spectrum: SpectrumResult, ell: float | None = None, tol: float = 1e-10) -> EndMatchReport:
    """把模式之和的每一项与 (R/2, 0) 的 L 谱中的特征值对应

    ℓ ≠ 2π 时 s 按 2π/ℓ 缩放，缩放因子记录在报告中
    """
    if not field.is_mode_sum:
        raise ModelDomainError("end_match 只接受闭式模式之和")
    ell = field.ell if ell is None else ell
    if ell <= 0:
        raise ModelDomainError(f"ℓ 必须为正，当前 {ell}")
    report = EndMatchReport(scale_factor=TWO_PI / ell)
    for n, c in field.modes:
        expected = (field.R - n) / 2.0
        _, found = spectrum.closest(expected)
        if abs(found - expected) > tol:
            raise ModelDomainError(
                f"模式 n={n} 没有匹配的特征值 {expected:.6g}（最近 {found:.6g}），谱窗口太小"
            )
        report.matched.append({
            "n": n,
            "coefficient": [c.real, c.imag],
            "eigenvalue": found,
            "exponent": n - field.R,
            "exponent_plus_twice_lambda": (n - field.R) + 2 * expected,
        })
    logger.debug(f"端点匹配: {len(report.matched)} 个模式, 缩放因子 {report.scale_factor:.6g}")
    return report
