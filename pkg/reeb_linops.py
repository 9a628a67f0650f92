# reeb_linops.py
"""
线性化 Reeb 流
围绕一条闭 Reeb 轨道的线性化流由圆周上的一对函数 (ν, μ) 决定：

    L z = (i/2) z' + ν z + μ z̄

本模块提供：算子 L 的作用、SL(2, ℝ) 单值矩阵、椭圆/双曲分类与旋转数、
L 在 2πq 周期函数上的谱、对称算子族的谱流，以及到标准形的同伦验证。
所有函数均为纯函数，可在多线程中并发调用。
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np
from scipy import linalg

from config import monodromy as mono_cfg, spectrum as spec_cfg
from logger import get_logger

logger = get_logger("echlab.reeb")

TWO_PI = 2.0 * math.pi


class RepresentationError(ValueError):
    """周期函数表示不一致（周期倍数不匹配、采样点过少等）"""


class ClassificationError(ValueError):
    """分类前提不满足（例如要求椭圆轨道但得到双曲轨道）"""


class SpectralFlowError(RuntimeError):
    """谱流无法确定（端点奇异或细化预算耗尽）"""

    def __init__(self, message: str, tau: float | None = None):
        super().__init__(message if tau is None else f"{message} (τ={tau:.6g})")
        self.tau = tau


# ============ 周期函数 ============

def _integer_frequencies(n: int) -> np.ndarray:
    """FFT 顺序下的整数频率"""
    return np.fft.fftfreq(n, d=1.0 / n).astype(int)


def trig_eval(hat: np.ndarray, t: np.ndarray | float, period: float = TWO_PI) -> np.ndarray:
    """按三角插值在任意点求值

    Args:
        hat: FFT 系数（已除以 n）
        t: 求值点
        period: 周期

    Returns:
        复数值数组，形状与 t 相同
    """
    t = np.asarray(t, dtype=float)
    n = len(hat)
    k = _integer_frequencies(n)
    omega = TWO_PI / period
    phase = np.exp(1j * omega * np.multiply.outer(t, k))
    if n % 2 == 0:
        # Nyquist 项取实对称形式
        phase[..., n // 2] = np.cos(omega * t * (n // 2))
    return phase @ hat


def spectral_derivative(values: np.ndarray, period: float) -> np.ndarray:
    """周期采样的谱导数"""
    n = len(values)
    k = _integer_frequencies(n).astype(float)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.fft.ifft(1j * (TWO_PI / period) * k * np.fft.fft(values))


@dataclass(frozen=True, eq=False)
class LoopSamples:
    """[0, 2πq) 上的均匀采样复函数"""
    values: np.ndarray
    q: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'values', np.asarray(self.values, dtype=complex))
        if self.q <= 0:
            raise RepresentationError(f"周期倍数 q 必须为正整数，当前 {self.q}")

    @property
    def times(self) -> np.ndarray:
        n = len(self.values)
        return TWO_PI * self.q * np.arange(n) / n


@dataclass(frozen=True, eq=False)
class PeriodicPair:
    """圆周上的一对函数 (ν, μ)，ν 取实值，μ 取复值

    以 [0, 2π) 上的均匀采样表示，任意点的取值由三角插值给出。
    """
    nu: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float).ravel()
        mu = np.asarray(self.mu, dtype=complex).ravel()
        if nu.shape != mu.shape:
            raise RepresentationError(f"ν 与 μ 采样长度不一致: {nu.size} != {mu.size}")
        if nu.size < 8:
            raise RepresentationError(f"采样点过少: {nu.size} < 8")
        if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(mu))):
            raise RepresentationError("采样中存在非有限值")
        object.__setattr__(self, 'nu', nu)
        object.__setattr__(self, 'mu', mu)

    # ---------- 构造 ----------

    @classmethod
    def from_functions(
        cls,
        nu_fn: Callable[[np.ndarray], np.ndarray],
        mu_fn: Callable[[np.ndarray], np.ndarray],
        samples: int | None = None,
    ) -> "PeriodicPair":
        """由向量化函数在均匀网格上采样"""
        n = samples or mono_cfg.samples
        t = TWO_PI * np.arange(n) / n
        nu = np.broadcast_to(np.asarray(nu_fn(t), dtype=float), t.shape)
        mu = np.broadcast_to(np.asarray(mu_fn(t), dtype=complex), t.shape)
        return cls(nu.copy(), mu.copy())

    @classmethod
    def constant(cls, nu: float, mu: complex = 0.0, samples: int | None = None) -> "PeriodicPair":
        n = samples or mono_cfg.samples
        return cls(np.full(n, float(nu)), np.full(n, complex(mu)))

    @classmethod
    def elliptic_canonical(cls, R: float, samples: int | None = None) -> "PeriodicPair":
        """旋转角为 R 的椭圆标准对 (R/2, 0)"""
        return cls.constant(R / 2.0, 0.0, samples)

    @classmethod
    def hyperbolic_canonical(
        cls,
        k: int,
        eps: float,
        form: str = "quarter",
        samples: int | None = None,
    ) -> "PeriodicPair":
        """双曲标准对

        form="quarter" 给出 (k/4, iεe^{ikt})；form="half" 给出 (k/2, iεe^{−ikt})。
        两种写法都可以构造，是否双曲由 classify 判定。
        """
        if form == "quarter":
            return cls.from_functions(
                lambda t: np.full_like(t, k / 4.0),
                lambda t: 1j * eps * np.exp(1j * k * t),
                samples,
            )
        if form == "half":
            return cls.from_functions(
                lambda t: np.full_like(t, k / 2.0),
                lambda t: 1j * eps * np.exp(-1j * k * t),
                samples,
            )
        raise ValueError(f"未知的标准形写法: {form}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PeriodicPair":
        """从轨道数据库中的 JSON 片段构造"""
        try:
            nu = np.asarray(data["nu_samples"], dtype=float)
            mu = np.asarray(data["mu_re_samples"], dtype=float) + 1j * np.asarray(
                data["mu_im_samples"], dtype=float
            )
        except KeyError as e:
            raise RepresentationError(f"缺少字段 {e.args[0]}") from e
        return cls(nu, mu)

    def to_dict(self) -> dict[str, list[float]]:
        return {
            "nu_samples": self.nu.tolist(),
            "mu_re_samples": self.mu.real.tolist(),
            "mu_im_samples": self.mu.imag.tolist(),
        }

    # ---------- 求值 ----------

    @property
    def n_samples(self) -> int:
        return self.nu.size

    @cached_property
    def nu_hat(self) -> np.ndarray:
        return np.fft.fft(self.nu) / self.n_samples

    @cached_property
    def mu_hat(self) -> np.ndarray:
        return np.fft.fft(self.mu) / self.n_samples

    def nu_at(self, t: np.ndarray | float) -> np.ndarray:
        return trig_eval(self.nu_hat, t).real

    def mu_at(self, t: np.ndarray | float) -> np.ndarray:
        return trig_eval(self.mu_hat, t)

    def fourier_extent(self, tol: float = 1e-12) -> int:
        """ν、μ 中显著 Fourier 模式的最大频率"""
        k = np.abs(_integer_frequencies(self.n_samples))
        scale = max(1.0, float(np.max(np.abs(self.nu))), float(np.max(np.abs(self.mu))))
        mask = (np.abs(self.nu_hat) > tol * scale) | (np.abs(self.mu_hat) > tol * scale)
        return int(k[mask].max()) if np.any(mask) else 0

    def is_mu_zero(self, tol: float = 1e-14) -> bool:
        return bool(np.max(np.abs(self.mu)) <= tol)

    def resampled(self, samples: int) -> "PeriodicPair":
        if samples == self.n_samples:
            return self
        t = TWO_PI * np.arange(samples) / samples
        return PeriodicPair(self.nu_at(t), self.mu_at(t))

    def blend(self, other: "PeriodicPair", s: float) -> "PeriodicPair":
        """线性插值 (1−s)·self + s·other"""
        n = max(self.n_samples, other.n_samples)
        a, b = self.resampled(n), other.resampled(n)
        return PeriodicPair((1 - s) * a.nu + s * b.nu, (1 - s) * a.mu + s * b.mu)


# ============ 算子 L ============

def apply_L(pair: PeriodicPair, zeta: LoopSamples | np.ndarray, q: int = 1) -> LoopSamples:
    """计算 Lζ = (i/2)ζ' + νζ + μζ̄

    Args:
        pair: (ν, μ)
        zeta: [0, 2πq) 上的均匀采样
        q: 周期倍数

    Returns:
        同一网格上的 Lζ
    """
    if q <= 0:
        raise RepresentationError(f"周期倍数 q 必须为正整数，当前 {q}")
    if isinstance(zeta, LoopSamples):
        if zeta.q != q:
            raise RepresentationError(f"ζ 的周期倍数 {zeta.q} 与 q={q} 不一致")
        values = zeta.values
    else:
        values = np.asarray(zeta, dtype=complex)
    if values.size < 8:
        raise RepresentationError(f"采样点过少，无法求导: {values.size} < 8")

    period = TWO_PI * q
    t = period * np.arange(values.size) / values.size
    derivative = spectral_derivative(values, period)
    result = 0.5j * derivative + pair.nu_at(t) * values + pair.mu_at(t) * np.conj(values)
    return LoopSamples(result, q)


def real_inner(zeta: LoopSamples, eta: LoopSamples) -> float:
    """实内积 Re ∫ ζ̄ η（按网格求积）"""
    if zeta.q != eta.q or zeta.values.size != eta.values.size:
        raise RepresentationError("两个函数的表示不一致")
    dt = TWO_PI * zeta.q / zeta.values.size
    return float(np.real(np.vdot(zeta.values, eta.values)) * dt)


# ============ 单值矩阵 ============

def _generator(nu: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """z' = 2i(νz + μz̄) 的实形式系数矩阵，形状 (..., 2, 2)"""
    m1, m2 = mu.real, mu.imag
    a = np.empty(nu.shape + (2, 2))
    a[..., 0, 0] = -2 * m2
    a[..., 0, 1] = -2 * (nu - m1)
    a[..., 1, 0] = 2 * (nu + m1)
    a[..., 1, 1] = 2 * m2
    return a


@dataclass(frozen=True, eq=False)
class MonodromyResult:
    """U' = A(t)U 的解路径"""
    times: np.ndarray
    matrices: np.ndarray
    trace_final: float
    angle_lift: float

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.matrices))

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]

    @property
    def det_error(self) -> float:
        return float(np.max(np.abs(np.linalg.det(self.matrices) - 1.0)))

    def vector_lift(self, vector: np.ndarray) -> float:
        """U(t)·vector 的连续辐角提升（弧度）"""
        path = self.matrices @ np.asarray(vector, dtype=float)
        angles = np.unwrap(np.arctan2(path[:, 1], path[:, 0]))
        return float(angles[-1] - angles[0])


def monodromy(pair: PeriodicPair, steps: int | None = None) -> MonodromyResult:
    """RK4 积分 U' = A(t)U，U(0) = I，t ∈ [0, 2π]

    Args:
        pair: (ν, μ)
        steps: 步数（≥ 64）

    Returns:
        MonodromyResult
    """
    steps = steps or mono_cfg.steps
    if steps < 64:
        raise ValueError(f"steps 至少为 64，当前 {steps}")

    h = TWO_PI / steps
    nodes = h * np.arange(steps + 1)
    mids = nodes[:-1] + h / 2
    a_nodes = _generator(pair.nu_at(nodes), pair.mu_at(nodes))
    a_mids = _generator(pair.nu_at(mids), pair.mu_at(mids))

    mats = np.empty((steps + 1, 2, 2))
    u = np.eye(2)
    mats[0] = u
    for j in range(steps):
        k1 = a_nodes[j] @ u
        k2 = a_mids[j] @ (u + 0.5 * h * k1)
        k3 = a_mids[j] @ (u + 0.5 * h * k2)
        k4 = a_nodes[j + 1] @ (u + h * k3)
        u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        mats[j + 1] = u

    first_column = mats[:, :, 0]
    angles = np.unwrap(np.arctan2(first_column[:, 1], first_column[:, 0]))
    result = MonodromyResult(
        times=nodes,
        matrices=mats,
        trace_final=float(np.trace(u)),
        angle_lift=float(angles[-1] - angles[0]),
    )
    logger.debug(f"单值矩阵: trace={result.trace_final:.10f}, det 误差={result.det_error:.2e}")
    return result


# ============ 分类 ============

class OrbitKind(str, Enum):
    """轨道类型"""
    ELLIPTIC = "elliptic"
    HYPERBOLIC = "hyperbolic"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class Classification:
    """分类结果

    椭圆轨道给出实旋转数 R（整数部分取自辐角提升，只有 R mod 1 与坐标无关）；
    双曲轨道给出整数旋转数 k，满足 (−1)^k = sign(trace)。
    """
    kind: OrbitKind
    rotation_R: float | None = None
    rotation_k: int | None = None
    positive_hyperbolic: bool = False
    trace: float | None = None
    angle_lift: float | None = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', OrbitKind(self.kind))
        if self.kind == OrbitKind.HYPERBOLIC:
            if self.rotation_k is None:
                raise ClassificationError("双曲轨道必须给出旋转数 k")
            if self.positive_hyperbolic != (self.rotation_k % 2 == 0):
                raise ClassificationError(
                    f"符号规则不成立: k={self.rotation_k}, positive={self.positive_hyperbolic}"
                )
        if self.kind == OrbitKind.ELLIPTIC and self.rotation_R is None:
            raise ClassificationError("椭圆轨道必须给出旋转数 R")

    @classmethod
    def elliptic(cls, R: float) -> "Classification":
        return cls(OrbitKind.ELLIPTIC, rotation_R=float(R))

    @classmethod
    def hyperbolic(cls, k: int, positive: bool | None = None) -> "Classification":
        positive = (k % 2 == 0) if positive is None else positive
        return cls(OrbitKind.HYPERBOLIC, rotation_k=int(k), positive_hyperbolic=positive)

    @property
    def is_elliptic(self) -> bool:
        return self.kind == OrbitKind.ELLIPTIC

    @property
    def is_hyperbolic(self) -> bool:
        return self.kind == OrbitKind.HYPERBOLIC

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "rotation_R": self.rotation_R,
            "rotation_k": self.rotation_k,
            "positive_hyperbolic": self.positive_hyperbolic,
            "trace": self.trace,
            "angle_lift": self.angle_lift,
            "lift_convention": "U(t)·(1,0) 的连续辐角；双曲时取 U(2π) 的特征向量",
        }


def classify(
    pair: PeriodicPair,
    steps: int | None = None,
    tol: float | None = None,
) -> Classification:
    """按 trace(U(2π)) 分类并提取旋转数

    Args:
        pair: (ν, μ)
        steps: RK4 步数
        tol: 退化容差

    Returns:
        Classification（|trace| 与 2 相差不足 tol 时 kind=DEGENERATE）
    """
    tol = mono_cfg.degeneracy_tol if tol is None else tol
    res = monodromy(pair, steps)
    tr = res.trace_final
    u = res.final

    if abs(abs(tr) - 2.0) <= tol:
        logger.debug(f"退化轨道: trace={tr:.10f}")
        return Classification(OrbitKind.DEGENERATE, trace=tr, angle_lift=res.angle_lift)

    if abs(tr) < 2.0:
        theta = math.acos(max(-1.0, min(1.0, tr / 2.0)))
        # U[1,0] > 0 表示逆时针旋转
        phi = theta if u[1, 0] > 0 else TWO_PI - theta
        frac = phi / TWO_PI
        n = round(res.angle_lift / TWO_PI - frac)
        return Classification(
            OrbitKind.ELLIPTIC,
            rotation_R=n + frac,
            trace=tr,
            angle_lift=res.angle_lift,
        )

    # 双曲：以 U(2π) 的实特征向量为参考向量，辐角提升恰为 π 的整数倍
    eigvals, eigvecs = np.linalg.eig(u)
    idx = int(np.argmax(np.abs(eigvals)))
    vector = np.real(eigvecs[:, idx])
    lift = res.vector_lift(vector)
    ratio = lift / math.pi
    k = round(ratio)
    if abs(ratio - k) >= mono_cfg.lift_tol:
        raise ClassificationError(f"辐角提升 {ratio:.4f}π 不接近整数倍 π")
    if (-1) ** k != (1 if tr > 0 else -1):
        raise ClassificationError(f"符号规则不成立: k={k}, trace={tr:.6f}")
    return Classification(
        OrbitKind.HYPERBOLIC,
        rotation_k=int(k),
        positive_hyperbolic=tr > 2.0,
        trace=tr,
        angle_lift=lift,
    )


def is_nondegenerate(pair: PeriodicPair, steps: int | None = None, tol: float | None = None) -> bool:
    """U(2π) 没有特征值 1"""
    tol = mono_cfg.degeneracy_tol if tol is None else tol
    return abs(monodromy(pair, steps).trace_final - 2.0) > tol


def monodromy_power_eigen_one(pair: PeriodicPair, q: int, steps: int | None = None, tol: float = 1e-7) -> bool:
    """U(2π)^q 是否有特征值 1（即 trace(U^q) = 2）"""
    u = monodromy(pair, steps).final
    return abs(np.trace(np.linalg.matrix_power(u, q)) - 2.0) <= tol


@dataclass(frozen=True)
class NEllipticReport:
    ok: bool
    witness: int | None = None


def check_n_elliptic(source: PeriodicPair | Classification, n: int, tol: float = 1e-9) -> NEllipticReport:
    """检验 kR ∉ ℤ 对所有 k ≤ n 成立

    Args:
        source: 周期对（先分类）或已有的椭圆分类
        n: 上界
        tol: 整数判定容差

    Returns:
        NEllipticReport，失败时 witness 为第一个使 kR 为整数的 k
    """
    cls = classify(source) if isinstance(source, PeriodicPair) else source
    if not cls.is_elliptic:
        raise ClassificationError(f"要求椭圆轨道，得到 {cls.kind.value}")
    R = cls.rotation_R
    for k in range(1, n + 1):
        kr = k * R
        if abs(kr - round(kr)) <= tol:
            return NEllipticReport(False, k)
    return NEllipticReport(True)


# ============ 谱 ============

def _coefficient_lookup(hat: np.ndarray, index: np.ndarray) -> np.ndarray:
    """按整数频率取 Fourier 系数，超出分辨范围为 0；偶数长度的 Nyquist 项对半分配"""
    n = hat.size
    half = n // 2
    out = np.zeros(index.shape, dtype=complex)
    inside = np.abs(index) < (half if n % 2 == 0 else half + 1)
    out[inside] = hat[np.mod(index[inside], n)]
    if n % 2 == 0:
        nyquist = np.abs(index) == half
        out[nyquist] = 0.5 * hat[half]
    return out


def spectrum_matrix(pair: PeriodicPair, q: int, n_modes: int) -> np.ndarray:
    """L 在 {e^{imt/q}}_{|m|≤n_modes} 上的实对称矩阵，维数 2(2n_modes+1)

    坐标为 (Re c, Im c)，欧氏内积对应 Re ∫ ζ̄η / (2πq)。
    """
    ms = np.arange(-n_modes, n_modes + 1)
    diff = ms[:, None] - ms[None, :]
    summ = ms[:, None] + ms[None, :]

    herm = np.where(diff % q == 0, _coefficient_lookup(pair.nu_hat, diff // q), 0.0)
    herm = herm + np.diag(-ms / (2.0 * q))
    conj_part = np.where(summ % q == 0, _coefficient_lookup(pair.mu_hat, summ // q), 0.0)

    p, qa = herm.real, herm.imag
    a, b = conj_part.real, conj_part.imag
    mat = np.block([[p + a, -qa + b], [qa + b, p - a]])
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """L 在 2πq 周期函数上的特征分解"""
    q: int
    modes: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # 形状 (K, 2n_modes+1)，复 Fourier 系数
    primitive_period: list[int]
    max_residual: float

    @property
    def min_abs(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def closest(self, value: float) -> tuple[int, float]:
        idx = int(np.argmin(np.abs(self.eigenvalues - value)))
        return idx, float(self.eigenvalues[idx])

    def eigenvector_samples(self, index: int, n_samples: int = 512) -> LoopSamples:
        t = TWO_PI * self.q * np.arange(n_samples) / n_samples
        basis = np.exp(1j * np.multiply.outer(t, self.modes) / self.q)
        return LoopSamples(basis @ self.eigenvectors[index], self.q)


def _primitive_period(coeffs: np.ndarray, modes: np.ndarray, q: int) -> int:
    significant = modes[np.abs(coeffs) > 1e-8 * max(np.max(np.abs(coeffs)), 1e-300)]
    for d in range(1, q + 1):
        if q % d == 0 and np.all((significant * d) % q == 0):
            return d
    return q


def spectrum(pair: PeriodicPair, q: int, n_modes: int | None = None) -> SpectrumResult:
    """L 在 2πq 周期复函数空间（实线性）上的谱

    Args:
        pair: (ν, μ)
        q: 周期倍数
        n_modes: Fourier 截断 |m| ≤ n_modes（≥ 8）

    Returns:
        SpectrumResult，特征值升序
    """
    n_modes = n_modes or spec_cfg.n_modes
    if q <= 0:
        raise RepresentationError(f"周期倍数 q 必须为正整数，当前 {q}")
    if n_modes < 8:
        raise ValueError(f"n_modes 至少为 8，当前 {n_modes}")
    if pair.fourier_extent() * q > n_modes:
        logger.warning(
            f"n_modes={n_modes} 不足以分辨 (ν, μ) 的 Fourier 成分 "
            f"(最高频率 {pair.fourier_extent()}, q={q})"
        )

    mat = spectrum_matrix(pair, q, n_modes)
    eigvals, eigvecs = linalg.eigh(mat)
    residual = float(np.max(np.linalg.norm(mat @ eigvecs - eigvecs * eigvals, axis=0)))

    size = 2 * n_modes + 1
    coeffs = (eigvecs[:size, :] + 1j * eigvecs[size:, :]).T
    modes = np.arange(-n_modes, n_modes + 1)
    periods = [_primitive_period(c, modes, q) for c in coeffs]
    return SpectrumResult(
        q=q,
        modes=modes,
        eigenvalues=eigvals,
        eigenvectors=coeffs,
        primitive_period=periods,
        max_residual=residual,
    )


def eigenvector_winding(result: SpectrumResult, index: int, n_samples: int = 512) -> int | None:
    """特征向量作为圆周到 ℂ∖0 的映射的卷绕数；采样到零点时返回 None"""
    values = result.eigenvector_samples(index, n_samples).values
    magnitude = np.abs(values)
    if magnitude.min() <= 1e-10 * magnitude.max():
        return None
    angles = np.unwrap(np.angle(np.append(values, values[0])))
    return int(round((angles[-1] - angles[0]) / TWO_PI))


# ============ 谱流 ============

@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """τ ∈ [0, 1] 上的实对称矩阵族

    complex_linear=True 表示每个矩阵与乘 i 交换（μ ≡ 0 时的 L），
    此时特征值成对出现，谱流按复维数计数。
    """
    matrix_at: Callable[[float], np.ndarray]
    grid: np.ndarray
    complex_linear: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("参数网格至少两个点且严格递增")
        object.__setattr__(self, 'grid', grid)

    def evaluate(self, tau: float) -> np.ndarray:
        mat = np.asarray(self.matrix_at(float(tau)), dtype=float)
        scale = max(np.linalg.norm(mat), 1.0)
        if np.max(np.abs(mat - mat.T)) > 1e-12 * scale:
            raise ValueError(f"τ={tau} 处矩阵不对称")
        return 0.5 * (mat + mat.T)

    def eigenvalues(self, tau: float) -> np.ndarray:
        return linalg.eigvalsh(self.evaluate(tau))

    def reversed(self) -> "OperatorFamily":
        lo, hi = self.grid[0], self.grid[-1]
        return OperatorFamily(
            lambda tau: self.matrix_at(lo + hi - tau),
            (lo + hi - self.grid)[::-1],
            self.complex_linear,
        )

    @staticmethod
    def concatenate(first: "OperatorFamily", second: "OperatorFamily") -> "OperatorFamily":
        """拼接：[0, ½] 走 first，[½, 1] 走 second（两者均按各自网格端点重新参数化）"""
        a0, a1 = first.grid[0], first.grid[-1]
        b0, b1 = second.grid[0], second.grid[-1]

        def matrix_at(tau: float) -> np.ndarray:
            if tau <= 0.5:
                return first.matrix_at(a0 + (a1 - a0) * 2 * tau)
            return second.matrix_at(b0 + (b1 - b0) * (2 * tau - 1))

        left = 0.5 * (first.grid - a0) / (a1 - a0)
        right = 0.5 + 0.5 * (second.grid - b0) / (b1 - b0)
        grid = np.concatenate([left, right[1:]])
        return OperatorFamily(matrix_at, grid, first.complex_linear and second.complex_linear)


def pair_family(
    pair_at: Callable[[float], PeriodicPair],
    q: int = 1,
    n_modes: int = 16,
    grid: Sequence[float] | None = None,
) -> OperatorFamily:
    """由周期对族 τ ↦ (ν_τ, μ_τ) 构造 L 的矩阵族"""
    grid = np.linspace(0.0, 1.0, 21) if grid is None else np.asarray(grid, dtype=float)
    complex_linear = all(pair_at(float(t)).is_mu_zero() for t in grid)
    return OperatorFamily(lambda tau: spectrum_matrix(pair_at(tau), q, n_modes), grid, complex_linear)


def _count_negative(eigs: np.ndarray) -> int:
    return int(np.sum(eigs < 0))


def _regular_point(family: OperatorFamily, tau: float, lo: float, hi: float, tol: float, budget: int) -> tuple[float, np.ndarray]:
    """若 τ 处矩阵奇异，则在 (lo, hi) 内微移采样点"""
    eigs = family.eigenvalues(tau)
    width = hi - lo
    step = 1e-6 * width
    for attempt in range(budget):
        if np.min(np.abs(eigs)) > tol:
            return tau, eigs
        shift = step * (attempt // 2 + 1) * (1 if attempt % 2 == 0 else -1)
        candidate = min(max(tau + shift, lo + 1e-12 * width), hi - 1e-12 * width)
        tau, eigs = candidate, family.eigenvalues(candidate)
    raise SpectralFlowError("内部采样点奇异且无法微移", tau=tau)


def _crossing_consistent(family: OperatorFamily, a: float, b: float, delta: int) -> bool:
    """检查区间中点附近最接近零的 |delta| 个特征值的导数符号是否与 delta 一致"""
    mid = 0.5 * (a + b)
    h = min(1e-6, (b - a) / 4)
    plus = family.eigenvalues(mid + h)
    minus = family.eigenvalues(mid - h)
    centre = family.eigenvalues(mid)
    order = np.argsort(np.abs(centre))[: abs(delta)]
    derivative = (plus[order] - minus[order]) / (2 * h)
    return bool(np.all(np.sign(derivative) == np.sign(delta)))


def _resolve(
    family: OperatorFamily,
    a: float,
    ea: np.ndarray,
    b: float,
    eb: np.ndarray,
    tol: float,
    depth: int,
) -> int:
    delta = _count_negative(ea) - _count_negative(eb)
    if delta == 0:
        return 0
    if _crossing_consistent(family, a, b, delta):
        return delta
    if depth <= 0:
        raise SpectralFlowError("细化预算耗尽，穿越方向无法确定", tau=0.5 * (a + b))
    mid, em = _regular_point(family, 0.5 * (a + b), a, b, tol, 8)
    logger.debug(f"谱流细化: [{a:.6g}, {b:.6g}] 在 {mid:.6g} 二分")
    return (
        _resolve(family, a, ea, mid, em, tol, depth - 1)
        + _resolve(family, mid, em, b, eb, tol, depth - 1)
    )


def spectral_flow(
    family: OperatorFamily,
    tol: float | None = None,
    budget: int | None = None,
) -> int:
    """带符号的零点穿越计数：正导数穿越 +1，负导数穿越 −1

    Args:
        family: 对称矩阵族
        tol: 奇异判定容差
        budget: 每个区间的二分深度

    Returns:
        谱流（complex_linear 族按复维数计数）
    """
    tol = spec_cfg.crossing_tol if tol is None else tol
    budget = spec_cfg.refine_budget if budget is None else budget
    grid = family.grid

    start = family.eigenvalues(grid[0])
    end = family.eigenvalues(grid[-1])
    if np.min(np.abs(start)) <= tol:
        raise SpectralFlowError("起点矩阵奇异", tau=float(grid[0]))
    if np.min(np.abs(end)) <= tol:
        raise SpectralFlowError("终点矩阵奇异", tau=float(grid[-1]))

    total = 0
    prev_tau, prev = float(grid[0]), start
    for i in range(1, grid.size):
        if i == grid.size - 1:
            tau, cur = float(grid[-1]), end
        else:
            tau, cur = _regular_point(family, float(grid[i]), prev_tau, float(grid[i + 1]), tol, budget)
        total += _resolve(family, prev_tau, prev, tau, cur, tol, budget)
        prev_tau, prev = tau, cur

    if family.complex_linear:
        if total % 2:
            raise SpectralFlowError(f"复线性族的实计数 {total} 为奇数")
        total //= 2
    logger.debug(f"谱流 = {total}")
    return total


# ============ 同伦验证 ============

@dataclass
class HomotopyReport:
    passed: bool
    entries: list[Classification] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "entries": [c.to_dict() for c in self.entries],
            "failures": [{"index": i, "reason": r} for i, r in self.failures],
        }


def _rotation_matches(cls: Classification, expect: Classification, tol: float) -> bool:
    if cls.kind != expect.kind:
        return False
    if cls.is_elliptic:
        diff = (cls.rotation_R - expect.rotation_R + 0.5) % 1.0 - 0.5
        return abs(diff) <= tol
    if cls.is_hyperbolic:
        return cls.rotation_k == expect.rotation_k
    return False


def verify_homotopy(
    path: Sequence[PeriodicPair],
    expect: Classification,
    rotation_tol: float | None = None,
    steps: int | None = None,
) -> HomotopyReport:
    """逐点分类，检查路径上的类型与旋转数据保持不变

    Args:
        path: 至少两个周期对
        expect: 期望的分类（椭圆比较 R mod 1，双曲比较 k）
        rotation_tol: R mod 1 的比较容差

    Returns:
        HomotopyReport
    """
    if len(path) < 2:
        raise ValueError("路径至少包含两个周期对")
    tol = spec_cfg.rotation_tol if rotation_tol is None else rotation_tol

    report = HomotopyReport(passed=True)
    for i, pair in enumerate(path):
        cls = classify(pair, steps)
        report.entries.append(cls)
        if cls.kind == OrbitKind.DEGENERATE:
            report.failures.append((i, "退化"))
        elif not _rotation_matches(cls, expect, tol):
            report.failures.append((i, f"旋转数据不符: {cls.kind.value}, R={cls.rotation_R}, k={cls.rotation_k}"))
    report.passed = not report.failures
    logger.info(f"同伦验证: {'通过' if report.passed else '失败'} ({len(path)} 个点, {len(report.failures)} 处失败)")
    return report


def linear_path(start: PeriodicPair, end: PeriodicPair, steps: int = 20) -> list[PeriodicPair]:
    """从 start 到 end 的线性插值路径（steps+1 个点）"""
    return [start.blend(end, s) for s in np.linspace(0.0, 1.0, steps + 1)]


def canonical_target(cls: Classification, eps: float = 0.05, form: str = "quarter", samples: int | None = None) -> PeriodicPair:
    """分类对应的标准对"""
    if cls.is_elliptic:
        return PeriodicPair.elliptic_canonical(cls.rotation_R, samples)
    if cls.is_hyperbolic:
        return PeriodicPair.hyperbolic_canonical(cls.rotation_k, eps, form, samples)
    raise ClassificationError("退化轨道没有标准形")


def canonical_path(pair: PeriodicPair, steps: int = 20, eps: float = 0.05, form: str = "quarter") -> list[PeriodicPair]:
    """默认候选路径：从 pair 线性插值到其标准对"""
    target = canonical_target(classify(pair), eps, form, pair.n_samples)
    return linear_path(pair, target, steps)
