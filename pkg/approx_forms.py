# approx_forms.py
"""
附录估计
截断插值的接触形式、接触性与 Reeb 场检查、特征值间隙、强制零点论证、
‖·‖★ 范数、柱面算子 ∂_s + L 的逆界，以及收缩映射迭代。

所有函数均为纯函数，τ 扫描与网格求值可由调用方并行。
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.signal import fftconvolve
from scipy.sparse.linalg import eigsh
from scipy.special import expit
from tqdm import tqdm

from config import appendix as cfg
from logger import get_logger
from reeb_linops import PeriodicPair, apply_L, spectrum

logger = get_logger("echlab.appendix")

TWO_PI = 2.0 * math.pi

# 截断函数的过渡区间
BUMP_INNER = 5.0 / 16.0
BUMP_OUTER = 7.0 / 16.0
GAP_TOL = 1e-9
STAR_EXPONENT = 0.01
EXTERIOR_TOL = 1e-6

# 中心差分模板 (偏移, 权重)
_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1.0 / 12.0), (1, 8.0 / 12.0), (-1, -8.0 / 12.0), (-2, 1.0 / 12.0)),
}


class FormDomainError(ValueError):
    """参数或采样网格不合法"""


class StarNormError(ValueError):
    """网格太粗，‖·‖★ 中的小球无法分辨"""


class SupportError(ValueError):
    """扰动与声明的支集或上界不符"""


class ContractionBoundsError(ValueError):
    """收缩常数不满足迭代的前提"""


class ReebSingularError(RuntimeError):
    """某点处 a∧da 不为正，Reeb 场方程奇异"""

    def __init__(self, message: str, location: tuple[float, float, float] | None = None):
        super().__init__(message if location is None else f"{message} (t, x, y)={location}")
        self.location = location


class DegenerateFamilyError(RuntimeError):
    """算子族在某个 (τ, q) 处出现零特征值"""

    def __init__(self, message: str, tau: float | None = None, q: int | None = None, gap: float | None = None):
        parts = [message]
        if tau is not None:
            parts.append(f"τ={tau:.6g}")
        if q is not None:
            parts.append(f"q={q}")
        super().__init__(" ".join(parts))
        self.tau = tau
        self.q = q
        self.gap = gap


class SingularOperatorError(RuntimeError):
    """离散化后的 L 不可逆"""


class ContractionError(RuntimeError):
    """迭代离开球或预算耗尽"""

    def __init__(self, message: str, iteration: int, estimate: float):
        super().__init__(f"{message} (第 {iteration} 步, 估计值 {estimate:.6g})")
        self.iteration = iteration
        self.estimate = estimate


# ============ 截断函数 ============

def _bump_variable(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise FormDomainError("截断函数只在 x ≥ 0 上定义")
    return (x - BUMP_INNER) / (BUMP_OUTER - BUMP_INNER)


def bump(x: np.ndarray | float) -> np.ndarray | float:
    """光滑截断 χ：[0, 5/16] 上为 1，[7/16, ∞) 上为 0

    过渡段用 e^{−1/y} 的比值 ψ(1−u)/(ψ(1−u) + ψ(u)) 构造，u 为归一化到 [0, 1] 的变量。
    """
    u = _bump_variable(x)
    inner = (u > 0) & (u < 1)
    uc = np.where(inner, u, 0.5)
    z = 1.0 / uc - 1.0 / (1.0 - uc)
    out = np.where(u <= 0, 1.0, np.where(u >= 1, 0.0, expit(z)))
    return float(out) if out.ndim == 0 else out


def bump_derivative(x: np.ndarray | float) -> np.ndarray | float:
    """χ′(x)"""
    u = _bump_variable(x)
    # 端点附近导数下溢为 0
    inner = (u > 1e-3) & (u < 1 - 1e-3)
    uc = np.where(inner, u, 0.5)
    z = 1.0 / uc - 1.0 / (1.0 - uc)
    sig = expit(z)
    dz = -(1.0 / uc ** 2 + 1.0 / (1.0 - uc) ** 2)
    out = np.where(inner, sig * (1.0 - sig) * dz / (BUMP_OUTER - BUMP_INNER), 0.0)
    return float(out) if out.ndim == 0 else out


def tau_rho(z: np.ndarray | complex, k: int, Q: int, rho: float) -> np.ndarray | float:
    """τ_ρ = k/Q + χ(|z|/ρ)/Q"""
    if Q < 1:
        raise FormDomainError(f"Q 必须 ≥ 1，当前 {Q}")
    if rho <= 0:
        raise FormDomainError(f"ρ 必须为正，当前 {rho}")
    return (k + bump(np.abs(z) / rho)) / Q


def tau_rho_derivative_bounds(Q: int, rho: float, points: int = 4001) -> tuple[float, float]:
    """在径向网格上测量 sup|dτ_ρ| 与 sup|∇dτ_ρ|

    径向函数的 Hessian 特征值为 τ″ 与 τ′/r。
    """
    if Q < 1 or rho <= 0:
        raise FormDomainError(f"需要 Q ≥ 1 且 ρ > 0，当前 Q={Q}, ρ={rho}")
    r = rho * np.linspace(0.0, 1.0, points)[1:]
    d1 = np.asarray(bump_derivative(r / rho)) / (Q * rho)
    d2 = np.gradient(d1, r, edge_order=2)
    sup_grad = float(np.max(np.abs(d1)))
    sup_hess = float(max(np.max(np.abs(d2)), np.max(np.abs(d1 / r))))
    return sup_grad, sup_hess


# ============ 周期对族 ============

@dataclass(frozen=True, eq=False)
class PairFamily:
    """τ ∈ [0, 1] 参数化的周期对族 τ ↦ (ν_τ, μ_τ)

    nu_fn、mu_fn 按 (τ, t) 向量化并支持广播。
    """
    nu_fn: Callable[[Any, np.ndarray], np.ndarray]
    mu_fn: Callable[[Any, np.ndarray], np.ndarray]
    samples: int | None = None

    @classmethod
    def constant(cls, pair: PeriodicPair) -> "PairFamily":
        return cls(
            lambda tau, t: pair.nu_at(t) + 0.0 * np.asarray(tau),
            lambda tau, t: pair.mu_at(t) + 0.0 * np.asarray(tau),
            pair.n_samples,
        )

    @classmethod
    def linear(cls, start: PeriodicPair, end: PeriodicPair) -> "PairFamily":
        """(1−τ)·start + τ·end"""
        return cls(
            lambda tau, t: (1.0 - np.asarray(tau)) * start.nu_at(t) + np.asarray(tau) * end.nu_at(t),
            lambda tau, t: (1.0 - np.asarray(tau)) * start.mu_at(t) + np.asarray(tau) * end.mu_at(t),
            max(start.n_samples, end.n_samples),
        )

    def at(self, tau: float) -> PeriodicPair:
        return PeriodicPair.from_functions(
            lambda t: self.nu_fn(tau, t),
            lambda t: self.mu_fn(tau, t),
            self.samples,
        )


def as_family(source: PairFamily | PeriodicPair) -> PairFamily:
    return source if isinstance(source, PairFamily) else PairFamily.constant(source)


# ============ 插值接触形式 ============

# tail(t, x, y) 返回 (b_t, b_x, b_y)
TailFn = Callable[[np.ndarray, np.ndarray, np.ndarray], Sequence[np.ndarray]]
FormFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FormField:
    """S¹ × {|z| ≤ radius} 上采样的 1-形式 a 与 2-形式 da

    a 的分量顺序为 (dt, dx, dy)，da 的分量顺序为 (dt∧dx, dt∧dy, dx∧dy)，
    数组形状均为 (3, n_t, n_xy, n_xy)，x 沿第二个网格轴，y 沿第三个。
    """
    ell: float
    k: int
    Q: int
    rho: float
    radius: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    da: np.ndarray
    tau: np.ndarray
    family: PairFamily
    evaluator: FormFn
    fd_step: float

    @property
    def scale(self) -> float:
        """ℓ/2π"""
        return self.ell / TWO_PI

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.t[:, None, None], self.x[None, :, None], self.y[None, None, :]

    def disk_mask(self) -> np.ndarray:
        _, X, Y = self.mesh()
        return np.broadcast_to(X ** 2 + Y ** 2 <= self.radius ** 2 * (1 + 1e-12), self.a.shape[1:])

    def volume_coefficient(self) -> np.ndarray:
        """a∧da 对 dt∧dx∧dy 的系数"""
        a_t, a_x, a_y = self.a
        f_tx, f_ty, f_xy = self.da
        return a_t * f_xy - a_x * f_ty + a_y * f_tx


def _tail_values(tail: TailFn, t, x, y, shape) -> np.ndarray:
    try:
        values = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in tail(t, x, y)])
    except Exception as e:
        raise FormDomainError(f"tail 无法在网格上求值: {e}") from e
    if values.shape[0] != 3:
        raise FormDomainError(f"tail 必须返回三个分量，当前 {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise FormDomainError("tail 在网格上取到非有限值")
    return values


def _form_evaluator(family: PairFamily, k: int, Q: int, rho: float, ell: float, tail: TailFn | None) -> FormFn:
    s = ell / TWO_PI

    def evaluate(t, x, y):
        shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(y))
        z = x + 1j * y
        chi = bump(np.abs(z) / rho)
        tau = (k + chi) / Q
        nu = np.real(family.nu_fn(tau, t))
        mu = family.mu_fn(tau, t)
        g = 1.0 - 2.0 * nu * np.abs(z) ** 2 - 2.0 * np.real(mu * np.conj(z) ** 2)
        comps = np.stack([np.broadcast_to(c, shape) for c in (g, -y, x)]).astype(float)
        if tail is not None:
            comps = comps + (1.0 - chi) * _tail_values(tail, t, x, y, shape)
        return s * comps

    return evaluate


def _partials(evaluate: FormFn, t, x, y, h_t: float, h_xy: float, order: int) -> tuple[np.ndarray, ...]:
    """沿 t、x、y 的差分导数，每个结果的形状为 (3, ...)"""
    stencil = _STENCILS[order]
    d_t = sum(w * evaluate(t + m * h_t, x, y) for m, w in stencil) / h_t
    d_x = sum(w * evaluate(t, x + m * h_xy, y) for m, w in stencil) / h_xy
    d_y = sum(w * evaluate(t, x, y + m * h_xy) for m, w in stencil) / h_xy
    return d_t, d_x, d_y


def _exterior(d_t: np.ndarray, d_x: np.ndarray, d_y: np.ndarray) -> np.ndarray:
    f_tx = d_t[1] - d_x[0]
    f_ty = d_t[2] - d_y[0]
    f_xy = d_x[2] - d_y[1]
    return np.stack([f_tx, f_ty, f_xy])


def build_form(
    family: PairFamily | PeriodicPair,
    k: int,
    Q: int,
    rho: float,
    ell: float = TWO_PI,
    tail: TailFn | None = None,
    n_t: int | None = None,
    n_xy: int | None = None,
    radius: float | None = None,
) -> FormField:
    """采样插值形式

        a = (ℓ/2π)[(1 − 2ν_τ|z|² − μ_τz̄² − μ̄_τz²)dt + (i/2)(z dz̄ − z̄ dz) + (1 − χ)·tail]

    其中 τ = τ_ρ(z) 逐点取值，(i/2)(z dz̄ − z̄ dz) = x dy − y dx。

    Args:
        family: τ ∈ [0, 1] 上的周期对族（PeriodicPair 视为常值族）
        k, Q: τ_ρ ∈ [k/Q, (k+1)/Q]
        rho: 截断半径
        ell: 作用量 ℓ
        tail: 高阶项 (b_t, b_x, b_y)，缺省为零
        n_t, n_xy: 网格点数
        radius: 圆盘半径，缺省为 ρ

    Returns:
        FormField，da 由中心差分得到
    """
    family = as_family(family)
    if Q < 1 or not (0 <= k < Q):
        raise FormDomainError(f"需要 0 ≤ k < Q，当前 k={k}, Q={Q}")
    if rho <= 0 or ell <= 0:
        raise FormDomainError(f"ρ 与 ℓ 必须为正，当前 ρ={rho}, ℓ={ell}")
    n_t = n_t or cfg.n_t
    n_xy = n_xy or cfg.n_xy
    radius = radius or rho
    if n_xy < 5 or n_xy % 2 == 0:
        raise FormDomainError(f"n_xy 必须为不小于 5 的奇数（网格需包含 z=0），当前 {n_xy}")

    t = TWO_PI * np.arange(n_t) / n_t
    half = n_xy // 2
    x = radius * np.arange(-half, half + 1) / half
    y = x.copy()
    T, X, Y = t[:, None, None], x[None, :, None], y[None, None, :]

    evaluate = _form_evaluator(family, k, Q, rho, ell, tail)
    a = evaluate(T, X, Y)
    h = 1e-4 * rho
    da = _exterior(*_partials(evaluate, T, X, Y, 1e-4, h, order=2))
    tau = np.asarray(tau_rho(X + 1j * Y, k, Q, rho))[0]

    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(da))):
        raise FormDomainError("形式在网格上取到非有限值")
    logger.debug(f"插值形式: k={k}, Q={Q}, ρ={rho}, 网格 {n_t}×{n_xy}²")
    return FormField(
        ell=ell, k=k, Q=Q, rho=rho, radius=radius,
        t=t, x=x, y=y, a=a, da=da, tau=tau,
        family=family, evaluator=evaluate, fd_step=h,
    )


def exterior_derivative_check(form: FormField) -> float:
    """用更宽步长的四阶模板重算 d(a)，返回与存储的 da 的最大偏差"""
    T, X, Y = form.mesh()
    recomputed = _exterior(*_partials(form.evaluator, T, X, Y, 1e-3, 10.0 * form.fd_step, order=4))
    return float(np.max(np.abs(recomputed - form.da)))


@dataclass
class ContactReport:
    min_coefficient: float
    location: tuple[float, float, float]
    model_value: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_coefficient": self.min_coefficient,
            "location": list(self.location),
            "model_value": self.model_value,
            "passed": self.passed,
        }


def _grid_point(form: FormField, flat_index: int) -> tuple[float, float, float]:
    i, j, l = np.unravel_index(flat_index, form.a.shape[1:])
    return float(form.t[i]), float(form.x[j]), float(form.y[l])


def contact_check(form: FormField) -> ContactReport:
    """a∧da 系数在圆盘上的最小值；为正则为接触形式"""
    coef = np.where(form.disk_mask(), form.volume_coefficient(), np.inf)
    idx = int(np.argmin(coef))
    min_coef = float(coef.ravel()[idx])
    report = ContactReport(
        min_coefficient=min_coef,
        location=_grid_point(form, idx),
        model_value=2.0 * form.scale ** 2,
        passed=min_coef > 0,
    )
    logger.info(f"接触性检查: min a∧da = {min_coef:.6g} ({'通过' if report.passed else '失败'})")
    return report


@dataclass
class ReebReport:
    sup_ratio: float
    sup_slope: float
    origin_error: float
    annulus: tuple[float, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sup_ratio": self.sup_ratio,
            "sup_slope": self.sup_slope,
            "origin_error": self.origin_error,
            "annulus": list(self.annulus),
        }


def reeb_field(form: FormField) -> np.ndarray:
    """真正的 Reeb 场 v：a(v) = 1，da(v, ·) = 0

    da 的核由 (F_xy, −F_ty, F_tx) 张成，按 a 归一化。
    """
    coef = form.volume_coefficient()
    bad = ~(coef > 1e-12 * form.scale ** 2)
    if np.any(bad):
        idx = int(np.argmax(bad.ravel()))
        raise ReebSingularError("a∧da 在网格上不为正", _grid_point(form, idx))
    f_tx, f_ty, f_xy = form.da
    return np.stack([f_xy, -f_ty, f_tx]) / coef


def model_reeb_field(form: FormField) -> np.ndarray:
    """模型 Reeb 场 (2π/ℓ)(∂_t + ż)，ż = 2i(ν_τ z + μ_τ z̄)，τ 逐点取 τ_ρ(z)"""
    T, X, Y = form.mesh()
    tau = form.tau[None, :, :]
    z = X + 1j * Y
    zdot = 2j * (np.real(form.family.nu_fn(tau, T)) * z + form.family.mu_fn(tau, T) * np.conj(z))
    shape = form.a.shape[1:]
    comps = [np.ones(shape), np.broadcast_to(zdot.real, shape), np.broadcast_to(zdot.imag, shape)]
    return np.stack(comps) / form.scale


def reeb_check(form: FormField) -> ReebReport:
    """真 Reeb 场与模型场之差

    sup_ratio = sup |Δv|/(|z|/Q)，sup_slope = sup |Δv|/|z|，在 |z| ∈ [ρ/8, ρ] 上取。
    """
    diff = np.linalg.norm(reeb_field(form) - model_reeb_field(form), axis=0)
    _, X, Y = form.mesh()
    r = np.broadcast_to(np.hypot(X, Y), diff.shape)
    lo, hi = form.rho / 8.0, form.rho
    annulus = (r >= lo) & (r <= hi * (1 + 1e-12))
    slope = diff[annulus] / r[annulus]
    origin = r <= 1e-15
    report = ReebReport(
        sup_ratio=float(np.max(slope) * form.Q),
        sup_slope=float(np.max(slope)),
        origin_error=float(np.max(diff[origin])) if np.any(origin) else float("nan"),
        annulus=(lo, hi),
    )
    logger.info(f"Reeb 场检查: sup 比值 {report.sup_ratio:.4g}, 原点误差 {report.origin_error:.2e}")
    return report


# ============ 特征值间隙 ============

@dataclass
class EigenGapResult:
    lambda0: float
    tau: float
    q: int
    table: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"lambda0": self.lambda0, "tau": self.tau, "q": self.q, "table": self.table}


def eigen_gap(
    family: PairFamily | PeriodicPair,
    tau_grid: int | Sequence[float] = 21,
    q_max: int = 1,
    n_modes: int | None = None,
    show_progress: bool = False,
) -> EigenGapResult:
    """λ₀ = min_{τ, q ≤ q_max} min|spec L_{τ}|

    Raises:
        DegenerateFamilyError: 某个采样点的间隙低于 10⁻⁹，附带 (τ, q)
    """
    if q_max < 1:
        raise ValueError(f"q_max 必须 ≥ 1，当前 {q_max}")
    family = as_family(family)
    taus = np.linspace(0.0, 1.0, tau_grid) if np.isscalar(tau_grid) else np.asarray(tau_grid, dtype=float)

    best = EigenGapResult(lambda0=math.inf, tau=float("nan"), q=0)
    for tau in tqdm(taus, desc="特征值间隙", disable=not show_progress):
        pair = family.at(float(tau))
        for q in range(1, q_max + 1):
            gap = spectrum(pair, q, n_modes).min_abs
            best.table.append({"tau": float(tau), "q": q, "gap": gap})
            if gap < GAP_TOL:
                raise DegenerateFamilyError("算子族出现零特征值", tau=float(tau), q=q, gap=gap)
            if gap < best.lambda0:
                best.lambda0, best.tau, best.q = gap, float(tau), q
    logger.info(f"特征值间隙 λ₀ = {best.lambda0:.6g} (τ={best.tau:.4g}, q={best.q})")
    return best


# ============ 强制零点 ============

def _to_real(values: np.ndarray) -> np.ndarray:
    return np.concatenate([values.real, values.imag], axis=-1)


def _to_complex(coords: np.ndarray) -> np.ndarray:
    n = coords.shape[-1] // 2
    return coords[..., :n] + 1j * coords[..., n:]


def _loop_samples(pair: PeriodicPair, q: int, n_t: int | None) -> int:
    n_t = n_t or max(cfg.n_t, 8 * q * (pair.fourier_extent() + 1))
    if n_t < 8:
        raise FormDomainError(f"圆周采样点至少为 8，当前 {n_t}")
    return n_t


def loop_operator(pair: PeriodicPair, q: int, n_t: int) -> np.ndarray:
    """L 在 [0, 2πq) 均匀采样上的实对称矩阵，坐标为 (Re ζ, Im ζ)"""
    basis = np.eye(n_t)
    columns = [_to_real(apply_L(pair, e.astype(complex), q).values) for e in basis]
    columns += [_to_real(apply_L(pair, 1j * e, q).values) for e in basis]
    mat = np.column_stack(columns)
    return 0.5 * (mat + mat.T)


@dataclass
class ForcedZeroReport:
    arithmetic_ok: bool
    q_required: int
    inverse_norm: float
    contraction_bound: float
    empirical_lipschitz: float
    iterate_norm: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def forced_zero_check(
    lambda0: float,
    c0_bound: float,
    Q: int,
    ball_radius: float,
    pair: PeriodicPair,
    q: int = 1,
    n_t: int | None = None,
    trials: int = 32,
    rng: np.random.Generator | None = None,
) -> ForcedZeroReport:
    """小截面上 Lz + τ(z) = 0 只有零解的两部分判据

    (i) 算术条件 Q⁻¹ ≤ λ₀/(100·c₀)；
    (ii) 对合成的最坏非线性 τ(z) = c₀(z/Q + |z|z)，映射 z ↦ −L⁻¹τ(z) 在给定半径的球上
        Lipschitz 常数 ‖L⁻¹‖·c₀(1/Q + 2r) < 1，并用随机样本与迭代做数值印证。
    """
    if lambda0 <= 0 or c0_bound < 0 or Q < 1 or ball_radius <= 0:
        raise ValueError(f"参数不合法: λ₀={lambda0}, c₀={c0_bound}, Q={Q}, r={ball_radius}")
    rng = rng or np.random.default_rng(0)
    n_t = _loop_samples(pair, q, n_t)

    lmat = loop_operator(pair, q, n_t)
    smin = float(linalg.svdvals(lmat).min())
    if smin < GAP_TOL:
        raise SingularOperatorError(f"离散化的 L 不可逆 (σ_min={smin:.2e}, q={q})")
    lu = linalg.lu_factor(lmat)

    def step(z: np.ndarray) -> np.ndarray:
        tau = c0_bound * (z / Q + np.abs(z) * z)
        return -_to_complex(linalg.lu_solve(lu, _to_real(tau)))

    def sample() -> np.ndarray:
        radius = ball_radius * np.sqrt(rng.uniform(size=n_t))
        return radius * np.exp(1j * rng.uniform(0.0, TWO_PI, size=n_t))

    inverse_norm = 1.0 / smin
    bound = inverse_norm * c0_bound * (1.0 / Q + 2.0 * ball_radius)

    lipschitz = 0.0
    for _ in range(trials):
        z1, z2 = sample(), sample()
        lipschitz = max(lipschitz, float(np.linalg.norm(step(z1) - step(z2)) / np.linalg.norm(z1 - z2)))

    z = sample()
    for _ in range(cfg.contraction_budget):
        z = step(z)
        if np.linalg.norm(z) < 1e-14:
            break
    iterate_norm = float(np.linalg.norm(z) / math.sqrt(n_t))

    arithmetic_ok = 100.0 * c0_bound <= lambda0 * Q
    q_required = math.ceil(100.0 * c0_bound / lambda0) if c0_bound > 0 else 1
    report = ForcedZeroReport(
        arithmetic_ok=arithmetic_ok,
        q_required=q_required,
        inverse_norm=inverse_norm,
        contraction_bound=bound,
        empirical_lipschitz=lipschitz,
        iterate_norm=iterate_norm,
        passed=arithmetic_ok and bound < 1.0 and iterate_norm < 1e-8,
    )
    logger.info(
        f"强制零点: 算术条件 {'满足' if arithmetic_ok else f'不满足 (需 Q ≥ {q_required})'}, "
        f"收缩常数 {bound:.4g}"
    )
    return report


# ============ 柱面上的场与 ‖·‖★ ============

@dataclass(frozen=True, eq=False)
class CylinderField:
    """[−S, S] × (ℝ/2πqℤ) 上的复值场，形状 (n_s, n_t)，s 方向含两端点"""
    values: np.ndarray
    S: float
    q: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.ndim != 2 or values.shape[0] < 3 or values.shape[1] < 4:
            raise FormDomainError(f"柱面场形状不合法: {values.shape}")
        if self.S <= 0 or self.q < 1:
            raise FormDomainError(f"需要 S > 0 且 q ≥ 1，当前 S={self.S}, q={self.q}")
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, S: float, n_s: int, n_t: int, q: int = 1) -> "CylinderField":
        return cls(np.zeros((n_s, n_t), dtype=complex), S, q)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], S: float, n_s: int, n_t: int, q: int = 1) -> "CylinderField":
        s = np.linspace(-S, S, n_s)[:, None]
        t = (TWO_PI * q * np.arange(n_t) / n_t)[None, :]
        return cls(np.broadcast_to(np.asarray(fn(s, t), dtype=complex), (n_s, n_t)).copy(), S, q)

    @property
    def n_s(self) -> int:
        return self.values.shape[0]

    @property
    def n_t(self) -> int:
        return self.values.shape[1]

    @property
    def s(self) -> np.ndarray:
        return np.linspace(-self.S, self.S, self.n_s)

    @property
    def t(self) -> np.ndarray:
        return TWO_PI * self.q * np.arange(self.n_t) / self.n_t

    @property
    def ds(self) -> float:
        return 2.0 * self.S / (self.n_s - 1)

    @property
    def dt(self) -> float:
        return TWO_PI * self.q / self.n_t

    def with_values(self, values: np.ndarray) -> "CylinderField":
        return CylinderField(values, self.S, self.q)

    def _check_same(self, other: "CylinderField"):
        if self.values.shape != other.values.shape or self.S != other.S or self.q != other.q:
            raise FormDomainError("两个柱面场的网格不一致")

    def __add__(self, other: "CylinderField") -> "CylinderField":
        self._check_same(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "CylinderField") -> "CylinderField":
        self._check_same(other)
        return self.with_values(self.values - other.values)

    def scaled(self, factor: complex) -> "CylinderField":
        return self.with_values(factor * self.values)


def _ball_kernel(radius: float, ds: float, dt: float) -> np.ndarray:
    ns, nt = int(radius / ds), int(radius / dt)
    i = (np.arange(-ns, ns + 1) * ds)[:, None]
    j = (np.arange(-nt, nt + 1) * dt)[None, :]
    return (i ** 2 + j ** 2 <= radius ** 2 * (1 + 1e-12)).astype(float)


def star_norm(field: CylinderField) -> float:
    """‖ζ‖★² = ∫|ζ|² + 2^{1/100}·max_x sup_z x^{−1/100} ∫_{dist(z,·)<x} |ζ|²

    半径 x 取 1, 1/2, 1/4, … 直到网格尺寸；t 方向周期延拓，s 方向在 ±S 之外补零。
    """
    ds, dt = field.ds, field.dt
    if max(ds, dt) > cfg.star_resolution * (1 + 1e-12):
        raise StarNormError(f"网格太粗: ds={ds:.4g}, dt={dt:.4g} > {cfg.star_resolution}")

    density = np.abs(field.values) ** 2
    weights = np.full(field.n_s, ds)
    weights[[0, -1]] *= 0.5
    l2 = float(np.sum(density * weights[:, None]) * dt)

    cell = density * ds * dt
    ladder = 0.0
    radius = 1.0
    while radius >= max(ds, dt) * (1 - 1e-12):
        kernel = _ball_kernel(radius, ds, dt)
        ps, pt = kernel.shape[0] // 2, kernel.shape[1] // 2
        padded = np.pad(np.pad(cell, ((0, 0), (pt, pt)), mode="wrap"), ((ps, ps), (0, 0)))
        mass = fftconvolve(padded, kernel, mode="valid")
        ladder = max(ladder, radius ** (-STAR_EXPONENT) * float(mass.max()))
        radius /= 2.0
    return math.sqrt(l2 + 2.0 ** STAR_EXPONENT * max(ladder, 0.0))


# ============ 柱面算子 ∂_s + L ============

def ramp_u(s: np.ndarray | float, R: float) -> np.ndarray | float:
    """Lipschitz 截断：|s| ≤ R 为 0，[R, 2R] 上为 |s|/R − 1，之外为 1"""
    if R <= 0:
        raise ValueError(f"R 必须为正，当前 {R}")
    out = np.clip(np.abs(np.asarray(s, dtype=float)) / R - 1.0, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


class CylinderOperator:
    """截断柱面 [−S, S] × (ℝ/2πqℤ) 上的 ∂_s + L

    节点 s_0..s_n 上取值，两端为零；方程写在中点上：
        (f_{j+1} − f_j)/h + L(f_{j+1} + f_j)/2
    这样交叉项逐段抵消，‖(∂_s + L)f‖² = ‖∂_s f‖² + ‖Lf‖² 在离散层面同样成立。
    L 对角化后按特征值解耦为三对角问题。
    """

    def __init__(self, pair: PeriodicPair, q: int = 1, S: float = 8.0, n_s: int = 129, n_t: int | None = None):
        if S <= 0 or n_s < 4:
            raise FormDomainError(f"需要 S > 0 且 n_s ≥ 4，当前 S={S}, n_s={n_s}")
        self.pair = pair
        self.q = q
        self.S = float(S)
        self.n_s = n_s
        self.n_t = _loop_samples(pair, q, n_t)
        self.h = 2.0 * self.S / (n_s - 1)
        self.loop = loop_operator(pair, q, self.n_t)
        self.eigenvalues, self.eigenvectors = linalg.eigh(self.loop)

    @property
    def intervals(self) -> int:
        return self.n_s - 1

    @property
    def min_abs_eigenvalue(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def _band(self, lam: float) -> tuple[float, float]:
        """单个特征值上法方程的 (对角, 次对角)"""
        alpha = 1.0 / self.h + lam / 2.0
        beta = -1.0 / self.h + lam / 2.0
        return alpha * alpha + beta * beta, alpha * beta

    def sigma_min(self) -> float:
        """最小奇异值；‖(∂_s + λ)f‖² 随 λ² 单调，只需看 |λ| 最小的特征值"""
        lam = float(self.eigenvalues[np.argmin(np.abs(self.eigenvalues))])
        d, e = self._band(lam)
        m = self.intervals - 1
        low = linalg.eigvalsh_tridiagonal(
            np.full(m, d), np.full(m - 1, e), select="i", select_range=(0, 0)
        )[0]
        return math.sqrt(max(float(low), 0.0))

    @property
    def inverse_norm(self) -> float:
        return 1.0 / self.sigma_min()

    def _coords(self, field: CylinderField) -> np.ndarray:
        if field.values.shape != (self.n_s, self.n_t) or field.q != self.q:
            raise FormDomainError("柱面场与算子的网格不一致")
        coords = _to_real(field.values)
        coords[[0, -1]] = 0.0
        return coords

    def apply(self, field: CylinderField) -> np.ndarray:
        """中点上的 (∂_s + L)f，形状 (n_s−1, n_t)"""
        x = self._coords(field)
        out = (x[1:] - x[:-1]) / self.h + 0.5 * (x[1:] + x[:-1]) @ self.loop.T
        return _to_complex(out)

    def solve(self, source: CylinderField) -> CylinderField:
        """最小二乘意义下解 (∂_s + L)f = A·source，A 为取中点平均"""
        y = _to_real(source.values)
        mid = 0.5 * (y[1:] + y[:-1]) @ self.eigenvectors
        m = self.intervals - 1
        solution = np.zeros((m, mid.shape[1]))
        ab = np.zeros((2, m))
        for col, lam in enumerate(self.eigenvalues):
            alpha = 1.0 / self.h + lam / 2.0
            beta = -1.0 / self.h + lam / 2.0
            d, e = self._band(lam)
            rhs = alpha * mid[:-1, col] + beta * mid[1:, col]
            ab[0, 1:] = e
            ab[1, :] = d
            solution[:, col] = linalg.solveh_banded(ab, rhs)
        coords = np.zeros((self.n_s, mid.shape[1]))
        coords[1:-1] = solution @ self.eigenvectors.T
        return CylinderField(_to_complex(coords), self.S, self.q)

    def sparse_matrix(self, perturbation: np.ndarray | None = None) -> sparse.csr_matrix:
        """整体矩阵，行按中点、列按内部节点排列；perturbation 为中点上的复乘子 (n_s−1, n_t)"""
        n = self.intervals
        dim = 2 * self.n_t
        ident = sparse.identity(dim, format="csr")
        diff = sparse.diags([1.0 / self.h, -1.0 / self.h], [0, -1], shape=(n, n - 1))
        avg = sparse.diags([0.5, 0.5], [0, -1], shape=(n, n - 1))
        mat = sparse.kron(diff, ident) + sparse.kron(avg, sparse.csr_matrix(self.loop))
        if perturbation is not None:
            blocks = []
            for row in np.asarray(perturbation, dtype=complex):
                re, im = sparse.diags(row.real), sparse.diags(row.imag)
                blocks.append(sparse.bmat([[re, -im], [im, re]]))
            mat = mat + sparse.block_diag(blocks) @ sparse.kron(avg, ident)
        return mat.tocsr()


@dataclass
class CylinderBounds:
    inverse_norm: float
    sigma_min: float
    min_abs_eigenvalue: float
    fourier_prediction: float
    relative_deviation: float
    sensitivity: float
    S: float
    n_s: int
    n_t: int

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def cylinder_inverse_norm(
    pair: PeriodicPair,
    q: int = 1,
    S: float | None = None,
    n_s: int | None = None,
    n_t: int | None = None,
) -> CylinderBounds:
    """σ★ = 1/σ_min(∂_s + L)，与 Fourier 预测 1/min|λ| 对照

    S 缺省取 max(6/λ₀, 4)，s 方向步长缺省取 star_resolution；
    sensitivity 为 S 加倍后 σ★ 的相对变化。
    """
    gap = spectrum(pair, q).min_abs
    if gap <= GAP_TOL:
        raise DegenerateFamilyError("L 的间隙为零", q=q, gap=gap)
    S = S or max(6.0 / gap, 4.0)
    n_s = n_s or math.ceil(2.0 * S / cfg.star_resolution) + 1

    op = CylinderOperator(pair, q, S, n_s, n_t)
    if op.min_abs_eigenvalue <= GAP_TOL:
        raise DegenerateFamilyError("离散化的 L 间隙为零", q=q, gap=op.min_abs_eigenvalue)
    sigma = op.sigma_min()
    wider = CylinderOperator(pair, q, 2.0 * S, 2 * n_s - 1, op.n_t).sigma_min()

    prediction = 1.0 / gap
    bounds = CylinderBounds(
        inverse_norm=1.0 / sigma,
        sigma_min=sigma,
        min_abs_eigenvalue=op.min_abs_eigenvalue,
        fourier_prediction=prediction,
        relative_deviation=abs(1.0 / sigma - prediction) / prediction,
        sensitivity=abs(1.0 / wider - 1.0 / sigma) * sigma,
        S=S,
        n_s=n_s,
        n_t=op.n_t,
    )
    logger.info(
        f"σ★ = {bounds.inverse_norm:.6g} (Fourier 预测 {prediction:.6g}, "
        f"偏差 {bounds.relative_deviation:.2%})"
    )
    return bounds


@dataclass
class PerturbationReport:
    sigma_unperturbed: float
    sigma_perturbed: float
    bound: float
    sup_p: float
    margin: float
    passed: bool
    split_lhs: float
    split_rhs: float

    @property
    def splitting_holds(self) -> bool:
        return self.split_rhs <= self.split_lhs * (1 + 1e-9)

    def to_dict(self) -> dict[str, Any]:
        out = dict(self.__dict__)
        out["splitting_holds"] = self.splitting_holds
        return out


def perturbed_invertibility(
    pair: PeriodicPair,
    q: int,
    p_field: Callable[[np.ndarray, np.ndarray], np.ndarray],
    sup_bound: float,
    support: str = "everywhere",
    R: float = 2.0,
    S: float = 8.0,
    n_s: int = 65,
    n_t: int | None = None,
) -> PerturbationReport:
    """∂_s + L + p 的最小奇异值

    support="far" 声明 p 只在 |s| > 2R 处非零，"everywhere" 不加限制。
    裕度取 sup|p|·σ★ + 1/R；裕度小于 1 且 σ(∂_s + L + p) ≥ (1 − 裕度)·σ(∂_s + L) 时通过。
    同时对最小奇异向量 η 报告分裂不等式两侧：
        ‖(D + p)η‖²  与  ‖u_R²(D + p)η‖² + ‖(1 − u_R)²Dη‖²
    """
    if support not in ("far", "everywhere"):
        raise ValueError(f"未知的支集类型: {support}")
    if support == "far" and 2.0 * R >= S:
        raise SupportError(f"远端支集要求 2R < S，当前 R={R}, S={S}")

    op = CylinderOperator(pair, q, S, n_s, n_t)
    s = np.linspace(-S, S, n_s)
    s_mid = 0.5 * (s[1:] + s[:-1])
    t = TWO_PI * q * np.arange(op.n_t) / op.n_t
    try:
        p = np.broadcast_to(np.asarray(p_field(s_mid[:, None], t[None, :]), dtype=complex), (s_mid.size, op.n_t))
    except Exception as e:
        raise SupportError(f"扰动无法在网格上求值: {e}") from e

    sup_p = float(np.max(np.abs(p)))
    if sup_p > sup_bound * (1 + 1e-12):
        raise SupportError(f"sup|p| = {sup_p:.6g} 超过声明的上界 {sup_bound:.6g}")
    if support == "far" and np.any(np.abs(p[np.abs(s_mid) <= 2.0 * R]) > 0):
        raise SupportError(f"扰动在 |s| ≤ 2R = {2.0 * R} 处不为零")

    base = op.sparse_matrix()
    full = op.sparse_matrix(p)
    gram = (full.T @ full).tocsc()
    vals, vecs = eigsh(gram, k=1, sigma=0, which="LM")
    sigma_p = math.sqrt(max(float(vals[0]), 0.0))
    sigma_0 = op.sigma_min()

    margin = sup_p / sigma_0 + 1.0 / R
    eta = vecs[:, 0]
    u = np.repeat(ramp_u(s_mid, R), 2 * op.n_t)
    r_full = full @ eta
    r_base = base @ eta
    report = PerturbationReport(
        sigma_unperturbed=sigma_0,
        sigma_perturbed=sigma_p,
        bound=1.0 / sigma_p if sigma_p > 0 else math.inf,
        sup_p=sup_p,
        margin=margin,
        passed=margin < 1.0 and sigma_p >= (1.0 - margin) * sigma_0,
        split_lhs=float(np.sum(r_full ** 2)),
        split_rhs=float(np.sum((u ** 2 * r_full) ** 2) + np.sum(((1.0 - u) ** 2 * r_base) ** 2)),
    )
    logger.info(
        f"扰动可逆性: σ {sigma_0:.4g} → {sigma_p:.4g}, 裕度 {margin:.3g} "
        f"({'通过' if report.passed else '失败'})"
    )
    return report


# ============ 收缩映射 ============

@dataclass(frozen=True)
class ContractionBounds:
    """‖T(η)‖★ ≤ c_C1(‖η‖★² + ρ)，‖T(η) − T(η′)‖★ ≤ c_C2(‖η‖★ + ‖η′‖★)‖η − η′‖★，球半径 σ"""
    c_C1: float
    c_C2: float
    rho: float
    sigma: float

    def __post_init__(self):
        for name in ("c_C1", "c_C2", "rho", "sigma"):
            if not getattr(self, name) > 0:
                raise ContractionBoundsError(f"{name} 必须为正，当前 {getattr(self, name)}")

    def check_recipe(self):
        """ρ < c_C1⁻²/8 且 σ < (c_C1 + c_C2)⁻¹/4"""
        if not self.rho < 1.0 / (8.0 * self.c_C1 ** 2):
            raise ContractionBoundsError(f"ρ={self.rho:.4g} 不小于 1/(8c_C1²)={1.0 / (8.0 * self.c_C1 ** 2):.4g}")
        if not self.sigma < 0.25 / (self.c_C1 + self.c_C2):
            raise ContractionBoundsError(f"σ={self.sigma:.4g} 不小于 1/(4(c_C1+c_C2))")

    def to_dict(self) -> dict[str, float]:
        return {"c_C1": self.c_C1, "c_C2": self.c_C2, "rho": self.rho, "sigma": self.sigma}


@dataclass
class ContractionReport:
    fixed_point: CylinderField
    iterations: int
    fixed_point_norm: float
    differences: list[float]
    c1_estimate: float
    c2_estimate: float
    rho: float
    c_C1: float
    c_C2: float

    @property
    def bounds_hold(self) -> bool:
        return self.c1_estimate <= self.c_C1 and self.c2_estimate <= self.c_C2

    @property
    def within_bound(self) -> bool:
        return self.fixed_point_norm <= 2.0 * self.c_C1 * self.rho

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "fixed_point_norm": self.fixed_point_norm,
            "differences": self.differences,
            "c1_estimate": self.c1_estimate,
            "c2_estimate": self.c2_estimate,
            "bounds_hold": self.bounds_hold,
            "within_bound": self.within_bound,
        }


def contraction_solve(
    bounds: ContractionBounds,
    T: Callable[[CylinderField], CylinderField],
    start: CylinderField,
    norm: Callable[[CylinderField], float] = star_norm,
    tol: float | None = None,
    budget: int | None = None,
) -> ContractionReport:
    """从 start 迭代 T 直到相邻两步的差 < tol

    同时由迭代序列估计两个收缩常数。

    Raises:
        ContractionBoundsError: 常数不满足前提
        ContractionError: 迭代离开半径 σ 的球或预算耗尽
    """
    bounds.check_recipe()
    tol = tol or cfg.contraction_tol
    budget = budget or cfg.contraction_budget

    current, current_norm = start, norm(start)
    previous, previous_image = None, None
    differences: list[float] = []
    c1_est = c2_est = 0.0

    for iteration in range(1, budget + 1):
        image = T(current)
        image_norm = norm(image)
        c1_est = max(c1_est, image_norm / (current_norm ** 2 + bounds.rho))
        if previous is not None:
            gap = norm(current - previous)
            denom = (current_norm + norm(previous)) * gap
            if denom > 0:
                c2_est = max(c2_est, norm(image - previous_image) / denom)

        diff = norm(image - current)
        differences.append(diff)
        logger.debug(f"收缩迭代 {iteration}: ‖Δ‖★ = {diff:.3e}")
        if image_norm > bounds.sigma:
            raise ContractionError("迭代离开球", iteration, image_norm)

        previous, previous_image = current, image
        current, current_norm = image, image_norm
        if diff < tol:
            report = ContractionReport(
                fixed_point=current,
                iterations=iteration,
                fixed_point_norm=current_norm,
                differences=differences,
                c1_estimate=c1_est,
                c2_estimate=c2_est,
                rho=bounds.rho,
                c_C1=bounds.c_C1,
                c_C2=bounds.c_C2,
            )
            logger.info(f"收缩迭代收敛: {iteration} 步, ‖η‖★ = {current_norm:.4g}")
            return report

    raise ContractionError("迭代预算耗尽", budget, differences[-1])


@dataclass
class ContractionDemo:
    report: ContractionReport
    sigma_star: float
    bounds: ContractionBounds
    eps: float

    @property
    def norm_limit(self) -> float:
        """不动点范数上限 2σ★ρ"""
        return 2.0 * self.sigma_star * self.bounds.rho

    @property
    def within_norm_limit(self) -> bool:
        return self.report.fixed_point_norm <= self.norm_limit


def contraction_demo(
    pair: PeriodicPair | None = None,
    q: int = 1,
    rho: float = 1e-3,
    eps: float = 0.1,
    S: float = 8.0,
    n_s: int = 129,
    n_t: int = 64,
    start: CylinderField | None = None,
) -> ContractionDemo:
    """柱面上的合成映射 T(η) = −(∂_s + L)⁻¹(ε·η² + ρ·g)，g 为 ‖g‖★ = 1 的固定场

    常数取 c_C1 = 2σ★·max(1, εk)，c_C2 = 2σ★εk，其中 k = (ds·dt)^{−1/2} 控制 sup 范数。
    """
    pair = pair or PeriodicPair.constant(0.15)
    op = CylinderOperator(pair, q, S, n_s, n_t)
    sigma_star = op.inverse_norm

    profile = CylinderField.from_function(
        lambda s, t: np.exp(-s ** 2) * (1.0 + 0.5 * np.cos(t / q)), S, n_s, op.n_t, q
    )
    g = profile.scaled(1.0 / star_norm(profile))
    zero = CylinderField.zeros(S, n_s, op.n_t, q)

    sup_factor = 1.0 / math.sqrt(zero.ds * zero.dt)
    c1 = 2.0 * sigma_star * max(1.0, eps * sup_factor)
    c2 = 2.0 * sigma_star * eps * sup_factor
    bounds = ContractionBounds(c_C1=c1, c_C2=c2, rho=rho, sigma=0.9 * 0.25 / (c1 + c2))

    def T(eta: CylinderField) -> CylinderField:
        source = eta.with_values(eps * eta.values ** 2 + rho * g.values)
        return op.solve(source).scaled(-1.0)

    report = contraction_solve(bounds, T, start or zero)
    return ContractionDemo(report=report, sigma_star=sigma_star, bounds=bounds, eps=eps)
