# main.py
"""
echlab 命令行入口
把各模块的运算映射为子命令，结果写成 JSON 报告（可附 CSV 与 SVG）

使用方式:
    1. 轨道分类:   echlab classify-orbit --db db.json --id g1
    2. ECH 指标:   echlab ech-index --db db.json --theta-minus '' --theta-plus 'g1:1' --qz 0 --c1 0
    3. 闭轨搜索:   echlab orbit-search --pair hyperbolic-canonical:k=2,eps=0.05 --m 2 --grid 5
    4. 涡旋求解:   echlab solve-vortex --zeros 0.5,-0.5 --plot auto
    5. 预览模式:   echlab spectrum --pair constant:nu=0.15 --dry-run

通用参数（写在子命令之后）:
    -v, --verbose   详细输出模式（DEBUG 级别）
    -q, --quiet     静默模式（只输出错误）
    --seed          随机种子（默认 0）
    --no-progress   不显示进度条
    --plot KIND     输出图像（radial-profile / trajectory / residual-map / auto）
    --dry-run       只解析并校验输入
    --db            轨道数据库 JSON
    -o, --out       输出目录
    --grid          网格规模（各子命令含义不同：涡旋网格每边点数、搜索每轴样本数等）
    --steps         积分步数
    --tol           容差

周期对写法:
    constant:nu=0.15,mu=0.1i
    elliptic-canonical:R=0.7
    hyperbolic-canonical:k=2,eps=0.05[,form=half]
    file:pair.json        （含 nu_samples / mu_re_samples / mu_im_samples）

退出码: 0 全部判定通过，1 有判定失败，2 输入或计算出错
"""

import argparse
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from dotenv import load_dotenv

from config import output as out_cfg
from config import spectrum as spec_cfg
from config import validate_config
from logger import get_logger, level_for, setup_logger
import approx_forms
import ech_complex
import local_model
import moduli_dynamics
import orbit_db
import plots
import reeb_linops
import temp_manager
import vortex_solver

# 加载 .env 文件
load_dotenv()

logger = get_logger("echlab")

TWO_PI = 2.0 * math.pi


class UsageError(ValueError):
    """参数组合不合法"""


class PairSpecError(ValueError):
    """周期对写法无法解析"""


# ============ 报告 ============

@dataclass
class RunReport:
    """一次运行的结果

    to_dict 只含确定性的字段；计时单独保存，series 只供画图，不进 JSON。
    """
    command: str
    inputs: dict[str, Any]
    outputs: dict[str, Any] = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)
    timing: dict[str, Any] = field(default_factory=dict)
    series: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def inputs_digest(self) -> str:
        canonical = json.dumps(_jsonable(self.inputs), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "schema_version": out_cfg.schema_version,
            "inputs": _jsonable(self.inputs),
            "inputs_digest": self.inputs_digest,
            "outputs": _jsonable(self.outputs),
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
        }


def _jsonable(value: Any) -> Any:
    """numpy 标量与数组、复数、元组转成 JSON 值；非有限浮点数写成 null"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [_jsonable(value.real), _jsonable(value.imag)]
    if isinstance(value, Path):
        return str(value)
    return value


def _file_digest(path: str | None) -> str | None:
    if not path:
        return None
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError:
        return None


# ============ 输入解析 ============

def parse_complex(text: str) -> complex:
    """接受 0.1i、1-2j、0.5 这样的写法"""
    try:
        return complex(str(text).replace("i", "j").replace(" ", ""))
    except ValueError as e:
        raise PairSpecError(f"无法解析复数: {text}") from e


def parse_pair(text: str, samples: int | None = None) -> reeb_linops.PeriodicPair:
    """按 "kind:key=value,..." 构造 PeriodicPair"""
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    if kind == "file":
        path = Path(rest.strip())
        try:
            return reeb_linops.PeriodicPair.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise PairSpecError(f"无法读取周期对文件 {path}: {e}") from e

    params: dict[str, str] = {}
    for chunk in filter(None, (c.strip() for c in rest.split(","))):
        key, sep, value = chunk.partition("=")
        if not sep:
            raise PairSpecError(f"参数应为 key=value: {chunk}")
        params[key.strip()] = value.strip()

    def number(key: str, default: float | None = None) -> float:
        if key not in params:
            if default is None:
                raise PairSpecError(f"{kind} 缺少参数 {key}")
            return default
        try:
            return float(params[key])
        except ValueError as e:
            raise PairSpecError(f"参数 {key} 不是数值: {params[key]}") from e

    if kind == "constant":
        return reeb_linops.PeriodicPair.constant(number("nu"), parse_complex(params.get("mu", "0")), samples)
    if kind == "elliptic-canonical":
        return reeb_linops.PeriodicPair.elliptic_canonical(number("R"), samples)
    if kind == "hyperbolic-canonical":
        k = number("k")
        if k != int(k):
            raise PairSpecError(f"k 必须是整数: {params['k']}")
        return reeb_linops.PeriodicPair.hyperbolic_canonical(
            int(k), number("eps", 0.05), params.get("form", "quarter"), samples
        )
    raise PairSpecError(f"未知的周期对类型: {kind!r}")


def parse_expect(text: str) -> reeb_linops.Classification:
    """期望分类写成 el:R=0.35 或 hyp:k=2"""
    kind, _, rest = text.partition(":")
    key, _, value = rest.partition("=")
    try:
        if kind == "el" and key == "R":
            return reeb_linops.Classification.elliptic(float(value))
        if kind == "hyp" and key == "k":
            return reeb_linops.Classification.hyperbolic(int(value))
    except ValueError as e:
        raise UsageError(f"无法解析期望分类 {text}: {e}") from e
    raise UsageError(f"期望分类应写成 el:R=... 或 hyp:k=...，当前 {text}")


def parse_modes(text: str) -> list[tuple[int, complex]]:
    """模式列表 0:1,1:0.5i 解析为 [(0, 1), (1, 0.5i)]"""
    modes = []
    for chunk in filter(None, (c.strip() for c in text.split(","))):
        n, sep, c = chunk.partition(":")
        try:
            modes.append((int(n), parse_complex(c) if sep else 1.0 + 0j))
        except ValueError as e:
            raise UsageError(f"无法解析模式 {chunk}") from e
    if not modes:
        raise UsageError("至少需要一个模式")
    return modes


def parse_ints(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(c) for c in text.split(",") if c.strip())
    except ValueError as e:
        raise UsageError(f"无法解析整数向量: {text}") from e


def _require(args: argparse.Namespace, name: str) -> Any:
    value = getattr(args, name, None)
    if value is None:
        raise UsageError(f"{args.command} 需要 --{name.replace('_', '-')}")
    return value


def _pair(args: argparse.Namespace) -> reeb_linops.PeriodicPair:
    return parse_pair(_require(args, "pair"))


def _family(args: argparse.Namespace) -> approx_forms.PairFamily:
    """--pair 给出常数族；再给 --pair-end 时为线性族"""
    start = _pair(args)
    if getattr(args, "pair_end", None):
        return approx_forms.PairFamily.linear(start, parse_pair(args.pair_end))
    return approx_forms.PairFamily.constant(start)


def _load_db(args: argparse.Namespace) -> orbit_db.OrbitDatabase:
    return orbit_db.load_database(_require(args, "db"))


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out)


def _side_file(args: argparse.Namespace, name: str, content: str) -> str:
    path = temp_manager.atomic_write_text(_out_dir(args) / name, content, identifier=args.command)
    return path.name


def _vortex_config(args: argparse.Namespace) -> vortex_solver.VortexConfig:
    return vortex_solver.VortexConfig.parse(_require(args, "zeros"))


def _vortex_grid(args: argparse.Namespace, config: vortex_solver.VortexConfig) -> vortex_solver.VortexGrid:
    return vortex_solver.VortexGrid.default(
        config, points=args.grid, min_half_width=getattr(args, "half_width", None)
    )


def _moduli_model(args: argparse.Namespace) -> moduli_dynamics.ModuliModel | None:
    return moduli_dynamics.ModuliModel(points=args.vortex_points) if args.vortex_points else None


def _show_progress(args: argparse.Namespace) -> bool:
    return not (args.no_progress or args.quiet)


# ============ 子命令 ============

def cmd_classify_orbit(args) -> tuple[dict, dict, dict]:
    source: dict[str, Any] = {}
    if args.id:
        orbit = _load_db(args).get(args.id)
        source = {"id": orbit.id, "action": orbit.action, "homology": list(orbit.homology_class)}
        if orbit.pair is not None:
            cls = reeb_linops.classify(orbit.pair, args.steps, args.tol)
        else:
            cls = orbit.classification
    else:
        cls = reeb_linops.classify(_pair(args), args.steps, args.tol)

    outputs = {"source": source, "classification": cls.to_dict()}
    verdicts = {"nondegenerate": cls.kind != reeb_linops.OrbitKind.DEGENERATE}
    if args.n_max and cls.is_elliptic:
        check = reeb_linops.check_n_elliptic(cls, args.n_max)
        outputs["n_elliptic"] = {"n": args.n_max, "ok": check.ok, "witness": check.witness}
        verdicts["n_elliptic"] = check.ok
    return outputs, verdicts, {}


def cmd_rotation_number(args):
    pair = _pair(args)
    cls = reeb_linops.classify(pair, args.steps, args.tol)
    rotation = cls.rotation_R if cls.is_elliptic else cls.rotation_k
    outputs = {
        "kind": cls.kind.value,
        "rotation": rotation,
        "trace": cls.trace,
        "angle_lift": cls.angle_lift,
        "nondegenerate": reeb_linops.is_nondegenerate(pair, args.steps, args.tol),
    }
    return outputs, {"nondegenerate": cls.kind != reeb_linops.OrbitKind.DEGENERATE}, {}


def cmd_spectrum(args):
    pair = _pair(args)
    result = reeb_linops.spectrum(pair, args.q, args.modes)
    tol = args.tol if args.tol is not None else spec_cfg.crossing_tol
    order = np.argsort(np.abs(result.eigenvalues), kind="stable")[: args.count]
    entries = [
        {
            "eigenvalue": float(result.eigenvalues[i]),
            "primitive_period": result.primitive_period[i],
            "winding": reeb_linops.eigenvector_winding(result, int(i)),
        }
        for i in order
    ]
    invertible = result.min_abs > tol
    eigen_one = reeb_linops.monodromy_power_eigen_one(pair, args.q, args.steps)
    outputs = {
        "q": args.q,
        "min_abs": result.min_abs,
        "max_residual": result.max_residual,
        "closest_to_zero": entries,
        "invertible": invertible,
        "monodromy_power_has_eigenvalue_one": eigen_one,
    }
    return outputs, {"monodromy_consistent": invertible != eigen_one}, {}


def cmd_spectral_flow(args):
    start = _pair(args)
    end = parse_pair(_require(args, "pair_end"))
    grid = np.linspace(0.0, 1.0, args.grid or 21)
    family = reeb_linops.pair_family(lambda tau: start.blend(end, tau), args.q, args.modes or 16, grid)
    value = reeb_linops.spectral_flow(family, args.tol)
    outputs = {"spectral_flow": value, "complex_linear": family.complex_linear, "grid": grid.size}
    return outputs, {}, {}


def cmd_verify_homotopy(args):
    pair = _pair(args)
    if args.expect:
        expect = parse_expect(args.expect)
    else:
        expect = reeb_linops.classify(pair, args.steps, args.tol)
        if expect.kind == reeb_linops.OrbitKind.DEGENERATE:
            raise UsageError("起点退化，请用 --expect 指定期望分类")
    if args.pair_end:
        path = reeb_linops.linear_path(pair, parse_pair(args.pair_end), args.path_steps)
    else:
        path = reeb_linops.canonical_path(pair, args.path_steps, args.eps)
    report = reeb_linops.verify_homotopy(path, expect, steps=args.steps)
    return {"expect": expect.to_dict(), **report.to_dict()}, {"homotopy": report.passed}, {}


def cmd_ech_index(args):
    db = _load_db(args)
    theta_minus = ech_complex.OrbitSet.parse(args.theta_minus)
    theta_plus = ech_complex.OrbitSet.parse(args.theta_plus)
    z = ech_complex.SurfaceData(args.qz, args.c1)
    index = ech_complex.ech_index(theta_minus, theta_plus, z, db.by_id)
    outputs = {"theta_minus": str(theta_minus), "theta_plus": str(theta_plus), "index": index}
    return outputs, {}, {}


def _action_bound(args, db: orbit_db.OrbitDatabase) -> float | None:
    return args.L if args.L is not None else db.L


def cmd_enumerate(args):
    db = _load_db(args)
    L = _action_bound(args, db)
    if L is None:
        raise UsageError("enumerate 需要 --L 或数据库中的 L")
    gamma = parse_ints(args.gamma) if args.gamma is not None else db.gamma
    orbits = db.by_id
    gens = ech_complex.enumerate_generators(list(db.orbits), L, gamma)
    outputs = {
        "L": L,
        "gamma": list(gamma) if gamma is not None else None,
        "count": len(gens),
        "generators": [
            {"orbit_set": str(g), "action": ech_complex.generator_action(g, orbits)} for g in gens
        ],
    }
    return outputs, {}, {}


def _complex_from_counts(args) -> tuple[ech_complex.Differential, dict, int]:
    db = _load_db(args)
    counts = orbit_db.load_counts(_require(args, "counts"), db)
    orbits = db.by_id
    L = _action_bound(args, db)
    if L is not None:
        gamma = parse_ints(args.gamma) if args.gamma is not None else db.gamma
        sets = ech_complex.enumerate_generators(list(db.orbits), L, gamma)
        gens = [ech_complex.Generator.default(s, orbits) for s in sets]
    else:
        gens = counts.generators(orbits)

    p = args.modulus
    if counts.degrees:
        gradings = {s: (d % p if p > 0 else d) for s, d in counts.degrees.items()}
    else:
        anchor = ech_complex.OrbitSet.parse(args.anchor)
        gradings = ech_complex.relative_grading(
            [g.orbit_set for g in gens], anchor, counts.surfaces, p, orbits
        )
    diff = ech_complex.build_differential(gens, counts.counts, gradings, p, orbits)
    return diff, gradings, p


def cmd_differential(args):
    diff, gradings, p = _complex_from_counts(args)
    csv_name = _side_file(args, "differential.csv", diff.to_csv())
    outputs = {
        "modulus": p,
        "generators": [str(g) for g in diff.generators],
        "degrees": diff.degrees(gradings),
        "matrix": diff.matrix,
        "report": diff.report.to_dict(),
        "files": [csv_name],
    }
    return outputs, {"differential": diff.report.ok}, {}


def cmd_homology(args):
    diff, gradings, p = _complex_from_counts(args)
    groups = ech_complex.homology(diff.matrix, diff.degrees(gradings), p)
    outputs = {
        "modulus": p,
        "generators": [str(g) for g in diff.generators],
        "degrees": diff.degrees(gradings),
        "homology": {str(d): g.to_dict() for d, g in sorted(groups.items())},
    }
    return outputs, {"filtration": not diff.report.action_violations}, {}


def _flux_quantized(value: float, n: int) -> bool:
    return 0.98 * n <= value <= 1.005 * n if n else abs(value) < 1e-6


def _radial_series(profile: vortex_solver.RadialProfile, stride: int = 8) -> dict[str, Any]:
    return {"n": profile.n, "r": profile.r[::stride].tolist(), "f": profile.f[::stride].tolist()}


def cmd_solve_vortex(args):
    if args.radial is not None:
        profile = vortex_solver.solve_radial(args.radial, args.r_max, args.grid)
        outputs = profile.to_dict()
        verdicts = {"flux_quantized": _flux_quantized(profile.flux, profile.n)}
        return outputs, verdicts, {"radial_profile": _radial_series(profile)}

    config = _vortex_config(args)
    sol = vortex_solver.solve_planar(config, _vortex_grid(args, config), strict=False)
    csv_path, json_path = vortex_solver.export_solution(sol, _out_dir(args), stem="solve-vortex_grid")
    outputs = sol.to_dict()
    outputs["files"] = [csv_path.name, json_path.name]
    if args.kernel:
        outputs["linearized_min_eigenvalue"] = vortex_solver.linearized_kernel_check(sol)
    verdicts = {
        "residual": sol.residual_report.ok,
        "flux_quantized": _flux_quantized(sol.flux, config.n),
    }
    axis = sol.grid.axis
    series = {"residual_map": {
        "x": (axis + sol.grid.center.real).tolist(),
        "y": (axis + sol.grid.center.imag).tolist(),
        "values": vortex_solver.residual_map(sol).tolist(),
        "label": "curvature",
    }}
    return outputs, verdicts, series


def cmd_vortex_moments(args):
    config = _vortex_config(args)
    sol = vortex_solver.solve_planar(config, _vortex_grid(args, config), strict=False)
    computed = vortex_solver.moments(sol, args.q_max)
    expected = config.power_sums(args.q_max)
    errors = [abs(c - e) / max(abs(e), 1.0) for c, e in zip(computed, expected)]
    outputs = {
        "flux": sol.flux,
        "moments": computed,
        "power_sums": expected,
        "relative_errors": errors,
        "effective_radius": sol.residual_report.effective_radius,
    }
    return outputs, {"moment_identity": max(errors) <= 0.02}, {}


def cmd_vortex_decay(args):
    config = vortex_solver.VortexConfig((0j,) * args.n)
    sol = vortex_solver.solve_planar(config, _vortex_grid(args, config), strict=False)
    rate = vortex_solver.decay_fit(sol, args.r_lo, args.r_hi)
    outputs = {
        "n": args.n,
        "window": [args.r_lo, args.r_hi],
        "decay_rate": rate,
        "reference_rate": math.sqrt(2.0),
        "gradient_energy_bound": vortex_solver.gradient_energy_bound(sol, args.r_lo),
    }
    profile = vortex_solver.solve_radial(args.n)
    return outputs, {"decay_rate": 1.25 <= rate <= 1.5}, {"radial_profile": _radial_series(profile)}


def cmd_hamiltonian(args):
    config = _vortex_config(args)
    sol = vortex_solver.solve_planar(config, _vortex_grid(args, config), strict=False)
    mu = parse_complex(args.mu)
    value = vortex_solver.hamiltonian(sol, args.nu, mu)
    return {"nu": args.nu, "mu": mu, "h": value, "flux": sol.flux}, {}, {}


def _start_point(args) -> moduli_dynamics.ModuliPoint:
    if args.zeros:
        point = moduli_dynamics.ModuliPoint(vortex_solver.VortexConfig.parse(args.zeros).zeros)
        if point.m != args.m:
            raise UsageError(f"--zeros 给出 {point.m} 个零点，与 --m {args.m} 不一致")
        return point
    return moduli_dynamics.ModuliPoint.origin(args.m)


def cmd_flow(args):
    pair = _pair(args)
    trajectory = moduli_dynamics.flow(
        pair, args.m, _start_point(args), args.steps or 64, _moduli_model(args)
    )
    header = trajectory.csv_header()
    rows = trajectory.csv_rows()
    buffer = io.StringIO()
    np.savetxt(buffer, np.asarray(rows), delimiter=",", header=",".join(header), comments="", fmt="%.12e")
    csv_name = _side_file(args, "trajectory.csv", buffer.getvalue())
    final = trajectory.final
    outputs = {
        "m": args.m,
        "final_t": final.t,
        "final_moments": list(final.point.moments),
        "final_zeros": list(final.point.zeros),
        "diverged": trajectory.diverged,
        "escape_time": trajectory.escape_time,
        "energy_drift": moduli_dynamics.energy_drift(trajectory),
        "files": [csv_name],
    }
    return outputs, {}, {"trajectory": {"columns": header, "rows": rows}}


def cmd_orbit_search(args):
    pair = _pair(args)
    report = moduli_dynamics.closed_orbit_search(
        pair, args.m, args.radius, args.grid or 5,
        steps=args.steps or 64,
        model=_moduli_model(args),
        max_seconds=args.max_seconds,
        show_progress=_show_progress(args),
    )
    return report.to_dict(), {"complete": report.complete}, {}


def cmd_floquet(args):
    pair = _pair(args)
    result = moduli_dynamics.linearized_monodromy(
        pair, args.m, delta=args.delta, steps=args.steps or 64, model=_moduli_model(args)
    )
    outputs = {**result.to_dict(), "unit_pair": result.is_unit_pair, "real_pair": result.is_real_pair}
    return outputs, {"symplectic": abs(result.product - 1.0) < 0.02}, {}


def cmd_local_model_check(args):
    modes = parse_modes(args.modes)
    field_ = local_model.superpose([local_model.generate_mode(n, c, args.R, args.ell) for n, c in modes])
    residual = local_model.model_residual(field_)
    holo = local_model.holo_check(field_)
    n_modes = max(spec_cfg.n_modes, max(abs(n) for n, _ in modes) + 4)
    result = reeb_linops.spectrum(reeb_linops.PeriodicPair.elliptic_canonical(args.R), 1, n_modes)
    match = local_model.end_match(field_, result)
    outputs = {
        "R": args.R,
        "ell": args.ell,
        "residual": residual,
        "holo_discrepancy": holo.discrepancy,
        "dbar_norm": holo.dbar_norm,
        "end_match": match.to_dict(),
    }
    verdicts = {"residual": residual < 1e-10, "holo_identity": holo.discrepancy < 1e-9}
    return outputs, verdicts, {}


def cmd_approx_form_check(args):
    family = _family(args)
    form = approx_forms.build_form(family, args.k, args.Q, args.rho, args.ell, n_xy=args.grid)
    contact = approx_forms.contact_check(form)
    reeb = approx_forms.reeb_check(form)
    outputs = {
        "k": args.k,
        "Q": args.Q,
        "rho": args.rho,
        "contact": contact.to_dict(),
        "reeb": reeb.to_dict(),
        "exterior_derivative_error": approx_forms.exterior_derivative_check(form),
    }
    return outputs, {"contact": contact.passed}, {}


def cmd_eigen_gap(args):
    family = _family(args)
    rng = np.random.default_rng(args.seed)
    result = approx_forms.eigen_gap(
        family, args.grid or 21, args.q_max, args.modes, show_progress=_show_progress(args)
    )
    outputs: dict[str, Any] = result.to_dict()
    verdicts: dict[str, bool] = {}
    if args.c0 is not None:
        report = approx_forms.forced_zero_check(
            result.lambda0, args.c0, args.Q, args.ball_radius, family.at(result.tau), q=result.q, rng=rng
        )
        outputs["forced_zero"] = report.to_dict()
        verdicts["forced_zero"] = report.passed
    return outputs, verdicts, {}


def _perturbation(args) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    value = args.p_sup
    reach = 2.0 * args.R

    def p_field(s, t):
        shape = np.broadcast(s, t).shape
        if args.support == "far":
            return np.where(np.abs(s) > reach, value, 0.0) * np.ones(shape)
        return np.full(shape, value)

    return p_field


def cmd_cylinder_bounds(args):
    pair = _pair(args)
    bounds = approx_forms.cylinder_inverse_norm(pair, args.q, args.S, args.n_s)
    outputs: dict[str, Any] = bounds.to_dict()
    verdicts = {"fourier_agreement": bounds.relative_deviation <= 0.05}
    if args.p_sup is not None:
        report = approx_forms.perturbed_invertibility(
            pair, args.q, _perturbation(args), args.p_sup, args.support, args.R,
            S=args.S or 8.0, n_s=args.n_s or 65,
        )
        outputs["perturbation"] = report.to_dict()
        verdicts["perturbed_invertible"] = report.passed
    return outputs, verdicts, {}


def cmd_contraction_demo(args):
    pair = _pair(args) if args.pair else None
    demo = approx_forms.contraction_demo(pair, args.q, args.rho, args.eps, args.S or 8.0, args.n_s or 129)
    report = demo.report
    outputs = {
        **report.to_dict(),
        "sigma_star": demo.sigma_star,
        "bounds": demo.bounds.to_dict(),
        "eps": demo.eps,
        "norm_limit": demo.norm_limit,
    }
    verdicts = {
        "within_bound": report.within_bound,
        "within_norm_limit": demo.within_norm_limit,
        "bounds_hold": report.bounds_hold,
    }
    return outputs, verdicts, {}


# ============ 参数解析 ============

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='store_true', help='详细输出模式（显示 DEBUG 级别日志）')
    common.add_argument('-q', '--quiet', action='store_true', help='静默模式（只输出错误信息）')
    common.add_argument('--seed', type=int, default=0, help='随机种子 (默认: 0)')
    common.add_argument('--no-progress', action='store_true', help='不显示进度条')
    common.add_argument('--plot', choices=plots.PLOT_KINDS + ("auto",), help='输出 SVG 图像')
    common.add_argument('--dry-run', action='store_true', help='预览模式（只解析并校验输入）')
    common.add_argument('--db', help='轨道数据库 JSON')
    common.add_argument('-o', '--out', default=out_cfg.default_output_dir,
                        help=f'输出目录 (默认: {out_cfg.default_output_dir})')
    common.add_argument('--grid', type=int, help='网格规模')
    common.add_argument('--steps', type=int, help='积分步数')
    common.add_argument('--tol', type=float, help='容差')
    return common


def build_parser() -> argparse.ArgumentParser:
    """构造带全部子命令的解析器"""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog='echlab',
        description='Reeb 轨道、ECH 组合数据、涡旋与模空间动力学的数值实验工具',
        epilog='示例: echlab classify-orbit --pair hyperbolic-canonical:k=2,eps=0.05',
    )
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    def add(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(handler=handler)
        return p

    def pair_args(p, required: bool = False, end: bool = False):
        p.add_argument('--pair', required=required, help='周期对，例如 constant:nu=0.15,mu=0.1i')
        if end:
            p.add_argument('--pair-end', help='族的终点（线性插值）')

    p = add('classify-orbit', cmd_classify_orbit, '按单值矩阵分类轨道')
    pair_args(p)
    p.add_argument('--id', help='数据库中的轨道 id')
    p.add_argument('--n-max', type=int, help='同时检验 n-椭圆性')

    p = add('rotation-number', cmd_rotation_number, '旋转数（椭圆 R 或双曲 k）')
    pair_args(p, required=True)

    p = add('spectrum', cmd_spectrum, 'L 在 q 重圆周上的谱')
    pair_args(p, required=True)
    p.add_argument('--q', type=int, default=1, help='覆叠次数 (默认: 1)')
    p.add_argument('--modes', type=int, help='Fourier 截断')
    p.add_argument('--count', type=int, default=8, help='输出最接近 0 的特征值个数 (默认: 8)')

    p = add('spectral-flow', cmd_spectral_flow, '线性族的谱流')
    pair_args(p, required=True, end=True)
    p.add_argument('--q', type=int, default=1)
    p.add_argument('--modes', type=int, help='Fourier 截断 (默认: 16)')

    p = add('verify-homotopy', cmd_verify_homotopy, '检查路径上分类保持不变')
    pair_args(p, required=True, end=True)
    p.add_argument('--expect', help='期望分类，el:R=... 或 hyp:k=...（默认取起点的分类）')
    p.add_argument('--path-steps', type=int, default=20, help='路径分段数 (默认: 20)')
    p.add_argument('--eps', type=float, default=0.05, help='双曲标准形的 ε (默认: 0.05)')

    p = add('ech-index', cmd_ech_index, 'ECH 指标 I(Θ₋, Θ₊; Z)')
    p.add_argument('--theta-minus', default='', help='轨道集合，如 "g1:2,g2:1"')
    p.add_argument('--theta-plus', default='', help='轨道集合')
    p.add_argument('--qz', type=int, default=0, help='Q_Z')
    p.add_argument('--c1', type=int, default=0, help='⟨c₁, Z⟩')

    p = add('enumerate', cmd_enumerate, '作用量低于 L 的生成元')
    p.add_argument('--L', type=float, help='作用量上界（默认取数据库中的 L）')
    p.add_argument('--gamma', help='同调类，如 "1,0"（默认取数据库中的 gamma）')

    for name, handler, help_text in (
        ('differential', cmd_differential, '由计数表装配微分并校验'),
        ('homology', cmd_homology, '计数表给出的复形的同调'),
    ):
        p = add(name, handler, help_text)
        p.add_argument('--counts', help='计数表 JSON')
        p.add_argument('--L', type=float, help='作用量上界（给出时生成元取自枚举）')
        p.add_argument('--gamma', help='同调类')
        p.add_argument('--anchor', default='', help='次数为 0 的锚定生成元 (默认: 空集)')
        p.add_argument('--modulus', type=int, default=0, help='分次模数 p，0 表示 ℤ 分次')

    p = add('solve-vortex', cmd_solve_vortex, '平面涡旋（或 --radial 径向剖面）')
    p.add_argument('--zeros', help='零点列表，如 "0.5,-0.5"')
    p.add_argument('--radial', type=int, help='求解 n 重径向涡旋')
    p.add_argument('--r-max', type=float, help='径向区间长度')
    p.add_argument('--half-width', type=float, help='网格最小半宽')
    p.add_argument('--kernel', action='store_true', help='同时计算线性化算子最小特征值')

    p = add('vortex-moments', cmd_vortex_moments, '矩与零点幂和对照')
    p.add_argument('--zeros', required=True)
    p.add_argument('--q-max', type=int, default=3)
    p.add_argument('--half-width', type=float)

    p = add('vortex-decay', cmd_vortex_decay, '远场衰减指数')
    p.add_argument('--n', type=int, default=1, help='原点处的涡旋数 (默认: 1)')
    p.add_argument('--r-lo', type=float, default=3.0)
    p.add_argument('--r-hi', type=float, default=6.0)
    p.add_argument('--half-width', type=float)

    p = add('hamiltonian', cmd_hamiltonian, '哈密顿量 ĥ')
    p.add_argument('--zeros', required=True)
    p.add_argument('--nu', type=float, required=True)
    p.add_argument('--mu', default='0')
    p.add_argument('--half-width', type=float)

    for name, handler, help_text in (
        ('flow', cmd_flow, '模空间上的时间相关哈密顿流'),
        ('orbit-search', cmd_orbit_search, '闭轨搜索'),
        ('floquet', cmd_floquet, '对称点处回归映射的线性化'),
    ):
        p = add(name, handler, help_text)
        pair_args(p, required=True)
        p.add_argument('--m', type=int, default=1, help='涡旋数 (默认: 1)')
        p.add_argument('--vortex-points', type=int, help='每次涡旋求解的网格点数')
        if name == 'flow':
            p.add_argument('--zeros', help='起点零点（默认全在原点）')
        if name == 'orbit-search':
            p.add_argument('--radius', type=float, default=0.6, help='矩坐标多圆盘半径 (默认: 0.6)')
            p.add_argument('--max-seconds', type=float, help='时间预算（秒）')
        if name == 'floquet':
            p.add_argument('--delta', type=float, default=1e-4, help='有限差分步长')

    p = add('local-model-check', cmd_local_model_check, '局部模型的闭式解检查')
    p.add_argument('--R', type=float, required=True)
    p.add_argument('--modes', default='0:1', help='模式列表 "n:c,..." (默认: 0:1)')
    p.add_argument('--ell', type=float, default=TWO_PI)

    p = add('approx-form-check', cmd_approx_form_check, '近似接触形式的接触性与 Reeb 场检查')
    pair_args(p, required=True, end=True)
    p.add_argument('--k', type=int, default=0)
    p.add_argument('--Q', type=int, default=50)
    p.add_argument('--rho', type=float, default=0.05)
    p.add_argument('--ell', type=float, default=TWO_PI)

    p = add('eigen-gap', cmd_eigen_gap, '族的最小特征值间隙 λ₀')
    pair_args(p, required=True, end=True)
    p.add_argument('--q-max', type=int, default=1)
    p.add_argument('--modes', type=int)
    p.add_argument('--c0', type=float, help='给出时同时做强制零点检查')
    p.add_argument('--Q', type=int, default=50)
    p.add_argument('--ball-radius', type=float, default=0.1)

    p = add('cylinder-bounds', cmd_cylinder_bounds, '∂_s + L 的逆算子范数')
    pair_args(p, required=True)
    p.add_argument('--q', type=int, default=1)
    p.add_argument('--S', type=float, help='截断长度')
    p.add_argument('--n-s', type=int, help='s 方向网格点数')
    p.add_argument('--p-sup', type=float, help='常数扰动的上界，给出时做扰动可逆性检查')
    p.add_argument('--support', choices=('everywhere', 'far'), default='everywhere')
    p.add_argument('--R', type=float, default=2.0, help='截断函数尺度')

    p = add('contraction-demo', cmd_contraction_demo, '柱面合成映射的收缩迭代')
    pair_args(p)
    p.add_argument('--q', type=int, default=1)
    p.add_argument('--rho', type=float, default=1e-3)
    p.add_argument('--eps', type=float, default=0.1)
    p.add_argument('--S', type=float)
    p.add_argument('--n-s', type=int)

    return parser


# ============ 分派 ============

_NON_INPUTS = {"handler", "verbose", "quiet", "no_progress", "plot", "dry_run", "out"}


def _inputs(args: argparse.Namespace) -> dict[str, Any]:
    """参与摘要的输入：解析后的参数加上输入文件内容的 sha256"""
    inputs = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_INPUTS}
    for key in ("db", "counts"):
        if inputs.get(key):
            inputs[f"{key}_sha256"] = _file_digest(inputs[key])
    return inputs


def _validate_inputs(args: argparse.Namespace) -> None:
    """--dry-run：只解析各输入"""
    for name in ("pair", "pair_end"):
        if getattr(args, name, None):
            parse_pair(getattr(args, name))
    if getattr(args, "zeros", None):
        vortex_solver.VortexConfig.parse(args.zeros)
    db = orbit_db.load_database(args.db) if args.db else None
    if getattr(args, "counts", None):
        if db is None:
            raise UsageError("计数表需要 --db")
        orbit_db.load_counts(args.counts, db)
    for name in ("theta_minus", "theta_plus", "anchor"):
        if getattr(args, name, None):
            ech_complex.OrbitSet.parse(getattr(args, name))


def _run(args: argparse.Namespace) -> RunReport:
    outputs, verdicts, series = args.handler(args)
    return RunReport(args.command, _inputs(args), outputs, verdicts, series=series)


def write_report(report: RunReport, directory: Path) -> Path:
    """报告与计时分别原子写入 <command>.json 和 <command>.timing.json"""
    path = temp_manager.atomic_write_json(directory / f"{report.command}.json", report.to_dict())
    temp_manager.atomic_write_json(
        directory / f"{report.command}.timing.json",
        {"inputs_digest": report.inputs_digest, **report.timing},
        identifier="timing",
    )
    return path


def dispatch(argv: Sequence[str] | None = None) -> tuple[int, RunReport | None]:
    """
    解析参数并运行子命令

    Returns:
        (退出码, 报告)：0 判定全部通过，1 有判定失败，2 参数或计算出错
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return (e.code if isinstance(e.code, int) else 2), None

    setup_logger(level=level_for(args.verbose, args.quiet), log_file="echlab.log")

    out_dir = _out_dir(args)
    # 清理超过 24 小时的旧临时目录
    temp_manager.initialize_cleanup(base_dir=out_dir if out_dir.exists() else Path.cwd(), max_age_hours=24)

    config_check = validate_config()
    if not config_check['valid']:
        for error in config_check['errors']:
            logger.error(error)
        return 2, None

    if args.dry_run:
        try:
            _validate_inputs(args)
        except (ValueError, RuntimeError, OSError) as e:
            logger.error(f"{args.command}: {e}")
            return 2, None
        logger.info(f"预览模式：{args.command} 的输入有效")
        return 0, RunReport(args.command, _inputs(args), {"dry_run": True})

    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    try:
        report = _run(args)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error(f"{args.command} 失败: {e}")
        return 2, None
    report.timing = {"started": started.isoformat(), "elapsed_s": time.perf_counter() - clock}

    path = write_report(report, out_dir)
    logger.info(f"报告已写出: {path}")

    if args.plot:
        try:
            plots.emit_plots(report, args.plot, out_dir, stem=args.command)
        except plots.PlotError as e:
            logger.error(f"{args.command}: {e}")
            return 2, report

    failed = [name for name, ok in report.verdicts.items() if not ok]
    if failed:
        logger.warning(f"{args.command}: 判定未通过 {failed}")
        return 1, report
    logger.info(f"{args.command}: 完成")
    return 0, report


# ============ 命令行入口 ============
def main() -> None:
    """命令行入口函数"""
    code, _ = dispatch(sys.argv[1:])
    sys.exit(code)


if __name__ == "__main__":
    main()
