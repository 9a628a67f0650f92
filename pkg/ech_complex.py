# ech_complex.py
"""
ECH 组合数据
生成元（轨道多重集）、z 权重与 ECH 指标、分次模数、作用量过滤、
由给定计数装配微分并计算玩具复形的同调。全部使用精确整数运算。
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from sympy import Matrix, ZZ
from sympy.matrices.normalforms import smith_normal_form

from config import ech as ech_cfg
from logger import get_logger
from reeb_linops import Classification, OrbitKind, PeriodicPair

logger = get_logger("echlab.ech")


class EchError(ValueError):
    """ECH 数据不合法（附带轨道 id、重数或生成元作为见证）"""

    def __init__(self, message: str, orbit_id: str | None = None, q: int | None = None):
        super().__init__(message)
        self.orbit_id = orbit_id
        self.q = q


# ============ 数据类型 ============

@dataclass(frozen=True)
class OrbitRecord:
    """一条 Reeb 轨道：作用量、分类、同调类与 n-椭圆性上界"""
    id: str
    action: float
    classification: Classification
    homology_class: tuple[int, ...] = ()
    n_max: int = 1
    pair: PeriodicPair | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'homology_class', tuple(int(c) for c in self.homology_class))
        if not self.action > 0:
            raise EchError(f"轨道 {self.id}: 作用量必须为正，当前 {self.action}", orbit_id=self.id)
        if self.n_max < 1:
            raise EchError(f"轨道 {self.id}: n_max 至少为 1", orbit_id=self.id)
        kind = self.classification.kind
        if kind == OrbitKind.DEGENERATE:
            raise EchError(f"轨道 {self.id}: 退化轨道不能作为生成元", orbit_id=self.id)
        if kind == OrbitKind.HYPERBOLIC and self.n_max != 1:
            raise EchError(f"轨道 {self.id}: 双曲轨道重数只能为 1 (n_max={self.n_max})", orbit_id=self.id)
        if kind == OrbitKind.ELLIPTIC:
            R = self.classification.rotation_R
            for q in range(1, self.n_max + 1):
                if abs(q * R - round(q * R)) <= ech_cfg.elliptic_tol:
                    raise EchError(
                        f"轨道 {self.id}: {q}·R = {q * R:.12g} 为整数，不满足 {self.n_max}-椭圆性",
                        orbit_id=self.id,
                        q=q,
                    )

    @property
    def is_hyperbolic(self) -> bool:
        return self.classification.is_hyperbolic

    @property
    def positive_hyperbolic(self) -> bool:
        return self.classification.is_hyperbolic and self.classification.positive_hyperbolic


@dataclass(frozen=True, order=True)
class OrbitSet:
    """(轨道 id, 重数) 的有限集合，按 id 排序存储"""
    pairs: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        pairs = tuple(sorted((str(i), int(m)) for i, m in self.pairs))
        ids = [i for i, _ in pairs]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise EchError(f"同一轨道出现两次: {dup}", orbit_id=dup)
        for i, m in pairs:
            if m < 1:
                raise EchError(f"轨道 {i} 的重数必须为正整数，当前 {m}", orbit_id=i)
        object.__setattr__(self, 'pairs', pairs)

    @classmethod
    def parse(cls, text: str) -> "OrbitSet":
        """解析 "g1:2,g2:1" 形式；空串为空集，省略重数视为 1"""
        items = []
        for chunk in filter(None, (c.strip() for c in text.split(","))):
            name, _, mult = chunk.partition(":")
            try:
                items.append((name.strip(), int(mult) if mult else 1))
            except ValueError as e:
                raise EchError(f"无法解析重数: {chunk}") from e
        return cls(tuple(items))

    def __str__(self) -> str:
        return ",".join(f"{i}:{m}" for i, m in self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.pairs)

    def validate(self, orbits: Mapping[str, OrbitRecord]) -> None:
        for i, m in self.pairs:
            if i not in orbits:
                raise EchError(f"未知轨道: {i}", orbit_id=i)
            orbit = orbits[i]
            if orbit.is_hyperbolic and m != 1:
                raise EchError(f"双曲轨道 {i} 的重数必须为 1，当前 {m}", orbit_id=i)
            if not orbit.is_hyperbolic and m > orbit.n_max:
                raise EchError(f"椭圆轨道 {i} 的重数 {m} 超过 n_max={orbit.n_max}", orbit_id=i, q=m)


@dataclass(frozen=True)
class Generator:
    """ECH 生成元：轨道集合与正双曲成员的排序 σ"""
    orbit_set: OrbitSet
    ordering: tuple[str, ...] = ()

    @classmethod
    def default(cls, orbit_set: OrbitSet, orbits: Mapping[str, OrbitRecord]) -> "Generator":
        """按轨道 id 字典序排列正双曲成员"""
        return cls(orbit_set, tuple(sorted(i for i in orbit_set.ids if orbits[i].positive_hyperbolic)))

    def validate(self, orbits: Mapping[str, OrbitRecord]) -> None:
        self.orbit_set.validate(orbits)
        expected = {i for i in self.orbit_set.ids if orbits[i].positive_hyperbolic}
        if len(self.ordering) != len(set(self.ordering)) or set(self.ordering) != expected:
            raise EchError(
                f"生成元 {self.orbit_set} 的排序 {list(self.ordering)} 与正双曲成员 {sorted(expected)} 不一致"
            )


@dataclass(frozen=True)
class SurfaceData:
    """相对同调类 Z 的整数数据：Q_Z 与 ⟨c₁, Z⟩"""
    q_z: int = 0
    c1_pairing: int = 0

    def __add__(self, other: "SurfaceData") -> "SurfaceData":
        return SurfaceData(self.q_z + other.q_z, self.c1_pairing + other.c1_pairing)

    def __neg__(self) -> "SurfaceData":
        return SurfaceData(-self.q_z, -self.c1_pairing)


# ============ 指标 ============

def z_weight(orbit: OrbitRecord, q: int, tol: float | None = None) -> int:
    """轨道第 q 次迭代的权重

    双曲：旋转数 k（仅 q = 1）；椭圆：1 + 2⌊qR⌋（要求 qR 不为整数）
    """
    tol = ech_cfg.elliptic_tol if tol is None else tol
    if q < 1:
        raise EchError(f"迭代次数必须为正整数，当前 {q}", orbit_id=orbit.id, q=q)
    cls = orbit.classification
    if cls.is_hyperbolic:
        if q != 1:
            raise EchError(f"双曲轨道 {orbit.id} 只有 q = 1 的权重", orbit_id=orbit.id, q=q)
        return int(cls.rotation_k)
    qr = q * cls.rotation_R
    if abs(qr - round(qr)) <= tol:
        raise EchError(f"轨道 {orbit.id}: {q}·R = {qr:.12g} 为整数", orbit_id=orbit.id, q=q)
    return 1 + 2 * math.floor(qr)


def _weight_sum(orbit_set: OrbitSet, orbits: Mapping[str, OrbitRecord]) -> int:
    total = 0
    for i, m in orbit_set.pairs:
        if i not in orbits:
            raise EchError(f"未知轨道: {i}", orbit_id=i)
        total += sum(z_weight(orbits[i], q) for q in range(1, m + 1))
    return total


def ech_index(
    theta_minus: OrbitSet,
    theta_plus: OrbitSet,
    z: SurfaceData,
    orbits: Mapping[str, OrbitRecord],
) -> int:
    """I(Θ₋, Θ₊; Z) = −⟨c₁, Z⟩ + Q_Z + Σ₊ z − Σ₋ z"""
    theta_minus.validate(orbits)
    theta_plus.validate(orbits)
    return -z.c1_pairing + z.q_z + _weight_sum(theta_plus, orbits) - _weight_sum(theta_minus, orbits)


def grading_modulus(class_vector: Sequence[int]) -> int:
    """自由部分坐标的最大公约数；零向量返回 0（ℤ 分次）"""
    return math.gcd(*(abs(int(c)) for c in class_vector)) if class_vector else 0


def generator_action(orbit_set: OrbitSet, orbits: Mapping[str, OrbitRecord]) -> float:
    return sum(m * orbits[i].action for i, m in orbit_set.pairs)


def generator_class(orbit_set: OrbitSet, orbits: Mapping[str, OrbitRecord]) -> tuple[int, ...]:
    """Σ m·[γ]"""
    width = max((len(o.homology_class) for o in orbits.values()), default=0)
    total = [0] * width
    for i, m in orbit_set.pairs:
        for j, c in enumerate(orbits[i].homology_class):
            total[j] += m * c
    return tuple(total)


def _class_matches(cls: tuple[int, ...], target: Sequence[int] | None) -> bool:
    if target is None:
        return True
    width = max(len(cls), len(target))
    return tuple(cls) + (0,) * (width - len(cls)) == tuple(target) + (0,) * (width - len(target))


# ============ 生成元枚举 ============

def _as_mapping(db: Iterable[OrbitRecord]) -> dict[str, OrbitRecord]:
    orbits: dict[str, OrbitRecord] = {}
    for orbit in db:
        if orbit.id in orbits:
            raise EchError(f"轨道 id 重复: {orbit.id}", orbit_id=orbit.id)
        orbits[orbit.id] = orbit
    return orbits


def enumerate_generators(
    db: Sequence[OrbitRecord],
    L: float,
    gamma_class: Sequence[int] | None = None,
    tol: float | None = None,
) -> list[OrbitSet]:
    """总作用量 < L 的全部轨道集合

    Args:
        db: 轨道列表
        L: 作用量上界
        gamma_class: 只保留 Σ m[γ] 等于此向量的集合（None 表示不限制）
        tol: 作用量与 L 重合的判定容差

    Returns:
        按 (作用量, 字符串) 排序的 OrbitSet 列表

    Raises:
        EchError: 有集合的作用量恰为 L，或椭圆轨道所需重数超过 n_max
    """
    tol = ech_cfg.action_tol if tol is None else tol
    orbits = _as_mapping(db)
    ordered = sorted(orbits.values(), key=lambda o: o.id)

    for orbit in ordered:
        if not orbit.is_hyperbolic and (orbit.n_max + 1) * orbit.action < L - tol:
            raise EchError(
                f"轨道 {orbit.id}: 作用量 {L} 以下需要重数 {orbit.n_max + 1}，超过 n_max={orbit.n_max}",
                orbit_id=orbit.id,
                q=orbit.n_max + 1,
            )

    found: list[OrbitSet] = []

    def visit(index: int, chosen: list[tuple[str, int]], action: float) -> None:
        if index == len(ordered):
            candidate = OrbitSet(tuple(chosen))
            if _class_matches(generator_class(candidate, orbits), gamma_class):
                found.append(candidate)
            return
        orbit = ordered[index]
        visit(index + 1, chosen, action)
        top = 1 if orbit.is_hyperbolic else orbit.n_max
        for m in range(1, top + 1):
            total = action + m * orbit.action
            if abs(total - L) <= tol:
                raise EchError(
                    f"作用量 {total:.12g} 与 L = {L} 重合 ({orbit.id}:{m})",
                    orbit_id=orbit.id,
                    q=m,
                )
            if total > L:
                break
            visit(index + 1, chosen + [(orbit.id, m)], total)

    visit(0, [], 0.0)
    found.sort(key=lambda s: (generator_action(s, orbits), str(s)))
    logger.debug(f"作用量 < {L} 的生成元 {len(found)} 个")
    return found


def brute_force_generators(
    db: Sequence[OrbitRecord],
    L: float,
    gamma_class: Sequence[int] | None = None,
) -> set[OrbitSet]:
    """独立的穷举实现：遍历所有有界重数向量"""
    orbits = _as_mapping(db)
    ids = sorted(orbits)
    ranges = [range(0, 2) if orbits[i].is_hyperbolic else range(0, orbits[i].n_max + 1) for i in ids]
    result = set()
    for mults in itertools.product(*ranges):
        action = sum(m * orbits[i].action for i, m in zip(ids, mults))
        if action >= L:
            continue
        candidate = OrbitSet(tuple((i, m) for i, m in zip(ids, mults) if m > 0))
        if _class_matches(generator_class(candidate, orbits), gamma_class):
            result.add(candidate)
    return result


# ============ 符号与微分 ============

def permutation_sign(order: Sequence[str], target: Sequence[str]) -> int:
    """把 order 重排为 target 的置换的奇偶性"""
    position = {v: i for i, v in enumerate(target)}
    perm = [position[v] for v in order]
    inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
    return -1 if inversions % 2 else 1


def canonicalize(gen: Generator) -> tuple[Generator, int]:
    """把正双曲成员排成字典序，返回新生成元与置换符号"""
    canonical = tuple(sorted(gen.ordering))
    return Generator(gen.orbit_set, canonical), permutation_sign(gen.ordering, canonical)


@dataclass
class DifferentialReport:
    """微分的校验结果"""
    degree_violations: list[tuple[str, str]] = field(default_factory=list)
    action_violations: list[tuple[str, str]] = field(default_factory=list)
    delta_squared_zero: bool = True

    @property
    def ok(self) -> bool:
        return self.delta_squared_zero and not self.degree_violations and not self.action_violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "degree_violations": [list(v) for v in self.degree_violations],
            "action_violations": [list(v) for v in self.action_violations],
            "delta_squared_zero": self.delta_squared_zero,
            "ok": self.ok,
        }


@dataclass
class Differential:
    """δ 的整数矩阵：行为 Θ′，列为 Θ，顺序同 generators"""
    generators: list[OrbitSet]
    matrix: list[list[int]]
    report: DifferentialReport

    def degrees(self, gradings: Mapping[OrbitSet, int]) -> list[int]:
        return [int(gradings[g]) for g in self.generators]

    def to_csv(self) -> str:
        header = "to\\from," + ",".join(f'"{g}"' for g in self.generators)
        rows = [f'"{g}",' + ",".join(str(v) for v in row) for g, row in zip(self.generators, self.matrix)]
        return "\n".join([header] + rows) + "\n"


CountTable = Mapping[tuple[Generator, Generator], int]


def _degree_ok(source: int, target: int, p: int) -> bool:
    shift = source - 1 - target
    return shift == 0 if p == 0 else shift % p == 0


def build_differential(
    gens: Sequence[Generator],
    counts: CountTable,
    gradings: Mapping[OrbitSet, int],
    p: int,
    orbits: Mapping[str, OrbitRecord],
    tol: float | None = None,
) -> Differential:
    """由计数 σ(Θ′, Θ) 装配 δ，把排序符号并入矩阵，并校验分次、作用量与 δ² = 0

    Args:
        gens: 生成元
        counts: (Θ′, Θ) → σ
        gradings: 轨道集合 → 次数
        p: 分次模数（0 表示 ℤ 分次）
        orbits: 轨道表（用于作用量）

    Returns:
        Differential
    """
    tol = ech_cfg.action_tol if tol is None else tol
    index: dict[OrbitSet, int] = {}
    for gen in gens:
        gen.validate(orbits)
        if gen.orbit_set in index:
            raise EchError(f"生成元重复: {gen.orbit_set}")
        if gen.orbit_set not in gradings:
            raise EchError(f"生成元 {gen.orbit_set} 没有次数")
        index[gen.orbit_set] = len(index)

    size = len(gens)
    matrix = [[0] * size for _ in range(size)]
    report = DifferentialReport()
    for (target, source), sigma in counts.items():
        for g in (target, source):
            if g.orbit_set not in index:
                raise EchError(f"计数表引用了未知生成元: {g.orbit_set}")
        if sigma == 0:
            continue
        # 矩阵基取标准排序；计数按各自给定的排序记录
        _, target_sign = canonicalize(target)
        _, source_sign = canonicalize(source)
        row, col = index[target.orbit_set], index[source.orbit_set]
        matrix[row][col] += int(sigma) * target_sign * source_sign

        key = (str(target.orbit_set), str(source.orbit_set))
        if not _degree_ok(gradings[source.orbit_set], gradings[target.orbit_set], p):
            report.degree_violations.append(key)
        if generator_action(target.orbit_set, orbits) > generator_action(source.orbit_set, orbits) + tol:
            report.action_violations.append(key)

    if size:
        square = Matrix(matrix) * Matrix(matrix)
        report.delta_squared_zero = bool(square.is_zero_matrix)
    ordered = [g.orbit_set for g in gens]
    if not report.ok:
        logger.warning(f"微分校验未通过: {report.to_dict()}")
    return Differential(ordered, matrix, report)


# ============ 同调 ============

def _invariant_factors(block: Matrix) -> list[int]:
    if block.rows == 0 or block.cols == 0 or block.is_zero_matrix:
        return []
    snf = smith_normal_form(block, domain=ZZ)
    return [abs(int(snf[i, i])) for i in range(min(snf.rows, snf.cols)) if snf[i, i] != 0]


@dataclass
class HomologyGroup:
    free_rank: int
    torsion: list[int]

    def to_dict(self) -> dict[str, Any]:
        return {"free_rank": self.free_rank, "torsion": self.torsion}


def homology(matrix: Sequence[Sequence[int]], degrees: Sequence[int], p: int = 0) -> dict[int, HomologyGroup]:
    """按次数分块，用 Smith 标准形计算每个次数的自由秩与挠系数

    Args:
        matrix: δ（行为像，列为原像）
        degrees: 每个生成元的次数
        p: 分次模数，p > 0 时次数取模

    Returns:
        次数 → HomologyGroup
    """
    size = len(degrees)
    full = Matrix(matrix) if size else Matrix.zeros(0, 0)
    if size and not (full * full).is_zero_matrix:
        raise EchError("δ² ≠ 0，同调无定义")

    reduced = [d % p if p > 0 else int(d) for d in degrees]

    def shift(d: int, by: int) -> int:
        return (d + by) % p if p > 0 else d + by

    def block(source_degree: int) -> Matrix:
        cols = [i for i, d in enumerate(reduced) if d == source_degree]
        rows = [i for i, d in enumerate(reduced) if d == shift(source_degree, -1)]
        if not rows or not cols:
            return Matrix.zeros(len(rows), len(cols))
        return full.extract(rows, cols)

    result: dict[int, HomologyGroup] = {}
    for d in sorted(set(reduced)):
        dim = reduced.count(d)
        outgoing = _invariant_factors(block(d))
        incoming = _invariant_factors(block(shift(d, 1)))
        result[d] = HomologyGroup(
            free_rank=dim - len(outgoing) - len(incoming),
            torsion=[f for f in incoming if f > 1],
        )
    logger.debug(f"同调: { {d: g.to_dict() for d, g in result.items()} }")
    return result


def relative_grading(
    gens: Sequence[OrbitSet],
    anchor: OrbitSet,
    surfaces: Mapping[OrbitSet, SurfaceData],
    p: int,
    orbits: Mapping[str, OrbitRecord],
    anchor_degree: int = 0,
) -> dict[OrbitSet, int]:
    """degree(Θ) = degree(anchor) + I(Θ, anchor; Z)，p > 0 时取模

    surfaces 给出每个 Θ 到 anchor 的相对类，缺省为零
    """
    degrees = {}
    for g in gens:
        z = surfaces.get(g, SurfaceData())
        value = anchor_degree + ech_index(g, anchor, z, orbits)
        degrees[g] = value % p if p > 0 else value
    return degrees
