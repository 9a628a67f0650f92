# orbit_db.py
"""
轨道数据库与计数表
读取、校验、保存 JSON 格式的轨道数据库（带版本号），以及微分所需的计数表。
作用量与旋转数 R 以十进制字符串保存，整数向量保存为整数，保证往返后逐字段相等。
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from config import output as out_cfg
from ech_complex import EchError, Generator, OrbitRecord, OrbitSet, SurfaceData
from logger import get_logger
from reeb_linops import Classification, ClassificationError, OrbitKind, PeriodicPair, RepresentationError, classify
import temp_manager

logger = get_logger("echlab.db")

SUPPORTED_VERSIONS = (1,)


class DatabaseError(ValueError):
    """数据库文件无法解析或不满足约束"""

    def __init__(
        self,
        message: str,
        orbit_id: str | None = None,
        field_name: str | None = None,
        position: tuple[int, int] | None = None,
    ):
        super().__init__(message)
        self.orbit_id = orbit_id
        self.field_name = field_name
        self.position = position


@dataclass(frozen=True)
class OrbitDatabase:
    """轨道表、作用量上界 L 与同调类 Γ"""
    orbits: tuple[OrbitRecord, ...] = ()
    L: float | None = None
    gamma: tuple[int, ...] | None = None
    version: int = out_cfg.schema_version

    def __post_init__(self):
        object.__setattr__(self, 'orbits', tuple(self.orbits))
        if self.gamma is not None:
            object.__setattr__(self, 'gamma', tuple(int(g) for g in self.gamma))
        seen: set[str] = set()
        for orbit in self.orbits:
            if orbit.id in seen:
                raise DatabaseError(f"轨道 id 重复: {orbit.id}", orbit_id=orbit.id, field_name="id")
            seen.add(orbit.id)

    def __len__(self) -> int:
        return len(self.orbits)

    @property
    def by_id(self) -> dict[str, OrbitRecord]:
        return {o.id: o for o in self.orbits}

    def get(self, orbit_id: str) -> OrbitRecord:
        try:
            return self.by_id[orbit_id]
        except KeyError:
            raise DatabaseError(f"数据库中没有轨道 {orbit_id}", orbit_id=orbit_id) from None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "version": self.version,
            "orbits": [_orbit_to_dict(o) for o in self.orbits],
        }
        if self.L is not None:
            data["L"] = repr(float(self.L))
        if self.gamma is not None:
            data["gamma"] = list(self.gamma)
        return data


# ============ 序列化 ============

def _decimal(value: Any, orbit_id: str | None, name: str) -> float:
    """接受 JSON 数字或十进制字符串"""
    if isinstance(value, bool):
        raise DatabaseError(f"字段 {name} 不能是布尔值", orbit_id=orbit_id, field_name=name)
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise DatabaseError(f"字段 {name} 不是数值: {value!r}", orbit_id=orbit_id, field_name=name) from e


def _integer(value: Any, orbit_id: str | None, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise DatabaseError(f"字段 {name} 必须是整数: {value!r}", orbit_id=orbit_id, field_name=name)
    try:
        return int(value)
    except ValueError as e:
        raise DatabaseError(f"字段 {name} 必须是整数: {value!r}", orbit_id=orbit_id, field_name=name) from e


def _pair_from_dict(data: Mapping[str, Any], orbit_id: str) -> tuple[Classification, PeriodicPair | None]:
    """pair 字段：采样 (ν, Re μ, Im μ) 或直接给出的分类"""
    if "nu_samples" in data:
        try:
            pair = PeriodicPair.from_dict(dict(data))
            classification = classify(pair)
        except (RepresentationError, ClassificationError) as e:
            raise DatabaseError(f"轨道 {orbit_id}: {e}", orbit_id=orbit_id, field_name="pair") from e
        return classification, pair

    kind = data.get("kind")
    try:
        if kind == "el":
            return Classification.elliptic(_decimal(data.get("R"), orbit_id, "R")), None
        if kind == "hyp":
            k = _integer(data.get("k"), orbit_id, "k")
            positive = data.get("positive")
            if positive is not None and not isinstance(positive, bool):
                raise DatabaseError(f"轨道 {orbit_id}: positive 必须是布尔值", orbit_id=orbit_id, field_name="positive")
            return Classification.hyperbolic(k, positive), None
    except ClassificationError as e:
        raise DatabaseError(f"轨道 {orbit_id}: {e}", orbit_id=orbit_id, field_name="pair") from e
    raise DatabaseError(f"轨道 {orbit_id}: 未知的 pair.kind {kind!r}", orbit_id=orbit_id, field_name="pair.kind")


def _orbit_from_dict(entry: Mapping[str, Any], index: int) -> OrbitRecord:
    if not isinstance(entry, Mapping):
        raise DatabaseError(f"orbits[{index}] 不是对象", field_name=f"orbits[{index}]")
    orbit_id = entry.get("id")
    if not isinstance(orbit_id, str) or not orbit_id:
        raise DatabaseError(f"orbits[{index}] 缺少 id", field_name="id")
    for name in ("action", "pair"):
        if name not in entry:
            raise DatabaseError(f"轨道 {orbit_id} 缺少字段 {name}", orbit_id=orbit_id, field_name=name)

    action = _decimal(entry["action"], orbit_id, "action")
    if not action > 0:
        raise DatabaseError(f"轨道 {orbit_id}: 作用量必须为正，当前 {action}", orbit_id=orbit_id, field_name="action")
    classification, pair = _pair_from_dict(entry["pair"], orbit_id)
    if classification.kind == OrbitKind.DEGENERATE:
        raise DatabaseError(f"轨道 {orbit_id}: 退化轨道不能作为生成元", orbit_id=orbit_id, field_name="pair")
    homology = tuple(_integer(c, orbit_id, "homology") for c in entry.get("homology", []))
    n_max = _integer(entry.get("n_max", 1), orbit_id, "n_max")
    try:
        return OrbitRecord(orbit_id, action, classification, homology, n_max, pair)
    except EchError as e:
        raise DatabaseError(str(e), orbit_id=orbit_id, field_name="n_max") from e


def _orbit_to_dict(orbit: OrbitRecord) -> dict[str, Any]:
    cls = orbit.classification
    if orbit.pair is not None:
        pair: dict[str, Any] = orbit.pair.to_dict()
    elif cls.is_hyperbolic:
        pair = {"kind": "hyp", "k": cls.rotation_k, "positive": cls.positive_hyperbolic}
    else:
        pair = {"kind": "el", "R": repr(float(cls.rotation_R))}
    return {
        "id": orbit.id,
        "action": repr(float(orbit.action)),
        "pair": pair,
        "homology": list(orbit.homology_class),
        "n_max": orbit.n_max,
    }


def parse_database(data: Any) -> OrbitDatabase:
    """由已解析的 JSON 树构造数据库"""
    if not isinstance(data, Mapping):
        raise DatabaseError("数据库顶层必须是对象")
    if "version" not in data:
        raise DatabaseError("缺少 version 字段", field_name="version")
    version = data["version"]
    if version not in SUPPORTED_VERSIONS:
        raise DatabaseError(f"不支持的数据库版本: {version!r}", field_name="version")
    entries = data.get("orbits", [])
    if not isinstance(entries, list):
        raise DatabaseError("orbits 必须是数组", field_name="orbits")

    orbits = [_orbit_from_dict(entry, i) for i, entry in enumerate(entries)]
    L = _decimal(data["L"], None, "L") if data.get("L") is not None else None
    gamma = [_integer(g, None, "gamma") for g in data["gamma"]] if data.get("gamma") is not None else None
    return OrbitDatabase(tuple(orbits), L, tuple(gamma) if gamma is not None else None, int(version))


def load_database(path: Path | str) -> OrbitDatabase:
    """
    读取并校验轨道数据库

    Raises:
        DatabaseError: 文件不存在、JSON 语法错误（带行列位置）、版本未知、
            字段非法或轨道不变量不成立
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatabaseError(f"数据库文件不存在: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DatabaseError(
            f"{path}: 第 {e.lineno} 行第 {e.colno} 列解析失败: {e.msg}",
            position=(e.lineno, e.colno),
        ) from e
    db = parse_database(data)
    logger.info(f"已载入 {len(db)} 条轨道: {path}")
    return db


def save_database(db: OrbitDatabase, path: Path | str) -> Path:
    """原子写入数据库；load_database 读回后逐字段相等"""
    target = temp_manager.atomic_write_json(path, db.to_dict(), identifier="db")
    logger.info(f"已保存 {len(db)} 条轨道: {target}")
    return target


# ============ 计数表 ============

@dataclass
class CountData:
    """计数表文件的内容：计数、可选的次数与相对类"""
    counts: dict[tuple[Generator, Generator], int] = field(default_factory=dict)
    degrees: dict[OrbitSet, int] = field(default_factory=dict)
    surfaces: dict[OrbitSet, SurfaceData] = field(default_factory=dict)

    def generators(self, orbits: Mapping[str, OrbitRecord]) -> list[Generator]:
        """计数中出现的生成元，按轨道集合排序，取标准排序"""
        sets = sorted({g.orbit_set for pair in self.counts for g in pair})
        return [Generator.default(s, orbits) for s in sets]


def _multiset(value: Any, name: str) -> OrbitSet:
    """字符串 "g1:2,g2:1" 或列表 [["g1", 2], ["g2", 1]]"""
    try:
        if isinstance(value, str):
            return OrbitSet.parse(value)
        if isinstance(value, list):
            return OrbitSet(tuple((str(i), int(m)) for i, m in value))
    except (EchError, TypeError, ValueError) as e:
        raise DatabaseError(f"{name}: {e}", field_name=name) from e
    raise DatabaseError(f"{name}: 无法识别的轨道集合 {value!r}", field_name=name)


def _generator(entry: Mapping[str, Any], key: str, orbits: Mapping[str, OrbitRecord], index: int) -> Generator:
    name = f"counts[{index}].{key}"
    orbit_set = _multiset(entry.get(key, ""), name)
    try:
        orbit_set.validate(orbits)
        order = entry.get(f"{key}_order")
        gen = Generator.default(orbit_set, orbits) if order is None else Generator(orbit_set, tuple(order))
        gen.validate(orbits)
    except EchError as e:
        raise DatabaseError(f"{name}: {e}", orbit_id=e.orbit_id, field_name=name) from e
    return gen


def parse_counts(data: Any, db: OrbitDatabase) -> CountData:
    if not isinstance(data, Mapping) or not isinstance(data.get("counts"), list):
        raise DatabaseError("计数表必须是含 counts 数组的对象", field_name="counts")
    orbits = db.by_id
    result = CountData()
    for i, entry in enumerate(data["counts"]):
        if not isinstance(entry, Mapping):
            raise DatabaseError(f"counts[{i}] 不是对象", field_name=f"counts[{i}]")
        source = _generator(entry, "from", orbits, i)
        target = _generator(entry, "to", orbits, i)
        sigma = _integer(entry.get("sigma"), None, f"counts[{i}].sigma")
        key = (target, source)
        result.counts[key] = result.counts.get(key, 0) + sigma

    for text, degree in (data.get("degrees") or {}).items():
        result.degrees[_multiset(text, "degrees")] = _integer(degree, None, "degrees")
    for text, value in (data.get("surfaces") or {}).items():
        if not isinstance(value, list) or len(value) != 2:
            raise DatabaseError(f"surfaces[{text!r}] 必须是 [Q_Z, <c1,Z>]", field_name="surfaces")
        result.surfaces[_multiset(text, "surfaces")] = SurfaceData(
            _integer(value[0], None, "surfaces"), _integer(value[1], None, "surfaces")
        )
    return result


def load_counts(path: Path | str, db: OrbitDatabase) -> CountData:
    """读取计数表 {"counts": [{"from", "to", "sigma"}], "degrees"?, "surfaces"?}"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatabaseError(f"计数表文件不存在: {path}") from None
    except json.JSONDecodeError as e:
        raise DatabaseError(
            f"{path}: 第 {e.lineno} 行第 {e.colno} 列解析失败: {e.msg}",
            position=(e.lineno, e.colno),
        ) from e
    result = parse_counts(data, db)
    logger.info(f"已载入 {len(result.counts)} 条计数: {path}")
    return result
