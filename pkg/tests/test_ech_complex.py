# tests/test_ech_complex.py
"""
ECH 组合数据单元测试
测试 ech_complex.py 中的 z 权重、指标、生成元枚举、符号、微分与同调
"""

import math

import numpy as np
import pytest
from sympy import Matrix

from ech_complex import (
    EchError,
    Generator,
    OrbitRecord,
    OrbitSet,
    SurfaceData,
    brute_force_generators,
    build_differential,
    canonicalize,
    ech_index,
    enumerate_generators,
    generator_action,
    grading_modulus,
    homology,
    relative_grading,
    z_weight,
)
from reeb_linops import Classification


def elliptic(name, action, R, n_max=3, homology_class=()):
    return OrbitRecord(name, action, Classification.elliptic(R), tuple(homology_class), n_max)


def hyperbolic(name, action, k, homology_class=()):
    return OrbitRecord(name, action, Classification.hyperbolic(k), tuple(homology_class), 1)


@pytest.fixture
def small_db():
    """γ₁ 椭圆 ℓ = 1，γ₂ 双曲 ℓ = 1.5"""
    return [elliptic("g1", 1.0, 0.3, n_max=3), hyperbolic("g2", 1.5, 1)]


class TestOrbitRecord:
    """轨道记录校验测试"""

    def test_nonpositive_action(self):
        with pytest.raises(EchError):
            elliptic("g", 0.0, 0.3)

    def test_hyperbolic_multiplicity(self):
        with pytest.raises(EchError) as exc:
            OrbitRecord("h", 1.0, Classification.hyperbolic(2), (), 2)
        assert exc.value.orbit_id == "h"

    def test_n_ellipticity_violation(self):
        """测试 qR 为整数时拒绝，见证为 q"""
        with pytest.raises(EchError) as exc:
            elliptic("g", 1.0, 0.5, n_max=3)
        assert exc.value.q == 2


class TestZWeight:
    """z 权重测试"""

    def test_elliptic(self):
        assert z_weight(elliptic("g", 1.0, 0.3, n_max=4), 4) == 3

    def test_irrational(self):
        assert z_weight(elliptic("g", 1.0, 1 / math.sqrt(2)), 2) == 3

    def test_hyperbolic(self):
        assert z_weight(hyperbolic("h", 1.0, -1), 1) == -1

    def test_hyperbolic_iterate_rejected(self):
        with pytest.raises(EchError):
            z_weight(hyperbolic("h", 1.0, -1), 2)

    def test_integer_multiple_rejected(self):
        orbit = elliptic("g", 1.0, 0.25, n_max=3)
        with pytest.raises(EchError):
            z_weight(orbit, 4)


class TestEchIndex:
    """ECH 指标测试"""

    def test_empty(self):
        assert ech_index(OrbitSet(), OrbitSet(), SurfaceData(), {}) == 0

    def test_single_elliptic(self):
        orbits = {"g": elliptic("g", 1.0, 0.3)}
        assert ech_index(OrbitSet(), OrbitSet.parse("g:1"), SurfaceData(), orbits) == 1

    def test_worked_example(self):
        """测试 R = 1/√2, m = 3, Z = (2, 1) 时 I = 10"""
        orbits = {"g": elliptic("g", 1.0, 1 / math.sqrt(2))}
        z = SurfaceData(q_z=2, c1_pairing=1)
        assert ech_index(OrbitSet(), OrbitSet.parse("g:3"), z, orbits) == 10

    def test_sum_rule_and_antisymmetry(self, rng):
        """测试 1000 组随机三元组上的求和规则与反对称性"""
        orbits = {
            "a": elliptic("a", 1.0, 0.3, n_max=4),
            "b": elliptic("b", 1.3, 1 / math.sqrt(2), n_max=4),
            "c": hyperbolic("c", 0.7, 2),
            "d": hyperbolic("d", 0.9, -3),
        }

        def random_set():
            pairs = []
            for name, orbit in orbits.items():
                top = 1 if orbit.is_hyperbolic else orbit.n_max
                m = int(rng.integers(0, top + 1))
                if m:
                    pairs.append((name, m))
            return OrbitSet(tuple(pairs))

        for _ in range(1000):
            t1, t2, t3 = random_set(), random_set(), random_set()
            z12 = SurfaceData(int(rng.integers(-9, 10)), int(rng.integers(-9, 10)))
            z23 = SurfaceData(int(rng.integers(-9, 10)), int(rng.integers(-9, 10)))
            lhs = ech_index(t1, t2, z12, orbits) + ech_index(t2, t3, z23, orbits)
            assert lhs == ech_index(t1, t3, z12 + z23, orbits)
            assert ech_index(t1, t2, z12, orbits) == -ech_index(t2, t1, -z12, orbits)

    def test_unknown_orbit(self):
        with pytest.raises(EchError):
            ech_index(OrbitSet(), OrbitSet.parse("zz:1"), SurfaceData(), {})


class TestGradingModulus:
    """分次模数测试"""

    @pytest.mark.parametrize("vector,expected", [((4, 6), 2), ((0, 0, 0), 0), ((6,), 6), ((), 0), ((-4, 10), 2)])
    def test_gcd(self, vector, expected):
        assert grading_modulus(vector) == expected


class TestOrbitSet:
    """轨道集合测试"""

    def test_parse_and_format(self):
        s = OrbitSet.parse("g2:1, g1:2")
        assert s.pairs == (("g1", 2), ("g2", 1))
        assert str(s) == "g1:2,g2:1"
        assert OrbitSet.parse("") == OrbitSet()

    def test_duplicate_orbit(self):
        with pytest.raises(EchError):
            OrbitSet((("g", 1), ("g", 2)))

    def test_hyperbolic_multiplicity_checked(self, small_db):
        orbits = {o.id: o for o in small_db}
        with pytest.raises(EchError):
            OrbitSet.parse("g2:2").validate(orbits)


class TestEnumerateGenerators:
    """生成元枚举测试"""

    def test_worked_example(self, small_db):
        """测试 L = 3.2 时共 6 个生成元"""
        found = enumerate_generators(small_db, 3.2)
        assert {str(s) for s in found} == {"", "g1:1", "g1:2", "g1:3", "g2:1", "g1:1,g2:1"}
        orbits = {o.id: o for o in small_db}
        actions = [generator_action(s, orbits) for s in found]
        assert actions == sorted(actions)

    def test_empty_db(self):
        assert enumerate_generators([], 5.0) == [OrbitSet()]

    def test_small_bound(self, small_db):
        assert enumerate_generators(small_db, 0.999) == [OrbitSet()]

    def test_action_collision(self, small_db):
        """测试作用量恰为 L 时报错"""
        with pytest.raises(EchError) as exc:
            enumerate_generators(small_db, 1.0)
        assert exc.value.orbit_id == "g1"

    def test_multiplicity_exceeds_n_max(self):
        db = [elliptic("g", 1.0, 0.3, n_max=2)]
        with pytest.raises(EchError) as exc:
            enumerate_generators(db, 3.5)
        assert exc.value.q == 3

    def test_class_filter(self):
        db = [
            elliptic("a", 1.0, 0.3, n_max=3, homology_class=(1,)),
            hyperbolic("b", 1.5, 1, homology_class=(-1,)),
        ]
        found = enumerate_generators(db, 3.2, gamma_class=(0,))
        assert {str(s) for s in found} == {"", "a:1,b:1"}

    def test_matches_brute_force(self, rng):
        """测试随机 5 轨道数据库上与穷举一致"""
        for trial in range(40):
            L = 4.123
            db = []
            for j in range(5):
                action = float(rng.uniform(0.6, 2.5))
                cls_vec = (int(rng.integers(-1, 2)),)
                if rng.random() < 0.5:
                    db.append(hyperbolic(f"o{j}", action, int(rng.integers(-2, 3)), cls_vec))
                else:
                    n_max = math.ceil(L / action)
                    R = float(rng.uniform(0.01, 0.99))
                    if any(abs(q * R - round(q * R)) < 1e-6 for q in range(1, n_max + 1)):
                        R = 1 / math.sqrt(2)
                    db.append(elliptic(f"o{j}", action, R, n_max=n_max, homology_class=cls_vec))
            gamma = None if trial % 2 else (0,)
            assert set(enumerate_generators(db, L, gamma)) == brute_force_generators(db, L, gamma)


class TestCanonicalize:
    """排序符号测试"""

    @staticmethod
    def _gen(order):
        return Generator(OrbitSet(tuple((i, 1) for i in order)), tuple(order))

    def test_already_canonical(self):
        gen, sign = canonicalize(self._gen(["h1", "h2"]))
        assert sign == 1
        assert gen.ordering == ("h1", "h2")

    def test_swap(self):
        assert canonicalize(self._gen(["h2", "h1"]))[1] == -1

    def test_cycle(self):
        assert canonicalize(self._gen(["h2", "h3", "h1"]))[1] == 1

    def test_involutive(self):
        gen, _ = canonicalize(self._gen(["h3", "h1", "h2"]))
        again, sign = canonicalize(gen)
        assert sign == 1
        assert again == gen


class TestBuildDifferential:
    """微分装配测试"""

    @pytest.fixture
    def chain(self):
        orbits = {"g": elliptic("g", 1.0, 0.3)}
        a, b, c = (Generator(OrbitSet.parse(s)) for s in ("g:2", "g:1", ""))
        gradings = {a.orbit_set: 2, b.orbit_set: 1, c.orbit_set: 0}
        return orbits, [a, b, c], gradings

    def test_empty_counts(self, chain):
        orbits, gens, gradings = chain
        diff = build_differential(gens, {}, gradings, 0, orbits)
        assert diff.matrix == [[0] * 3 for _ in range(3)]
        assert diff.report.delta_squared_zero

    def test_single_entry(self, chain):
        orbits, (a, b, c), gradings = chain
        diff = build_differential([a, b, c], {(b, a): 1}, gradings, 0, orbits)
        assert diff.matrix[1][0] == 1
        assert diff.report.ok

    def test_delta_squared_flagged(self, chain):
        orbits, (a, b, c), gradings = chain
        diff = build_differential([a, b, c], {(b, a): 1, (c, b): 1, (c, a): 0}, gradings, 0, orbits)
        assert not diff.report.delta_squared_zero
        assert (Matrix(diff.matrix) ** 2)[2, 0] == 1

    def test_degree_and_action_violations(self, chain):
        orbits, (a, b, c), gradings = chain
        diff = build_differential([a, b, c], {(a, c): 1}, gradings, 0, orbits)
        assert diff.report.degree_violations == [("g:2", "")]
        assert diff.report.action_violations == [("g:2", "")]

    def test_degree_mod_p(self, chain):
        """测试 p = 2 时次数按模比较"""
        orbits, (a, b, c), _ = chain
        gradings = {a.orbit_set: 3, b.orbit_set: 0, c.orbit_set: 5}
        diff = build_differential([a, b, c], {(b, a): 1, (c, b): 0}, gradings, 2, orbits)
        assert diff.report.degree_violations == []

    def test_unknown_generator(self, chain):
        orbits, (a, b, c), gradings = chain
        stranger = Generator(OrbitSet.parse("g:3"))
        with pytest.raises(EchError):
            build_differential([a, b, c], {(stranger, a): 1}, gradings, 0, orbits)

    def test_ordering_sign_folded(self):
        """测试排序符号并入矩阵"""
        orbits = {"h1": hyperbolic("h1", 1.0, 0), "h2": hyperbolic("h2", 1.2, 2), "g": elliptic("g", 3.0, 0.3, n_max=1)}
        top = Generator(OrbitSet.parse("g:1"))
        pair_sorted = Generator(OrbitSet.parse("h1:1,h2:1"), ("h1", "h2"))
        pair_swapped = Generator(OrbitSet.parse("h1:1,h2:1"), ("h2", "h1"))
        gradings = {top.orbit_set: 1, pair_sorted.orbit_set: 0}
        d1 = build_differential([top, pair_sorted], {(pair_sorted, top): 1}, gradings, 0, orbits)
        d2 = build_differential([top, pair_sorted], {(pair_swapped, top): 1}, gradings, 0, orbits)
        assert d1.matrix[1][0] == 1
        assert d2.matrix[1][0] == -1


class TestHomology:
    """同调测试"""

    def test_zero_differential(self):
        result = homology([[0] * 3 for _ in range(3)], [0, 0, 0])
        assert result[0].free_rank == 3
        assert result[0].torsion == []

    def test_torsion(self):
        """测试 δa = 2b 给出 H₀ = ℤ/2"""
        result = homology([[0, 0], [2, 0]], [1, 0])
        assert result[1].free_rank == 0
        assert result[0].free_rank == 0
        assert result[0].torsion == [2]

    def test_acyclic(self):
        result = homology([[0, 0], [1, 0]], [1, 0])
        assert result[0].free_rank == 0 and result[1].free_rank == 0
        assert result[0].torsion == []

    def test_requires_delta_squared_zero(self):
        with pytest.raises(EchError):
            homology([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [2, 1, 0])

    def test_mod_p_grading(self):
        """测试 ℤ/2 分次：次数 3 与 1 归为同一次数"""
        result = homology([[0, 0], [1, 0]], [3, 0], p=2)
        assert result[1].free_rank == 0
        assert result[0].free_rank == 0

    def test_matches_rational_rank(self, rng):
        """测试随机小复形的自由秩与有理秩一致"""
        for _ in range(30):
            a = rng.integers(-3, 4, size=3)
            if not a.any():
                continue
            rows = [np.cross(a, rng.integers(-3, 4, size=3)) for _ in range(2)]
            # 生成元顺序：[x(2), y1, y2, y3 (1), z1, z2 (0)]
            mat = [[0] * 6 for _ in range(6)]
            for i in range(3):
                mat[1 + i][0] = int(a[i])
            for r in range(2):
                for i in range(3):
                    mat[4 + r][1 + i] = int(rows[r][i])
            degrees = [2, 1, 1, 1, 0, 0]
            result = homology(mat, degrees)
            full = Matrix(mat)
            d2 = full.extract([1, 2, 3], [0]).rank()
            d1 = full.extract([4, 5], [1, 2, 3]).rank()
            assert result[2].free_rank == 1 - d2
            assert result[1].free_rank == 3 - d1 - d2
            assert result[0].free_rank == 2 - d1


class TestRelativeGrading:
    """相对分次测试"""

    def test_anchor_and_index(self):
        orbits = {"g": elliptic("g", 1.0, 0.3, n_max=3)}
        gens = [OrbitSet.parse(s) for s in ("", "g:1", "g:2")]
        degrees = relative_grading(gens, OrbitSet(), {}, 0, orbits)
        # I(Θ, ∅) = −Σ z：g:1 → −1，g:2 → −(1 + 1)
        assert degrees == {gens[0]: 0, gens[1]: -1, gens[2]: -2}

    def test_mod_p(self):
        orbits = {"g": elliptic("g", 1.0, 0.3, n_max=3)}
        gens = [OrbitSet.parse("g:3")]
        degrees = relative_grading(gens, OrbitSet(), {gens[0]: SurfaceData(q_z=1)}, 2, orbits)
        # −(1 + 1 + 1) + 1 = −2 ≡ 0 mod 2
        assert degrees[gens[0]] == 0
