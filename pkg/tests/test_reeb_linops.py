# tests/test_reeb_linops.py
"""
线性化 Reeb 流单元测试
测试 reeb_linops.py 中的算子 L、单值矩阵、分类、谱、谱流与同伦验证
"""

import math

import numpy as np
import pytest

from reeb_linops import (
    Classification,
    ClassificationError,
    LoopSamples,
    OperatorFamily,
    OrbitKind,
    PeriodicPair,
    RepresentationError,
    SpectralFlowError,
    apply_L,
    canonical_path,
    check_n_elliptic,
    classify,
    eigenvector_winding,
    is_nondegenerate,
    linear_path,
    monodromy,
    monodromy_power_eigen_one,
    pair_family,
    real_inner,
    spectral_flow,
    spectrum,
    verify_homotopy,
)


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


class TestPeriodicPair:
    """周期对表示测试"""

    def test_interpolation_is_periodic(self):
        """测试 t 与 t+2π 处取值一致"""
        pair = PeriodicPair.from_functions(
            lambda t: 0.1 + 0.05 * np.cos(t),
            lambda t: 0.02j * np.exp(2j * t),
            samples=64,
        )
        t = np.array([0.3, 1.7, 5.1])
        assert np.allclose(pair.nu_at(t), pair.nu_at(t + 2 * np.pi), atol=1e-12)
        assert np.allclose(pair.mu_at(t), pair.mu_at(t + 2 * np.pi), atol=1e-12)

    def test_interpolation_exact_between_samples(self):
        """测试带限函数在采样点之间被精确插值"""
        pair = PeriodicPair.from_functions(
            lambda t: np.sin(3 * t),
            lambda t: np.exp(-2j * t),
            samples=32,
        )
        t = np.linspace(0, 2 * np.pi, 17) + 0.0123
        assert np.allclose(pair.nu_at(t), np.sin(3 * t), atol=1e-12)
        assert np.allclose(pair.mu_at(t), np.exp(-2j * t), atol=1e-12)

    def test_mismatched_lengths(self):
        """测试 ν 与 μ 采样长度不一致"""
        with pytest.raises(RepresentationError):
            PeriodicPair(np.zeros(16), np.zeros(32))

    def test_too_few_samples(self):
        """测试采样点过少"""
        with pytest.raises(RepresentationError):
            PeriodicPair(np.zeros(4), np.zeros(4))

    def test_dict_round_trip(self):
        """测试数据库 JSON 片段的字段名"""
        pair = PeriodicPair.constant(0.15, 0.02 + 0.01j, samples=16)
        data = pair.to_dict()
        assert set(data) == {"nu_samples", "mu_re_samples", "mu_im_samples"}
        back = PeriodicPair.from_dict(data)
        assert np.array_equal(back.nu, pair.nu)
        assert np.array_equal(back.mu, pair.mu)

    def test_fourier_extent(self):
        """测试显著 Fourier 模式的最大频率"""
        assert PeriodicPair.constant(0.3, samples=32).fourier_extent() == 0
        assert PeriodicPair.hyperbolic_canonical(3, 0.02, samples=32).fourier_extent() == 3


class TestApplyL:
    """算子 L 的作用测试"""

    def test_rotation_eigenfunction(self):
        """测试 (0.15, 0) 作用在 e^{it} 上得到 −0.35·e^{it}"""
        pair = PeriodicPair.constant(0.15, 0.0, samples=32)
        t = 2 * np.pi * np.arange(64) / 64
        out = apply_L(pair, np.exp(1j * t), q=1)
        assert np.allclose(out.values, -0.35 * np.exp(1j * t), atol=1e-12)

    def test_constant_in_kernel(self):
        """测试零对作用在常数上为 0"""
        pair = PeriodicPair.constant(0.0, 0.0, samples=16)
        out = apply_L(pair, np.ones(32), q=1)
        assert np.allclose(out.values, 0.0, atol=1e-14)

    def test_conjugate_term(self):
        """测试 μ ≡ 1 时的共轭项"""
        pair = PeriodicPair.constant(0.0, 1.0, samples=16)
        t = 2 * np.pi * np.arange(64) / 64
        out = apply_L(pair, np.exp(1j * t), q=1)
        assert np.allclose(out.values, -0.5 * np.exp(1j * t) + np.exp(-1j * t), atol=1e-12)

    def test_period_multiplier_mismatch(self):
        """测试 ζ 的周期倍数与 q 不一致"""
        pair = PeriodicPair.constant(0.1, samples=16)
        zeta = LoopSamples(np.ones(32), q=2)
        with pytest.raises(RepresentationError):
            apply_L(pair, zeta, q=1)

    def test_too_few_samples(self):
        """测试采样点过少无法求导"""
        pair = PeriodicPair.constant(0.1, samples=16)
        with pytest.raises(RepresentationError):
            apply_L(pair, np.ones(4), q=1)

    def test_symmetric_in_real_inner_product(self, rng):
        """测试实内积下 ⟨Lζ, η⟩ = ⟨ζ, Lη⟩"""
        pair = PeriodicPair.from_functions(
            lambda t: 0.2 + 0.1 * np.cos(t) - 0.05 * np.sin(2 * t),
            lambda t: 0.07 * np.exp(1j * t) + 0.03j,
            samples=64,
        )
        n, q = 96, 2
        t = 2 * np.pi * q * np.arange(n) / n
        modes = np.arange(-6, 7)
        zeta = LoopSamples(np.exp(1j * np.outer(t, modes) / q) @ (rng.normal(size=13) + 1j * rng.normal(size=13)), q)
        eta = LoopSamples(np.exp(1j * np.outer(t, modes) / q) @ (rng.normal(size=13) + 1j * rng.normal(size=13)), q)
        left = real_inner(apply_L(pair, zeta, q), eta)
        right = real_inner(zeta, apply_L(pair, eta, q))
        assert abs(left - right) <= 1e-8 * max(1.0, abs(left))


class TestMonodromy:
    """单值矩阵测试"""

    @pytest.mark.parametrize("R", [0.3, 0.7, 1 / math.sqrt(2)])
    def test_elliptic_rotation_exact(self, R):
        """测试 (R/2, 0) 的单值矩阵是转角 2πR 的旋转"""
        res = monodromy(PeriodicPair.elliptic_canonical(R, samples=16))
        assert np.max(np.abs(res.final - _rotation(2 * np.pi * R))) < 1e-8
        assert abs(res.trace_final - 2 * math.cos(2 * math.pi * R)) < 1e-8

    def test_identity_start_and_determinant(self, hyperbolic_pair):
        """测试 U(0) = I 且行列式恒为 1"""
        res = monodromy(hyperbolic_pair)
        assert np.array_equal(res.matrices[0], np.eye(2))
        assert res.det_error < 1e-8

    def test_zero_pair(self):
        """测试零对的单值路径恒为单位阵"""
        res = monodromy(PeriodicPair.constant(0.0, samples=16), steps=128)
        assert np.allclose(res.matrices, np.eye(2), atol=1e-15)
        assert res.angle_lift == 0.0

    @pytest.mark.parametrize("k,eps", [(1, 0.05), (2, 0.05), (3, 0.02)])
    def test_hyperbolic_canonical_trace(self, k, eps):
        """测试双曲标准对的迹 (−1)^k·2cosh(4πε)"""
        pair = PeriodicPair.hyperbolic_canonical(k, eps, samples=32)
        res = monodromy(pair)
        assert abs(res.trace_final - (-1) ** k * 2 * math.cosh(4 * math.pi * eps)) < 1e-6

    def test_invalid_steps(self, elliptic_pair):
        """测试步数过少"""
        with pytest.raises(ValueError):
            monodromy(elliptic_pair, steps=10)


class TestClassify:
    """分类与旋转数测试"""

    def test_elliptic(self, elliptic_pair):
        """测试 (0.15, 0) 为椭圆，R = 0.3"""
        cls = classify(elliptic_pair)
        assert cls.kind == OrbitKind.ELLIPTIC
        assert abs(cls.rotation_R - 0.3) < 1e-9

    def test_negative_rotation(self):
        """测试负旋转的整数提升"""
        cls = classify(PeriodicPair.constant(-0.15, samples=16))
        assert abs(cls.rotation_R + 0.3) < 1e-9

    def test_large_rotation_lift(self):
        """测试 R > 1 时整数部分来自辐角提升"""
        cls = classify(PeriodicPair.constant(0.6, samples=16))
        assert abs(cls.rotation_R - 1.2) < 1e-9

    @pytest.mark.parametrize("k,eps", [(1, 0.05), (2, 0.05), (3, 0.02)])
    def test_hyperbolic_canonical(self, k, eps):
        """测试双曲标准对的旋转数与符号"""
        cls = classify(PeriodicPair.hyperbolic_canonical(k, eps, samples=32))
        assert cls.kind == OrbitKind.HYPERBOLIC
        assert cls.rotation_k == k
        assert cls.positive_hyperbolic == (k % 2 == 0)

    def test_degenerate(self):
        """测试 R = 1 退化"""
        cls = classify(PeriodicPair.constant(0.5, samples=16))
        assert cls.kind == OrbitKind.DEGENERATE
        assert not is_nondegenerate(PeriodicPair.constant(0.5, samples=16))

    def test_sign_rule_enforced(self):
        """测试声明的双曲分类必须满足符号规则"""
        with pytest.raises(ClassificationError):
            Classification(OrbitKind.HYPERBOLIC, rotation_k=1, positive_hyperbolic=True)
        assert Classification.hyperbolic(-1).positive_hyperbolic is False

    def test_stable_under_small_perturbation(self, rng):
        """测试 10⁻⁴ 扰动不改变类型与旋转数据"""
        checked = 0
        for _ in range(6):
            a = rng.uniform(-0.05, 0.05, size=3)
            b = rng.uniform(-0.05, 0.05, size=2)
            base_nu = rng.uniform(0.05, 0.45)
            pair = PeriodicPair.from_functions(
                lambda t: base_nu + a[0] * np.cos(t) + a[1] * np.sin(2 * t),
                lambda t: b[0] + 1j * b[1] * np.exp(1j * t) + a[2],
                samples=32,
            )
            res = monodromy(pair, steps=1024)
            if abs(abs(res.trace_final) - 2) < 0.1:
                continue
            grid = 2 * np.pi * np.arange(32) / 32
            bump = PeriodicPair(pair.nu + 1e-4 * np.cos(grid), pair.mu + 1e-4j)
            c0, c1 = classify(pair, steps=1024), classify(bump, steps=1024)
            assert c0.kind == c1.kind
            if c0.is_elliptic:
                assert abs(((c0.rotation_R - c1.rotation_R + 0.5) % 1.0) - 0.5) < 1e-3
            else:
                assert c0.rotation_k == c1.rotation_k
            checked += 1
        assert checked > 0


class TestSpectrum:
    """谱测试"""

    def test_elliptic_q2_window(self, elliptic_pair):
        """测试 μ = 0 时特征值为 ν − m/(2q)，每个出现两次"""
        res = spectrum(elliptic_pair, q=2, n_modes=16)
        ms = np.arange(-16, 17)
        expected = np.sort(np.repeat(0.15 - ms / 4.0, 2))
        assert np.allclose(res.eigenvalues, expected, atol=1e-10)
        for value in (0.4, 0.15, -0.1, -0.35):
            assert abs(res.closest(value)[1] - value) < 1e-10

    def test_zero_pair_kernel(self):
        """测试零对的核为常数"""
        res = spectrum(PeriodicPair.constant(0.0, samples=16), q=1, n_modes=8)
        kernel = [i for i, lam in enumerate(res.eigenvalues) if abs(lam) < 1e-12]
        assert len(kernel) == 2
        for i in kernel:
            coeffs = res.eigenvectors[i]
            assert np.argmax(np.abs(coeffs)) == 8  # m = 0

    @pytest.mark.parametrize("q", [1, 2, 3, 4])
    def test_hyperbolic_trivial_kernel(self, hyperbolic_pair, q):
        """测试双曲标准对在任意 q 下核平凡"""
        res = spectrum(hyperbolic_pair, q=q, n_modes=16)
        assert res.min_abs > 0.01
        assert res.max_residual < 1e-8

    def test_primitive_period(self, elliptic_pair):
        """测试特征向量的本原周期"""
        res = spectrum(elliptic_pair, q=2, n_modes=8)
        i_odd, _ = res.closest(-0.1)   # m = 1
        i_even, _ = res.closest(-0.35)  # m = 2
        assert res.primitive_period[i_odd] == 2
        assert res.primitive_period[i_even] == 1

    def test_winding_numbers(self, elliptic_pair):
        """测试特征向量卷绕数等于模式数"""
        res = spectrum(elliptic_pair, q=1, n_modes=8)
        assert eigenvector_winding(res, res.closest(0.15)[0]) == 0
        assert eigenvector_winding(res, res.closest(-0.35)[0]) == 1
        assert eigenvector_winding(res, res.closest(0.65)[0]) == -1

    def test_invalid_arguments(self, elliptic_pair):
        """测试非法参数"""
        with pytest.raises(RepresentationError):
            spectrum(elliptic_pair, q=0, n_modes=8)
        with pytest.raises(ValueError):
            spectrum(elliptic_pair, q=1, n_modes=4)

    def test_small_window_warns(self, caplog):
        """测试截断不足以分辨 μ 时给出警告"""
        pair = PeriodicPair.hyperbolic_canonical(5, 0.05, samples=32)
        with caplog.at_level("WARNING", logger="echlab.reeb"):
            spectrum(pair, q=2, n_modes=8)
        assert any("n_modes" in r.message for r in caplog.records)

    def test_consistent_with_monodromy(self, rng):
        """测试谱有零特征值 ⇔ U(2π)^q 有特征值 1"""
        degenerate = PeriodicPair.constant(0.25, samples=16)
        assert monodromy_power_eigen_one(degenerate, 2)
        assert spectrum(degenerate, q=2, n_modes=8).min_abs < 1e-10

        for _ in range(3):
            c = rng.uniform(-0.04, 0.04, size=3)
            base = rng.uniform(0.05, 0.2)
            pair = PeriodicPair.from_functions(
                lambda t: base + c[0] * np.cos(t),
                lambda t: c[1] + 1j * c[2] * np.exp(1j * t),
                samples=32,
            )
            for q in (1, 2):
                has_kernel = spectrum(pair, q=q, n_modes=24).min_abs < 1e-6
                assert has_kernel == monodromy_power_eigen_one(pair, q)


class TestCheckNElliptic:
    """n-椭圆性检验测试"""

    def test_generic(self):
        assert check_n_elliptic(Classification.elliptic(0.3), 3).ok

    def test_half_fails_with_witness(self):
        report = check_n_elliptic(Classification.elliptic(0.5), 2)
        assert not report.ok
        assert report.witness == 2

    def test_irrational(self):
        assert check_n_elliptic(Classification.elliptic(1 / math.sqrt(2)), 50).ok

    def test_from_pair(self, elliptic_pair):
        assert check_n_elliptic(elliptic_pair, 3).ok

    def test_requires_elliptic(self, hyperbolic_pair):
        with pytest.raises(ClassificationError):
            check_n_elliptic(hyperbolic_pair, 2)


class TestSpectralFlow:
    """谱流测试"""

    def test_single_crossing(self):
        """测试 diag(τ − 1/2) 的谱流为 +1（网格点恰好落在穿越处）"""
        family = OperatorFamily(lambda tau: np.diag([tau - 0.5]), np.linspace(0, 1, 11))
        assert spectral_flow(family) == 1

    def test_constant_family(self):
        family = OperatorFamily(lambda tau: np.diag([1.0, -2.0, 3.0]), np.linspace(0, 1, 5))
        assert spectral_flow(family) == 0

    def test_reversed(self):
        family = OperatorFamily(lambda tau: np.diag([tau - 0.3, 0.8 - tau]), np.linspace(0, 1, 7))
        assert spectral_flow(family) == 0
        single = OperatorFamily(lambda tau: np.diag([tau - 0.3, 2.0]), np.linspace(0, 1, 7))
        assert spectral_flow(single.reversed()) == -1

    def test_singular_endpoint(self):
        family = OperatorFamily(lambda tau: np.diag([tau]), np.linspace(0, 1, 5))
        with pytest.raises(SpectralFlowError):
            spectral_flow(family)

    def test_asymmetric_matrix_rejected(self):
        family = OperatorFamily(lambda tau: np.array([[1.0, 1.0], [0.0, 1.0]]), np.linspace(0, 1, 3))
        with pytest.raises(ValueError):
            spectral_flow(family)

    def test_rotation_family(self):
        """测试 R 从 0.5 到 1.5 的族谱流为 +1"""
        family = pair_family(
            lambda tau: PeriodicPair.constant(0.25 + 0.5 * tau, samples=16),
            q=1,
            n_modes=8,
            grid=np.linspace(0, 1, 11),
        )
        assert family.complex_linear
        assert spectral_flow(family) == 1

    def test_concatenation_additive(self, rng):
        """测试随机分段族的拼接可加性与反向取负"""
        def random_invertible(dim=4):
            while True:
                m = rng.normal(size=(dim, dim))
                m = 0.5 * (m + m.T)
                if np.min(np.abs(np.linalg.eigvalsh(m))) > 0.05:
                    return m

        grid = np.linspace(0, 1, 9)
        for _ in range(100):
            a0, a1, a2 = random_invertible(), random_invertible(), random_invertible()
            first = OperatorFamily(lambda t, a=a0, b=a1: (1 - t) * a + t * b, grid)
            second = OperatorFamily(lambda t, a=a1, b=a2: (1 - t) * a + t * b, grid)
            joined = OperatorFamily.concatenate(first, second)
            sf1, sf2 = spectral_flow(first), spectral_flow(second)
            assert spectral_flow(joined) == sf1 + sf2
            assert spectral_flow(first.reversed()) == -sf1


class TestVerifyHomotopy:
    """同伦验证测试"""

    def test_small_mu_to_canonical(self):
        """测试小 μ 扰动到标准椭圆对的路径通过"""
        start = PeriodicPair.constant(0.15, 0.02, samples=16)
        end = PeriodicPair.constant(0.15, 0.0, samples=16)
        report = verify_homotopy(linear_path(start, end, 20), Classification.elliptic(0.3), steps=1024)
        assert report.passed
        assert len(report.entries) == 21

    def test_constant_hyperbolic_path(self, hyperbolic_pair):
        report = verify_homotopy([hyperbolic_pair, hyperbolic_pair], Classification.hyperbolic(2))
        assert report.passed

    def test_rotation_change_fails(self):
        """测试 R = 0.3 到 R = 0.7 的路径失败"""
        path = linear_path(
            PeriodicPair.elliptic_canonical(0.3, samples=16),
            PeriodicPair.elliptic_canonical(0.7, samples=16),
            20,
        )
        report = verify_homotopy(path, Classification.elliptic(0.3), steps=1024)
        assert not report.passed
        assert report.failures
        assert report.failures[-1][0] == 20

    def test_canonical_path_helper(self):
        """测试默认路径：插值到分类对应的标准对"""
        pair = PeriodicPair.from_functions(
            lambda t: 0.15 + 0.01 * np.cos(t),
            lambda t: 0.01 * np.ones_like(t),
            samples=32,
        )
        path = canonical_path(pair, steps=5)
        expect = classify(pair)
        report = verify_homotopy(path, expect, steps=1024)
        assert report.passed

    def test_requires_two_entries(self, elliptic_pair):
        with pytest.raises(ValueError):
            verify_homotopy([elliptic_pair], Classification.elliptic(0.3))
