# tests/test_vortex_solver.py
"""
涡旋求解器单元测试
"""

import json
import math

import numpy as np
import pytest

import vortex_solver
from config import vortex as vortex_cfg
from vortex_solver import (
    NewtonConvergenceError,
    TangentDirection,
    VortexConfig,
    VortexDomainError,
    VortexGrid,
    decay_fit,
    export_solution,
    flux,
    gradient_energy_bound,
    hamiltonian,
    linearized_kernel_check,
    moments,
    solve_planar,
    solve_radial,
    tangent_solve,
)


@pytest.fixture(scope="module")
def empty_vortex():
    return solve_planar(VortexConfig())


@pytest.fixture(scope="module")
def single_vortex():
    return solve_planar(VortexConfig((0j,)))


@pytest.fixture(scope="module")
def pair_vortex():
    return solve_planar(VortexConfig((0.5, -0.5)))


@pytest.fixture(scope="module")
def radial_one():
    return solve_radial(1)


class TestVortexConfig:
    """零点配置测试"""

    def test_parse(self):
        config = VortexConfig.parse("1, 1i, -0.5+0.25j")
        assert config.zeros == (1 + 0j, 1j, -0.5 + 0.25j)
        assert config.n == 3

    def test_parse_empty(self):
        assert VortexConfig.parse("").n == 0

    def test_parse_invalid(self):
        with pytest.raises(VortexDomainError):
            VortexConfig.parse("1,abc")

    def test_non_finite(self):
        with pytest.raises(VortexDomainError):
            VortexConfig((complex(math.inf, 0),))

    def test_centroid_and_power_sums(self):
        config = VortexConfig((1, 1j))
        assert config.centroid == pytest.approx(0.5 + 0.5j)
        assert config.power_sums(2) == pytest.approx([1 + 1j, 0j])


class TestVortexGrid:
    """网格规则测试"""

    @pytest.mark.parametrize("zeros,half_width", [
        ((), 8.0),
        ((0j,), 8.0),
        ((5 + 0j,), 8.0),
        ((-3, 3), 15.0),
    ])
    def test_default_half_width(self, zeros, half_width):
        grid = VortexGrid.default(VortexConfig(zeros))
        assert grid.half_width == pytest.approx(half_width)
        assert grid.points == vortex_cfg.points

    def test_default_centered_at_centroid(self):
        assert VortexGrid.default(VortexConfig((1, 1j))).center == pytest.approx(0.5 + 0.5j)

    def test_resolution_rule(self):
        with pytest.raises(VortexDomainError):
            VortexGrid(0j, 8.0, 64).validate(VortexConfig())

    def test_zero_near_boundary(self):
        with pytest.raises(VortexDomainError):
            VortexGrid(0j, 8.0, 256).validate(VortexConfig((5 + 0j,)))

    def test_solve_rejects_bad_grid(self):
        with pytest.raises(VortexDomainError):
            solve_planar(VortexConfig((5 + 0j,)), VortexGrid(0j, 8.0, 256))


class TestSolveRadial:
    """径向解测试"""

    def test_single_vortex(self, radial_one):
        assert radial_one.f[0] == 0.0
        assert radial_one.f[-1] > 0.999
        assert 0.98 <= radial_one.flux <= 1.005
        assert radial_one.residual < 1e-6
        assert np.all(np.diff(radial_one.f) >= -1e-9)
        assert np.all((radial_one.f >= 0) & (radial_one.f <= 1 + 1e-9))

    def test_trivial(self):
        profile = solve_radial(0)
        assert np.allclose(profile.f, 1.0)
        assert profile.flux == pytest.approx(0.0, abs=1e-12)

    def test_double_vortex(self):
        profile = solve_radial(2)
        assert 1.96 <= profile.flux <= 2.01

    def test_gauge_profile(self, radial_one):
        """测试 A_θ(0) = 0、A_θ(∞) ≈ n 以及 A_θ′/r = 1 − f²"""
        assert radial_one.gauge[0] == pytest.approx(0.0, abs=1e-12)
        assert radial_one.gauge[-1] == pytest.approx(1.0, abs=1e-2)
        assert radial_one.identity_residual < 1e-2

    @pytest.mark.parametrize("r_max,points", [(6.0, 1024), (10.0, 256)])
    def test_invalid_parameters(self, r_max, points):
        with pytest.raises(VortexDomainError):
            solve_radial(1, r_max, points)


class TestSolvePlanar:
    """平面解测试"""

    def test_trivial_configuration(self, empty_vortex):
        assert np.all(empty_vortex.u == 0.0)
        assert np.all(empty_vortex.alpha == 1.0)
        assert np.all(empty_vortex.a_conn == 0.0)
        assert empty_vortex.flux == 0.0
        report = empty_vortex.residual_report
        assert report.curvature_sup == 0.0
        assert report.dbar_sup == 0.0

    def test_direct_residuals(self, single_vortex, pair_vortex):
        for sol in (single_vortex, pair_vortex):
            report = sol.residual_report
            assert report.curvature_sup <= 1e-4
            assert report.dbar_sup <= 1e-4
            assert report.ok

    def test_pointwise_bounds(self, single_vortex, pair_vortex):
        for sol in (single_vortex, pair_vortex):
            assert np.max(np.abs(sol.alpha)) <= 1 + 1e-6
            assert np.max(sol.u) <= 1e-6
            assert sol.residual_report.boundary_u < vortex_cfg.boundary_tol

    def test_alpha_vanishes_only_near_zeros(self, pair_vortex):
        small = np.abs(pair_vortex.alpha) < 0.05
        assert np.all(pair_vortex.zero_distance()[small] < 0.2)

    def test_matches_radial_profile(self, single_vortex, radial_one):
        r = np.abs(single_vortex.grid.coords())
        window = r <= 6.0
        planar = np.abs(single_vortex.alpha[window])
        assert np.max(np.abs(planar - radial_one.magnitude(r[window]))) < 2e-3

    def test_symmetric_pair(self, pair_vortex):
        """测试零点 {±0.5} 的解在 z → −z 下对称"""
        assert np.max(np.abs(pair_vortex.u - pair_vortex.u[::-1, ::-1])) < 1e-6
        assert np.max(np.abs(pair_vortex.alpha - pair_vortex.alpha[::-1, ::-1])) < 1e-6

    def test_flux(self, empty_vortex, single_vortex, pair_vortex):
        assert flux(empty_vortex) == 0.0
        assert 0.98 <= flux(single_vortex) <= 1.005
        assert 1.96 <= flux(pair_vortex) <= 2.01

    @pytest.mark.slow
    def test_translation_equivariance(self, pair_vortex):
        shifted = solve_planar(pair_vortex.config.translated(0.25 + 0.1j))
        assert shifted.grid.center == pytest.approx(pair_vortex.grid.center + 0.25 + 0.1j)
        assert np.max(np.abs(shifted.u - pair_vortex.u)) < 1e-4
        assert np.max(np.abs(shifted.alpha - pair_vortex.alpha)) < 1e-4

    def test_retry_halves_damping(self, mocker):
        """测试 Newton 失败后重试：阻尼减半、预算翻倍"""
        real = vortex_solver._newton_planar
        calls = []

        def flaky(*args):
            calls.append(args)
            if len(calls) == 1:
                raise NewtonConvergenceError("forced", 1, 1.0)
            return real(*args)

        mocker.patch("vortex_solver._newton_planar", side_effect=flaky)
        sol = solve_planar(VortexConfig())
        assert sol.flux == 0.0
        assert len(calls) == 2
        assert calls[0][4] == 1.0
        assert calls[1][4] == pytest.approx(vortex_cfg.retry.damping_factor)
        assert calls[1][5] == 2 * vortex_cfg.max_newton

    def test_retry_exhausted(self, mocker):
        mocker.patch(
            "vortex_solver._newton_planar",
            side_effect=NewtonConvergenceError("forced", 1, 1.0),
        )
        with pytest.raises(NewtonConvergenceError):
            solve_planar(VortexConfig((0j,)))
        assert vortex_solver._newton_planar.call_count == vortex_cfg.retry.max_attempts


class TestMoments:
    """矩坐标测试"""

    def test_centered_vortex(self, single_vortex):
        assert abs(moments(single_vortex, 1)[0]) < 1e-3

    def test_symmetric_pair(self, pair_vortex):
        first, second = moments(pair_vortex, 2)
        assert abs(first) < 1e-3
        assert second == pytest.approx(0.5, rel=2e-2)

    def test_off_center_pair(self):
        sol = solve_planar(VortexConfig((1, 1j)))
        assert abs(moments(sol, 1)[0] - (1 + 1j)) <= 0.02 * abs(1 + 1j)

    def test_power_sums_match(self, pair_vortex):
        computed = moments(pair_vortex, 3)
        expected = pair_vortex.config.power_sums(3)
        for c, e in zip(computed, expected):
            assert abs(c - e) <= 0.02 * max(abs(e), 1.0)

    def test_invalid_order(self, single_vortex):
        with pytest.raises(VortexDomainError):
            moments(single_vortex, 0)


class TestDecayFit:
    """远场衰减测试"""

    def test_single_vortex(self, single_vortex):
        assert 1.25 <= decay_fit(single_vortex, 3.0, 6.0) <= 1.5

    def test_trivial_configuration(self, empty_vortex):
        with pytest.raises(VortexDomainError):
            decay_fit(empty_vortex, 3.0, 6.0)

    @pytest.mark.slow
    def test_coincident_pair(self):
        config = VortexConfig((0j, 0j))
        sol = solve_planar(config, VortexGrid(0j, 12.0, 193))
        assert 1.25 <= decay_fit(sol, 4.0, 7.0) <= 1.5

    def test_window_outside_grid(self, single_vortex):
        with pytest.raises(VortexDomainError):
            decay_fit(single_vortex, 3.0, 9.0)


class TestHamiltonian:
    """ĥ 求积测试"""

    def test_zero_coefficients(self, single_vortex):
        assert hamiltonian(single_vortex, 0.0, 0j) == 0.0

    def test_radial_second_moment(self, single_vortex, radial_one):
        assert hamiltonian(single_vortex, 0.15, 0j) == pytest.approx(
            0.15 * radial_one.second_moment, rel=1e-2
        )

    def test_mu_term_vanishes_for_radial(self, single_vortex):
        h0 = hamiltonian(single_vortex, 0.15, 0j)
        assert hamiltonian(single_vortex, 0.15, 0.3 - 0.2j) == pytest.approx(h0, abs=1e-8)

    @pytest.mark.slow
    def test_translation_identity(self, single_vortex):
        """测试 ĥ(w) = ĥ(0) + ν|w|² + Re(μ̄w²)"""
        nu, mu, w = 0.15, 0.05 - 0.02j, 0.3 + 0.2j
        moved = solve_planar(VortexConfig((w,)))
        expected = hamiltonian(single_vortex, nu, mu) + nu * abs(w) ** 2 + (np.conj(mu) * w ** 2).real
        assert hamiltonian(moved, nu, mu) == pytest.approx(expected, rel=2e-2)


class TestTangentDirection:
    """切方向换算测试"""

    def test_translation_single(self):
        assert TangentDirection.translation(VortexConfig((0.3,))).delta_p == (-1 + 0j,)

    def test_moment_motion_matches_zero_motion(self):
        config = VortexConfig((0.5, -0.5))
        a, b = 0.2 + 0.1j, -0.3j
        by_zeros = TangentDirection.from_zero_motion(config, [a, b])
        by_moments = TangentDirection.from_moment_motion(config, [a + b, a - b])
        assert by_moments.delta_p == pytest.approx(by_zeros.delta_p)

    def test_rotation_of_coincident_zeros(self):
        assert TangentDirection.rotation(VortexConfig((0j, 0j))).is_zero

    def test_length_mismatch(self):
        with pytest.raises(VortexDomainError):
            TangentDirection.from_zero_motion(VortexConfig((0j,)), [1, 1])


class TestTangentSolve:
    """切方程测试"""

    def test_zero_direction(self, single_vortex):
        pair = tangent_solve(single_vortex, TangentDirection.zero(single_vortex.config))
        assert pair.l2_norm == 0.0
        assert pair.metric_norm == 0.0
        assert not np.any(pair.x) and not np.any(pair.iota)

    def test_translation(self, single_vortex):
        pair = tangent_solve(single_vortex, TangentDirection.translation(single_vortex.config))
        assert math.isfinite(pair.metric_norm)
        assert pair.metric_norm > 0
        assert pair.metric_norm == pytest.approx(pair.l2_norm / math.sqrt(math.pi))
        assert pair.residual <= 1e-4

    def test_complex_linear(self, single_vortex):
        v = TangentDirection.translation(single_vortex.config)
        one = tangent_solve(single_vortex, v)
        rotated = tangent_solve(single_vortex, v.scaled(2j))
        assert np.max(np.abs(rotated.iota - 2j * one.iota)) < 1e-10
        assert rotated.metric_norm == pytest.approx(2 * one.metric_norm)

    def test_rotation_localized(self, pair_vortex):
        """测试旋转方向：ι 集中在 ∇α ≠ 0 的区域"""
        pair = tangent_solve(pair_vortex, TangentDirection.rotation(pair_vortex.config))
        assert pair.metric_norm > 0
        assert pair.residual <= 1e-4
        far = pair_vortex.zero_distance() > 6.0
        assert np.max(np.abs(pair.iota[far])) < 1e-2 * np.max(np.abs(pair.iota))

    def test_inner_product(self, single_vortex):
        pair = tangent_solve(single_vortex, TangentDirection.translation(single_vortex.config))
        assert pair.inner(pair).real == pytest.approx(pair.metric_norm ** 2)

    def test_invalid_direction(self, single_vortex):
        with pytest.raises(VortexDomainError):
            tangent_solve(single_vortex, TangentDirection((1, 1)))

    def test_residual_warning_level(self, single_vortex, mocker):
        """测试 strict=False 时残差超限只记 DEBUG"""
        mocker.patch("vortex_solver.RESIDUAL_TOL", 0.0)
        log = mocker.patch("vortex_solver.logger")
        direction = TangentDirection.translation(single_vortex.config)

        relaxed = tangent_solve(single_vortex, direction, strict=False)
        log.warning.assert_not_called()
        assert any("切方程相对残差" in c.args[0] for c in log.debug.call_args_list)
        assert relaxed.residual > 0

        tangent_solve(single_vortex, direction)
        log.warning.assert_called_once()


class TestSupplementaryChecks:
    """附加检查测试"""

    def test_kernel_trivial(self, empty_vortex):
        assert 2.0 < linearized_kernel_check(empty_vortex) < 2.1

    def test_kernel_single(self, single_vortex):
        assert linearized_kernel_check(single_vortex) > 0

    def test_gradient_bound(self, empty_vortex, single_vortex):
        assert gradient_energy_bound(empty_vortex) == 0.0
        value = gradient_energy_bound(single_vortex)
        assert math.isfinite(value) and value > 0


class TestExport:
    """导出测试"""

    def test_csv_and_header(self, single_vortex, tmp_path):
        csv_path, json_path = export_solution(single_vortex, tmp_path, stem="single")
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "x,y,u,abs_alpha"
        assert len(lines) == 1 + single_vortex.grid.points ** 2
        header = json.loads(json_path.read_text(encoding="utf-8"))
        assert header["config"]["n"] == 1
        assert header["grid"]["points"] == single_vortex.grid.points
        assert header["residuals"]["ok"] is True
