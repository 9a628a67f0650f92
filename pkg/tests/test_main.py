# tests/test_main.py
"""
命令行入口测试
通过 dispatch 运行子命令，检查退出码、报告 JSON 与附带文件
"""

import json

import pytest

import main
from main import PairSpecError, UsageError, dispatch, parse_complex, parse_expect, parse_modes, parse_pair
from reeb_linops import OrbitKind


@pytest.fixture
def run(tmp_path, monkeypatch, mocker):
    """在临时目录中运行 dispatch，日志不写文件"""
    monkeypatch.chdir(tmp_path)
    mocker.patch.object(main, "setup_logger")

    def _run(*argv, out="out"):
        return dispatch([*argv, "-o", str(tmp_path / out), "--no-progress"])

    return _run


def _report(tmp_path, command, out="out"):
    return json.loads((tmp_path / out / f"{command}.json").read_text(encoding="utf-8"))


class TestParsers:
    """输入写法解析测试"""

    def test_parse_complex(self):
        assert parse_complex("0.1i") == 0.1j
        assert parse_complex("1-2j") == 1 - 2j
        assert parse_complex("0.5") == 0.5
        with pytest.raises(PairSpecError):
            parse_complex("abc")

    def test_constant_pair(self):
        pair = parse_pair("constant:nu=0.15,mu=0.1i", samples=16)
        assert pair.nu.shape == (16,)
        assert abs(pair.mu[0] - 0.1j) < 1e-15

    def test_canonical_pairs(self):
        assert parse_pair("elliptic-canonical:R=0.7", samples=8).nu[0] == pytest.approx(0.35)
        pair = parse_pair("hyperbolic-canonical:k=2,eps=0.05", samples=32)
        assert pair.nu[0] == pytest.approx(0.5)

    def test_pair_from_file(self, tmp_path, elliptic_pair):
        path = tmp_path / "pair.json"
        path.write_text(json.dumps(elliptic_pair.to_dict()), encoding="utf-8")
        pair = parse_pair(f"file:{path}")
        assert pair.to_dict() == elliptic_pair.to_dict()

    @pytest.mark.parametrize("text", [
        "wobble:x=1",
        "constant:mu=0.1",
        "constant:nu",
        "hyperbolic-canonical:k=1.5",
        "file:/nonexistent/pair.json",
    ])
    def test_bad_pairs(self, text):
        with pytest.raises(PairSpecError):
            parse_pair(text)

    def test_parse_expect(self):
        assert parse_expect("el:R=0.35").rotation_R == 0.35
        assert parse_expect("hyp:k=2").positive_hyperbolic
        with pytest.raises(UsageError):
            parse_expect("parabolic")

    def test_parse_modes(self):
        assert parse_modes("0:1,1:0.5i") == [(0, 1 + 0j), (1, 0.5j)]
        assert parse_modes("2") == [(2, 1 + 0j)]
        with pytest.raises(UsageError):
            parse_modes("")


class TestDispatch:
    """子命令运行测试"""

    def test_classify_orbit_from_db(self, run, tmp_path, sample_db_file):
        """测试 classify-orbit --db db.json --id g1"""
        code, report = run("classify-orbit", "--db", str(sample_db_file), "--id", "g1")
        assert code == 0
        assert report.outputs["classification"]["kind"] == OrbitKind.ELLIPTIC.value
        saved = _report(tmp_path, "classify-orbit")
        assert saved["verdicts"] == {"nondegenerate": True}
        assert saved["outputs"]["classification"]["rotation_R"] == 0.3
        assert saved["schema_version"] == 1

    def test_failed_verdict_exit_one(self, run, sample_db_file):
        """测试 10·R 为整数时 n-椭圆性判定失败"""
        code, report = run("classify-orbit", "--db", str(sample_db_file), "--id", "g1", "--n-max", "10")
        assert code == 1
        assert not report.verdicts["n_elliptic"]
        assert report.outputs["n_elliptic"]["witness"] == 10

    def test_ech_index(self, run, tmp_path, sample_db_file):
        code, report = run(
            "ech-index", "--db", str(sample_db_file),
            "--theta-minus", "", "--theta-plus", "g1:1", "--qz", "0", "--c1", "0",
        )
        assert code == 0
        assert _report(tmp_path, "ech-index")["outputs"]["index"] == 1

    def test_enumerate(self, run, sample_db_file):
        """测试 L = 3.2 时的六个生成元"""
        code, report = run("enumerate", "--db", str(sample_db_file))
        assert code == 0
        assert report.outputs["count"] == 6
        sets = {g["orbit_set"] for g in report.outputs["generators"]}
        assert sets == {"", "g1:1", "g1:2", "g1:3", "g2:1", "g1:1,g2:1"}

    def test_differential(self, run, tmp_path, sample_db_file, sample_counts_file):
        code, report = run("differential", "--db", str(sample_db_file), "--counts", str(sample_counts_file))
        assert code == 0
        assert report.verdicts == {"differential": True}
        csv_text = (tmp_path / "out" / "differential.csv").read_text(encoding="utf-8")
        assert "g1:2" in csv_text

    def test_homology(self, run, sample_db_file, sample_counts_file):
        """测试 δ(g1:2) = g1:1 的复形的同调"""
        code, report = run("homology", "--db", str(sample_db_file), "--counts", str(sample_counts_file))
        assert code == 0
        groups = report.outputs["homology"]
        assert groups["0"] == {"free_rank": 2, "torsion": []}
        assert groups["1"] == {"free_rank": 1, "torsion": []}
        assert groups["2"] == {"free_rank": 1, "torsion": []}

    def test_spectrum_elliptic(self, run):
        """测试 R = 0.3 时 L 可逆且 U(2π) 没有特征值 1"""
        code, report = run("spectrum", "--pair", "constant:nu=0.15", "--count", "4")
        assert code == 0
        assert report.outputs["invertible"]
        assert not report.outputs["monodromy_power_has_eigenvalue_one"]
        assert len(report.outputs["closest_to_zero"]) == 4

    def test_local_model_check(self, run):
        code, report = run("local-model-check", "--R", "0.35", "--modes", "0:1,1:0.5i")
        assert code == 0
        assert report.outputs["residual"] < 1e-10

    @pytest.mark.slow
    def test_contraction_demo_norm_limit(self, run):
        """测试不动点范数落在 2σ★ρ 之内并计入判定"""
        code, report = run("contraction-demo", "--rho", "1e-3", "--eps", "0.1")
        assert code == (0 if report.passed else 1)
        assert report.verdicts["within_norm_limit"]
        limit = 2 * report.outputs["sigma_star"] * report.outputs["bounds"]["rho"]
        assert report.outputs["norm_limit"] == pytest.approx(limit)
        assert report.outputs["fixed_point_norm"] <= limit

    def test_timing_written_separately(self, run, tmp_path, sample_db_file):
        run("enumerate", "--db", str(sample_db_file))
        saved = _report(tmp_path, "enumerate")
        timing = json.loads((tmp_path / "out" / "enumerate.timing.json").read_text(encoding="utf-8"))
        assert "timing" not in saved
        assert timing["inputs_digest"] == saved["inputs_digest"]
        assert timing["elapsed_s"] >= 0


class TestDispatchErrors:
    """错误与预览"""

    def test_unknown_subcommand(self, run):
        code, report = run("frobnicate")
        assert code == 2
        assert report is None

    def test_bad_pair_exit_two(self, run):
        code, report = run("rotation-number", "--pair", "wobble:x=1")
        assert code == 2
        assert report is None

    def test_missing_db(self, run, tmp_path):
        code, _ = run("enumerate", "--db", str(tmp_path / "absent.json"))
        assert code == 2

    def test_missing_required_option(self, run):
        code, _ = run("classify-orbit")
        assert code == 2

    def test_dry_run(self, run, tmp_path, sample_db_file, sample_counts_file):
        """测试预览模式只校验输入，不写报告"""
        code, report = run(
            "homology", "--db", str(sample_db_file), "--counts", str(sample_counts_file), "--dry-run"
        )
        assert code == 0
        assert report.outputs == {"dry_run": True}
        assert not (tmp_path / "out" / "homology.json").exists()

    def test_dry_run_bad_input(self, run):
        code, _ = run("spectrum", "--pair", "constant:nu=x", "--dry-run")
        assert code == 2

    def test_nothing_to_plot(self, run, sample_db_file):
        """测试只有指标的报告要求画图时报错"""
        code, _ = run(
            "ech-index", "--db", str(sample_db_file), "--theta-plus", "g1:1", "--plot", "auto",
        )
        assert code == 2


class TestDeterminism:
    """相同调用得到逐字节相同的报告"""

    def test_identical_reports(self, run, tmp_path, sample_db_file):
        argv = ("ech-index", "--db", str(sample_db_file), "--theta-plus", "g1:2,g2:1", "--seed", "3")
        assert run(*argv, out="a")[0] == 0
        assert run(*argv, out="b")[0] == 0
        a = (tmp_path / "a" / "ech-index.json").read_bytes()
        b = (tmp_path / "b" / "ech-index.json").read_bytes()
        assert a == b

    def test_seed_changes_digest(self, run, sample_db_file):
        _, first = run("enumerate", "--db", str(sample_db_file), "--seed", "1", out="a")
        _, second = run("enumerate", "--db", str(sample_db_file), "--seed", "2", out="b")
        assert first.inputs_digest != second.inputs_digest
        assert first.outputs == second.outputs
