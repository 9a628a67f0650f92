# conftest.py
"""
pytest 配置文件
提供共享的 fixtures 和测试配置
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# 将项目根目录添加到 Python 路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from reeb_linops import PeriodicPair


@pytest.fixture
def rng():
    """固定种子的随机数发生器"""
    return np.random.default_rng(20240611)


@pytest.fixture
def elliptic_pair():
    """(ν, μ) = (0.15, 0)，椭圆，R = 0.3"""
    return PeriodicPair.constant(0.15, 0.0, samples=16)


@pytest.fixture
def hyperbolic_pair():
    """(k/4, iεe^{ikt})，k = 2，ε = 0.05，正双曲"""
    return PeriodicPair.hyperbolic_canonical(2, 0.05, samples=32)


@pytest.fixture
def temp_output_dir():
    """临时输出目录 fixture"""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture
def sample_db_dict():
    """两条轨道的数据库：g1 椭圆 R = 0.3，g2 双曲 k = 1"""
    return {
        "version": 1,
        "orbits": [
            {"id": "g1", "action": "1.0", "pair": {"kind": "el", "R": "0.3"}, "homology": [1], "n_max": 3},
            {"id": "g2", "action": 1.5, "pair": {"kind": "hyp", "k": 1, "positive": False}, "homology": [0], "n_max": 1},
        ],
        "L": "3.2",
        "gamma": None,
    }


@pytest.fixture
def sample_db_file(tmp_path, sample_db_dict):
    """写到临时目录的数据库文件"""
    path = tmp_path / "db.json"
    path.write_text(json.dumps(sample_db_dict), encoding="utf-8")
    return path


@pytest.fixture
def sample_counts_file(tmp_path):
    """δ(g1:2) = g1:1 的计数表，显式给出 L = 3.2 下六个生成元的次数"""
    path = tmp_path / "counts.json"
    path.write_text(json.dumps({
        "counts": [
            {"from": "g1:2", "to": "g1:1", "sigma": 1},
        ],
        "degrees": {"": 0, "g1:1": 0, "g2:1": 0, "g1:2": 1, "g1:1,g2:1": 1, "g1:3": 2},
    }), encoding="utf-8")
    return path
