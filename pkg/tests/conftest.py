import os
import sys

import numpy as np
import pytest

# 与 main.py 一样以项目根目录为导入根 (src.xxx)
ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

import main  # noqa: E402
from src.core.lab_core import LabCore  # noqa: E402
from src.core.pipeline_manager import PipelineManager  # noqa: E402
from src.utils.config import SEED_ENV_VAR  # noqa: E402

TEMPLATE_CONFIG = os.path.join(ROOT_DIR, "config-template.toml")


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


@pytest.fixture(autouse=True)
def _isolated_base_dir(tmp_path, monkeypatch):
    """未指定 --config 时命令行会在项目根目录复制 config.toml，测试中改为临时目录"""
    monkeypatch.setattr(main, "_BASE_DIR", str(tmp_path / "lab_root"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def lab_config():
    return {
        "general": {"seed": 3, "output_dir": "output"},
        "montecarlo": {"samples": 2000, "chunk_size": 500, "workers": 1},
        "training": {"optimizer": "adam", "lr": 0.01, "steps": 20, "batch_size": 32, "loss": "mse"},
        "analysis": {"quadrature_nodes": 64, "classification_tol": 0.02},
    }


@pytest.fixture
def core(tmp_path, lab_config):
    pipelines = PipelineManager()
    pipelines.load_pipelines()
    return LabCore(lab_config, seed=3, output_dir=str(tmp_path / "out"), pipeline_manager=pipelines)
