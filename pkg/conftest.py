# conftest.py
import sys
from pathlib import Path

import pytest

# 将项目根目录添加到 Python 路径
project_root = Path(__file__).parent.resolve()
sys.path.insert(0, str(project_root))

from src.model.config import EstimationConfig, RegressionConfig, TrainConfig  # noqa: E402


@pytest.fixture
def tmp_workdir(tmp_path, monkeypatch):
    """切换到临时目录，相对输出路径都落在这里"""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def small_train_config():
    """快速的生成网络训练配置"""
    return TrainConfig(epochs=30, minibatch_count=2, lr_window=5)


@pytest.fixture
def small_regression_config():
    return RegressionConfig(epochs=200, hidden_width=20)


@pytest.fixture
def small_estimation_config(small_train_config, small_regression_config):
    return EstimationConfig(generator=small_train_config, regression=small_regression_config, seed=0)
