"""
地理令牌系统 - 测试公共夹具
/tests/conftest.py
"""
import numpy as np
import pytest

from geotoken.backend.config import ModelConfig, RunConfig
from geotoken.backend.data.geodata import make_sample
from geotoken.backend.model.transformer import GeoTransformer


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def model_config():
    return ModelConfig()


@pytest.fixture
def model(model_config):
    return GeoTransformer(model_config, seed=11)


@pytest.fixture
def example_sample():
    return make_sample(46.4157, 21.0756, -0.0424, 0.0132)


@pytest.fixture
def tiny_run_config(tmp_path):
    return RunConfig(
        epochs=2,
        batch_size=4,
        dataset_size=6,
        seed=3,
        output_path=tmp_path / "loss.csv",
    )
