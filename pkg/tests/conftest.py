"""
Shared fixtures: a small 32x32 simulated dataset generated once per session and the matching
network configuration.
"""
import pytest

from nowcast.geometry import CameraIntrinsics
from nowcast.model.config import ModelConfig
from nowcast.sim.dataset import DatasetConfig, generate_dataset


TINY_INTRINSICS = CameraIntrinsics(fx=27.5, fy=27.5, cx=15.5, cy=15.5, width=32, height=32)

TINY_OFFSETS = (0.5, 1.0)

DATASET_SEED = 7


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return

    skip_slow = pytest.mark.skip(reason="needs --run-slow")

    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tiny_dataset_config(**changes) -> DatasetConfig:
    values = dict(n_sequences=3, duration=4.0, intrinsics=TINY_INTRINSICS, workers=1)

    values.update(changes)

    return DatasetConfig(**values)


def tiny_model_config(**changes) -> ModelConfig:
    values = dict(
        input_height=32,
        input_width=32,
        backbone_channels=8,
        motion_embed_dim=16,
        recurrent_hidden=16,
        motion_channels=8,
        motion_out_channels=8,
        head_channels=(8, 8),
        forecast_channels=8,
        past_count=3,
        future_count=len(TINY_OFFSETS),
        num_joints=5,
    )

    values.update(changes)

    return ModelConfig(**values)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Three 120-frame sequences: one each for train, val and test"""
    out_dir = tmp_path_factory.mktemp("tiny_dataset")

    generate_dataset(tiny_dataset_config(), seed=DATASET_SEED, out_dir=out_dir)

    return out_dir


@pytest.fixture
def model_config() -> ModelConfig:
    return tiny_model_config()
