import numpy as np
import pytest
import torch

from vanishnet.backbones import BackboneConfig, BackboneKind
from vanishnet.config import RunConfig
from vanishnet.model import VPNet


def pytest_configure(config):
    torch.set_num_threads(max(torch.get_num_threads(), 1))


@pytest.fixture(scope="session")
def tiny_config() -> RunConfig:
    """Smallest legal model: 32px input, narrow trunk; for fast unit tests."""
    return RunConfig(input_size=32, width=8, epochs=2, batch_size=4)


@pytest.fixture(scope="session")
def tiny_model(tiny_config) -> VPNet:
    return VPNet(
        tiny_config.backbone_config(),
        upsample=tiny_config.upsample_variant(),
        regression_scale=tiny_config.regression_scale_enum(),
        seed=0,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
