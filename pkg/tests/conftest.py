import pytest
import torch

from services.numerics.rng import Rng
from tests.factories import make_episode, make_small_config


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long training runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def generator():
    g = torch.Generator()
    g.manual_seed(0)
    return g


@pytest.fixture
def small_config():
    return make_small_config()


@pytest.fixture
def episode_factory():
    return make_episode
