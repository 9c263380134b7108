import numpy as np
import pytest

from vimlab.rng import RngStream


@pytest.fixture
def stream():
    return RngStream(20240607)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation check")
