import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coopsense.scenario import SceneConfig, table_targets  # noqa: E402
from coopsense.scenefile import Scene  # noqa: E402


@pytest.fixture
def cfg():
    return SceneConfig()


@pytest.fixture
def small_cfg():
    """A reduced grid for tests that only need the signal model, not the scale."""
    return SceneConfig(n_subcarriers=128, n_symbols=32, idft_points=1280, dft_points=320,
                       bandwidth=128 * 120e3, n_antennas=4)


@pytest.fixture
def table_scene():
    return Scene(SceneConfig(snr_active=math.inf, snr_passive=math.inf), table_targets())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
