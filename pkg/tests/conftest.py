import sys

import numpy as np
import pytest

from replicator_geometry.instances import random_gaussian, random_landscape, random_spd


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def instance(rng):
    """A random 3-d landscape and Gaussian state."""
    return random_landscape(rng, 3), random_gaussian(rng, 3)


@pytest.fixture
def spd3(rng):
    return random_spd(rng, 3)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
