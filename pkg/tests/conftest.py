import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if _ROOT not in sys.path:
    sys.path.insert(0, _ROOT)

import numpy as np
import pytest

from tll_sizer.dynamics import PendulumParams, pendulum_system
from tll_sizer.utils import Box, DomainBox


@pytest.fixture(autouse=True)
def testing_env(monkeypatch):
    monkeypatch.setenv('TLL_ENV', 'testing')


@pytest.fixture
def pendulum_params():
    return PendulumParams()


@pytest.fixture
def pendulum_domain():
    return DomainBox((-1.0, -1.0), (1.0, 1.0), m=1)


@pytest.fixture
def control_box():
    return Box((-6.0,), (6.0,))


@pytest.fixture
def pendulum(pendulum_params, pendulum_domain, control_box):
    return pendulum_system(pendulum_params, pendulum_domain, control_box)


@pytest.fixture
def unit_square():
    return DomainBox((0.0, 0.0), (1.0, 1.0), m=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def out_dir(tmp_path):
    return str(tmp_path / 'out')
