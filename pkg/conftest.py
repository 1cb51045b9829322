"""
Shared fixtures for the peakgate test suite
"""

import sys

import numpy as np
import pytest

# Add current directory to path for imports
sys.path.insert(0, '.')

from peak_service import PeakService
from running_example import get_scenario, running_example_system
from seq_core import BridgeFunction, CertificatePair
from systems import coordinate_objective, nu_sequence


@pytest.fixture
def system():
    return running_example_system()


@pytest.fixture
def service():
    return PeakService()


@pytest.fixture(params=["a", "b", "c", "d"])
def any_scenario(request):
    return get_scenario(request.param)


def scenario_nu(name: str, index: int):
    """nu sequence of a named scenario for objective pi_index"""
    scenario = get_scenario(name)
    return nu_sequence(running_example_system(), scenario.points, coordinate_objective(index, 2))


def linear_pair(scale: float, beta: float) -> CertificatePair:
    """(h(s) = scale * s, beta)"""
    return CertificatePair(BridgeFunction(lambda s: scale * s, lambda v: v / scale, f"{scale}*s"), beta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
