import math

import numpy as np
import pytest

from dichoscope.growth import builtin_rate, log_h_grid
from dichoscope.linsys import paper_log_system, paper_power_system

P_STABLE = np.diag([1.0, 0.0])


@pytest.fixture(scope="session")
def log_rate():
    return builtin_rate("log1p")


@pytest.fixture(scope="session")
def id_rate():
    return builtin_rate("identity")


@pytest.fixture(scope="session")
def exp_rate():
    return builtin_rate("exp")


@pytest.fixture(scope="session")
def log_case(log_rate):
    """ln(1+t) example on [e-1, h^-1(50)] with 40 log-h-uniform points."""
    grid = log_h_grid(log_rate, math.e - 1, log_rate.back(50.0), 40).array()
    return paper_log_system(), log_rate, grid


def power_case(alpha, n=30, hi=50.0):
    g = builtin_rate("identity")
    return paper_power_system(alpha), g, log_h_grid(g, 1.0, hi, n).array()
