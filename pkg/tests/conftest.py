import math

import pytest

from rdslab.covering import CalibrationSearch, calibrate_reference
from rdslab.hyperbolic import HTParams
from rdslab.models import get_model


@pytest.fixture(scope="session")
def doubling():
    return get_model("doubling")


@pytest.fixture(scope="session")
def ternary():
    return get_model("ternary")


@pytest.fixture(scope="session")
def logistic():
    return get_model("logistic16")


@pytest.fixture(scope="session")
def logistic_calib(logistic):
    """Shared reference calibration for logistic16 at sigma = 0.1."""
    return calibrate_reference(logistic, 0.1, 0.05,
                               CalibrationSearch(rho_replicas=30), seed=7)


@pytest.fixture(scope="session")
def ht_params():
    """Detection parameters matched to logistic16 at sigma = 0.1: the recurrence
    budget -b*log(sigma) must beat the critical-set excursion rate."""
    return HTParams(sigma=math.sqrt(0.3), b=0.45, r=0.01, sparsity_N=2)
