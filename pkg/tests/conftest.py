import numpy as np
import pytest

from src.analytic.single_period import SinglePeriodModel, reference_params
from tests.factories import logistic_scenario, make_scenario


@pytest.fixture
def reference_model():
    return SinglePeriodModel(reference_params())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scenario_factory():
    return make_scenario


@pytest.fixture
def logistic_factory():
    return logistic_scenario
