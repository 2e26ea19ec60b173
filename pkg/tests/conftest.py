import numpy as np
import pytest
from hypothesis import settings

from cytodelay.experiments import scenario
from cytodelay.integrator import IntegrationConfig, integrate
from cytodelay.model import ConstantHistory, DiracKernel, State5

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def warm_integrator():
    """Force JIT compilation before any timed work."""
    scen = scenario("E0")
    integrate(scen.params, (DiracKernel(5.0), DiracKernel(3.0)),
              ConstantHistory(scen.histories[0]),
              IntegrationConfig(dt=0.01, t_end=1.0))


@pytest.fixture
def e0_params():
    return scenario("E0").params


@pytest.fixture
def e1_params():
    return scenario("E1").params


@pytest.fixture
def e2_params():
    return scenario("E2").params


def dirac_pair(tau1, tau2):
    return DiracKernel(float(tau1)), DiracKernel(float(tau2))


@pytest.fixture
def short_e0_trajectory(warm_integrator, e0_params):
    return integrate(e0_params, dirac_pair(5, 3),
                     ConstantHistory(State5(5, 5, 6, 3, 3.5)),
                     IntegrationConfig(dt=0.01, t_end=50.0))


def assert_close(actual, expected, tol, label=""):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    err = np.abs(actual - expected).max()
    assert err <= tol, f"{label}: |{actual} - {expected}| = {err} > {tol}"
