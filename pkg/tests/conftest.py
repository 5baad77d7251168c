import pytest

from aoisched.distributions import Exponential
from aoisched.scenario import PolicyConfig, Scenario, SourceSpec


def exp_scenario(n=1, rho=1.0, cost=1.0, mu=2.0, gamma=1.0, policy="sr", horizon=1e4, seed=3):
    sources = tuple(SourceSpec(rho, cost, Exponential(mu), Exponential(gamma)) for _ in range(n))
    return Scenario(sources, PolicyConfig(policy), horizon=horizon, seed=seed)


@pytest.fixture
def make_exp_scenario():
    return exp_scenario
