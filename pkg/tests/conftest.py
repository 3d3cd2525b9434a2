import math

import pytest
from hypothesis import HealthCheck, settings

from resilient_consensus.adversary import (
    DeterministicErrorModel,
    GmmSpec,
    Misbehavior,
    StochasticErrorModel,
    Window,
)
from resilient_consensus.engine import GraphSpec, RunConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Mixture used for the stochastic attacker throughout the suite.
ATTACK_GMM = GmmSpec(((0.5, 0.05, 0.05), (0.5, 0.15, 0.2)))


def phi(z: float) -> float:
    """Standard normal CDF from the stdlib, independent of the package's scipy path."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def deterministic_setup(**kw) -> RunConfig:
    """Ten-node ER(0.7) network; node 0 attacks with 0.5 cos k, node 4 fails with 0.5 * 0.6^k."""
    mis = (
        Misbehavior(0, DeterministicErrorModel("cosine", 0.5, 1.0), "malicious"),
        Misbehavior(4, DeterministicErrorModel("geometric", 0.5, ratio=0.6), "faulty"),
    )
    base = dict(graph=GraphSpec(n=10, p_edge=0.7), misbehaving=mis, seed=1, horizon=500, alpha=5.0, rho=0.9)
    base.update(kw)
    return RunConfig(**base)


def stochastic_setup(**kw) -> RunConfig:
    """Same network with a Bernoulli x GMM attacker and a 10-round normal-error fault."""
    mis = (
        Misbehavior(0, StochasticErrorModel(0.8, ATTACK_GMM), "malicious"),
        Misbehavior(4, StochasticErrorModel(1.0, GmmSpec.normal(0.1, 0.04), Window(0, 9)), "faulty"),
    )
    base = dict(
        graph=GraphSpec(n=10, p_edge=0.7),
        misbehaving=mis,
        algorithm="sdcc",
        link_reliability=0.8,
        seed=1,
        horizon=200,
        alpha=5.0,
        rho=0.9,
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture
def ddcc_cfg():
    return deterministic_setup()


@pytest.fixture
def sdcc_cfg():
    return stochastic_setup()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
