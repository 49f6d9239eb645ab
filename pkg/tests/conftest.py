import numpy as np
import pytest

from linsarsa import features, harness, mdp, oracle, policy


@pytest.fixture(scope="session")
def two_state():
    return mdp.two_state_mdp()


@pytest.fixture(scope="session")
def suite():
    return harness.default_suite()


@pytest.fixture(scope="session")
def two_state_instance(suite):
    return suite[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gamma_zero(m):
    """Copy of ``m`` with no discounting."""
    return mdp.FiniteMdp(m.n_states, m.n_actions, m.kernel, m.rewards, 0.0, m.r_max)


@pytest.fixture(scope="session")
def two_state_sigma5(two_state):
    fm = features.one_hot(2, 2)
    op = policy.PolicyOperator.softmax(5.0)
    return two_state, fm, op, oracle.solve_fixed_point(two_state, fm, op)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS, line
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(line(n))
