import numpy as np
import pytest

from robustxai.network import Activation, Network
from robustxai.numerics import make_rng


def scalar_net(w=1.0, b=0.0, activation=None, out=1.0):
    """1 -> 1 -> 1 network ``out * act(w x + b)``."""
    act = activation or Activation.softplus(1.0)
    return Network((np.array([[w]]), np.array([[out]])), (np.array([b]), np.zeros(1)), act)


def linear_net(w, b=0.0):
    """Single affine layer producing one score ``w . x + b``."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return Network((w,), (np.full(w.shape[0], b, dtype=float),), Activation.softplus(1.0))


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_softplus(rng):
    return Network.random([5, 7, 6, 3], Activation.softplus(3.0), rng, scale=1.0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
