import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sisopt import NetworkInstance, generate_scale_free  # noqa: E402


def single_node(lam=0.1, delta=0.1, alpha=1.0, c=10.0, w=1.0):
    return NetworkInstance.from_matrix(np.zeros((1, 1)), [lam], [delta], [alpha / delta], [c], [w])


def two_cycle(b01=0.5, b10=0.5, lam=(0.1, 0.1), delta=(0.1, 0.1), alpha=1.0, c=(10.0, 10.0), w=(1.0, 1.0)):
    """Edges 0->1 with rate ``b01`` and 1->0 with rate ``b10``."""
    B = np.array([[0.0, b10], [b01, 0.0]])
    delta = np.asarray(delta, float)
    return NetworkInstance.from_matrix(B, lam, delta, alpha / delta, c, w)


def random_instance(n, seed, nu=1.0, zero_lambda=False, dmin=2):
    return generate_scale_free(n, dmin=min(dmin, n - 1), seed=seed, nu=nu, zero_lambda=zero_lambda)


@pytest.fixture
def node():
    return single_node()


@pytest.fixture
def cycle():
    return two_cycle()


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
