import numpy as np
import pytest

from toricext import polytope as pt


@pytest.fixture(scope="session")
def interval():
    return pt.interval()


@pytest.fixture(scope="session")
def square():
    return pt.unit_square()


@pytest.fixture(scope="session")
def simplex():
    return pt.standard_simplex()


@pytest.fixture(scope="session")
def octagon():
    # blowup of the side-5 square with cut sizes (1, 1, 2); the running
    # asymmetric example
    return pt.blowup_polytope(5, 1, 1, 2)


@pytest.fixture(scope="session")
def octagon_sym():
    # same construction with equal cuts, symmetric under both reflections
    return pt.blowup_polytope(5, 1, 1, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
