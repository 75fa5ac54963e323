import numpy as np
import pytest

from sympcocycle.core import space_for_dim, standard_form


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def space2():
    return standard_form(1)


@pytest.fixture
def space4():
    return standard_form(2)


@pytest.fixture
def space6():
    return standard_form(3)


def basis_vec(dim, i):
    e = np.zeros(dim)
    e[i] = 1.0
    return e
