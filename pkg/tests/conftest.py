import numpy as np
import pytest

from eulerfem.physics import EquationOfState, primitive_to_conserved


@pytest.fixture
def eos14():
    return EquationOfState(gamma=1.4)


@pytest.fixture
def eos53():
    return EquationOfState(gamma=5.0 / 3.0)


def random_admissible_states(rng, n, dim=1, gamma=1.4, b=0.0):
    """Admissible conservative states with wide dynamic range."""
    eos = EquationOfState(gamma=gamma, b=b)
    rho = np.exp(rng.uniform(np.log(0.05), np.log(20.0), n))
    if b > 0.0:
        rho = np.minimum(rho, 0.5 / b)
    v = rng.uniform(-3.0, 3.0, (n, dim))
    p = np.exp(rng.uniform(np.log(1e-3), np.log(50.0), n))
    return primitive_to_conserved(rho, v, p, eos)
