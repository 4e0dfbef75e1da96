import numpy as np
import pytest

from multiscale_spde.cell import Coefficients, solve_cell


@pytest.fixture(scope="session")
def heat():
    return Coefficients.heat()


@pytest.fixture(scope="session")
def cosine():
    return Coefficients.cosine_potential(1.0)


@pytest.fixture(scope="session")
def cosine_cell(cosine):
    """Full cell solution for the A = 1 cosine potential, shared by all tests."""
    return solve_cell(cosine)


@pytest.fixture(scope="session")
def gibbs_grid():
    """Quadrature oracle: grid values of the invariant density exp(-2A cos x)."""

    def build(amplitude: float = 1.0, n: int = 2048) -> np.ndarray:
        x = 2.0 * np.pi * np.arange(n) / n
        values = np.exp(-2.0 * amplitude * np.cos(x))
        return values / values.mean()

    return build
