import numpy as np
import pytest

from reflectdiff.geometry import Domain, build_grid
from reflectdiff.spectral import DiffusivityField, decompose, laplacian_basis


@pytest.fixture(scope="session")
def unit_grid():
    return build_grid(Domain.interval(0.0, 1.0), [256])


@pytest.fixture(scope="session")
def half_field(unit_grid):
    return DiffusivityField.constant(unit_grid, 0.5)


@pytest.fixture(scope="session")
def half_spectrum(half_field):
    return decompose(half_field)


@pytest.fixture(scope="session")
def unit_basis(unit_grid):
    return laplacian_basis(unit_grid)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(Domain.interval(0.0, 1.0), [64])


def random_field(grid, rng, low=0.3, high=2.0, modes=6):
    """Smooth positive field built from a few random cosines."""
    x = grid.centers[:, 0]
    g = sum(rng.standard_normal() * np.cos(np.pi * k * x) / k for k in range(1, modes + 1))
    g = (g - g.min()) / (np.ptp(g) + 1e-12)
    return DiffusivityField(grid, low + (high - low) * g)
