"""
Shared fixtures: presets and small corrector bundles reused across modules.
"""

from __future__ import annotations

import pytest

from homog2d.services.coefficients import preset, sample_grid
from homog2d.services.effective import build_correctors


@pytest.fixture(scope="session")
def identity():
    return preset("identity")


@pytest.fixture(scope="session")
def laminate():
    return preset("laminate")


@pytest.fixture(scope="session")
def full_lower_order():
    return preset("full-lower-order")


@pytest.fixture(scope="session")
def laminate_grid(laminate):
    return sample_grid(laminate, 64)


@pytest.fixture(scope="session")
def laminate_correctors(laminate_grid):
    """(bundle, effective) for the laminate on a 64² torus."""
    return build_correctors(laminate_grid, tol=1e-10)


@pytest.fixture(scope="session")
def identity_correctors(identity):
    return build_correctors(sample_grid(identity, 16), tol=1e-10)


@pytest.fixture(scope="session")
def full_correctors(full_lower_order):
    grid = sample_grid(full_lower_order, 32)
    return grid, *build_correctors(grid, tol=1e-10)
