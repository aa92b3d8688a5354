from __future__ import annotations

import numpy as np
import pytest

from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.norms import holder_seminorm, integrate, norm


@pytest.fixture
def mesh():
    return DomainMesh(M=15)


def test_constant_field(mesh):
    one = Field.from_function(mesh, lambda x1, x2: np.ones_like(x1))
    assert norm(one, "L2") == pytest.approx(1.0)
    assert norm(one, "L1") == pytest.approx(1.0)
    assert norm(one, "Linf") == 1.0
    assert norm(one, "H1semi") == pytest.approx(0.0, abs=1e-12)


def test_linear_field(mesh):
    ramp = Field.from_function(mesh, lambda x1, x2: x1)
    assert norm(ramp, "H1semi") == pytest.approx(1.0)
    assert norm(ramp, "W1psemi", p=4.0) == pytest.approx(1.0)
    # trapezoid rule is exact for x² only up to h²/6
    assert norm(ramp, "L2") ** 2 == pytest.approx(1 / 3 + mesh.h**2 / 6)
    assert holder_seminorm(ramp, 1.0) == pytest.approx(1.0)


def test_trapezoid_integrates_bilinear_exactly(mesh):
    x1, x2 = mesh.coordinates
    assert integrate(x1 * x2, mesh) == pytest.approx(0.25)


def test_interior_region_is_smaller(mesh):
    bump = Field.from_function(mesh, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2))
    assert norm(bump, "L2", region="interior") < norm(bump, "L2")
    assert norm(bump, "Linf", region="interior") == pytest.approx(1.0)


def test_vector_fields_use_euclidean_magnitude(mesh):
    pair = Field.from_full(mesh, np.stack([np.full((mesh.n, mesh.n), 3.0), np.full((mesh.n, mesh.n), 4.0)]))
    assert norm(pair, "Linf") == pytest.approx(5.0)
    assert norm(pair, "L2") == pytest.approx(5.0)
