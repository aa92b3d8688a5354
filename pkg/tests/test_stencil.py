from __future__ import annotations

import numpy as np
import pytest

from homog2d.services.coefficients import preset
from homog2d.services.mesh import DomainMesh
from homog2d.services.solver import assemble_adjoint, assemble_operator
from homog2d.services.spectral import dirichlet_solve, periodic_inverse_laplacian, periodic_symbol
from homog2d.services.stencil import Lattice, is_symmetric


def test_torus_gradient_kills_constants():
    lattice = Lattice(n=8, h=1 / 8, periodic=True, node_offset=0.5)
    assert np.abs(lattice.scalar_gradient @ np.ones(lattice.num_nodes)).max() == 0.0
    assert lattice.num_edges == 2 * lattice.num_nodes


def test_periodic_inverse_laplacian_matches_symbol():
    n, h = 32, 1 / 32
    x = (np.arange(n) + 0.5) * h
    rhs = np.cos(2 * np.pi * x)[:, None] * np.ones(n)[None, :] + 3.0
    u = periodic_inverse_laplacian(rhs, h)
    expected = (rhs - 3.0) / periodic_symbol(n, h)[1, 0]
    assert np.abs(u - expected).max() < 1e-12
    assert abs(u.mean()) < 1e-14


def test_dirichlet_solve_inverts_sine_mode():
    M = 15
    h = 1 / (M + 1)
    x = np.arange(1, M + 1) * h
    mode = np.outer(np.sin(np.pi * x), np.sin(np.pi * x))
    eigenvalue = (8 / h**2) * np.sin(np.pi / (2 * (M + 1))) ** 2
    u = dirichlet_solve(mode, h, shift=1.0)
    assert np.abs(u - mode / (eigenvalue + 1.0)).max() < 1e-12


@pytest.mark.parametrize("name", ["identity", "full-lower-order"])
def test_adjoint_set_assembles_to_transpose(name):
    op = assemble_operator(preset(name), 0.25, DomainMesh.for_period(0.25, 8))
    adjoint = assemble_adjoint(op)
    gap = abs(adjoint.full_matrix - op.full_matrix.T)
    assert gap.nnz == 0 or gap.max() <= 1e-12 * abs(op.full_matrix).max()


def test_symmetry_detection(laminate, full_lower_order):
    mesh = DomainMesh.for_period(0.25, 8)
    assert is_symmetric(assemble_operator(laminate, 0.25, mesh).full_matrix)
    assert not is_symmetric(assemble_operator(full_lower_order, 0.25, mesh).full_matrix)
