from __future__ import annotations

import numpy as np
import pytest

from homog2d.core.errors import CoercivityError, CommensurabilityError, GridMismatchError
from homog2d.models.coefficients import CoefficientSet, FourierEntry
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.norms import norm
from homog2d.services.solver import (
    COERCIVITY_THRESHOLD,
    LAMBDA_CANDIDATES,
    assemble_operator,
    coercivity_probe,
    select_lambda,
    solve_dirichlet,
)
from homog2d.services.uniformity import manufactured_study


def _sine(mesh: DomainMesh) -> Field:
    return Field.from_function(mesh, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2))


def test_mesh_from_period():
    mesh = DomainMesh.for_period(0.125, 16)
    assert mesh.M + 1 == 128
    assert mesh.nodes_per_period(0.125) == 16
    with pytest.raises(CommensurabilityError):
        DomainMesh.for_period(0.3, 16)
    with pytest.raises(GridMismatchError):
        DomainMesh(M=0)


def test_identity_solve_matches_sine(identity):
    mesh = DomainMesh(M=31)
    exact = _sine(mesh)
    F = (2 * np.pi**2 + 1.0) * exact.interior
    u = solve_dirichlet(assemble_operator(identity, None, mesh), F=F, tol=1e-12)
    assert norm(u - exact, "L2") < 5e-3


def test_manufactured_order_is_two():
    study = manufactured_study(levels=(16, 32, 64))
    assert [h for h, _ in study.rows] == [1 / 16, 1 / 32, 1 / 64]
    assert study.order == pytest.approx(2.0, abs=0.2)


def test_constants_are_reproduced(laminate):
    mesh = DomainMesh.for_period(0.25, 8)
    u = solve_dirichlet(assemble_operator(laminate, 0.25, mesh), g=np.ones((1, mesh.num_boundary)))
    assert np.abs(u.interior - 1.0).max() < 1e-6


def test_dirichlet_data_is_kept(laminate):
    mesh = DomainMesh.for_period(0.25, 8)
    x1, _ = mesh.coordinates
    g = x1.ravel()[mesh.boundary_flat][None]
    u = solve_dirichlet(assemble_operator(laminate, 0.25, mesh), g=g)
    assert np.array_equal(u.boundary, g)


def test_system_solve_has_small_residual(full_lower_order):
    mesh = DomainMesh.for_period(0.25, 8)
    op = assemble_operator(full_lower_order, 0.25, mesh)
    F = np.ones((2, mesh.M, mesh.M))
    u = solve_dirichlet(op, F=F, tol=1e-10)
    assert np.abs(op.apply(u) - F).max() < 1e-6


def test_coercivity_probe_positive_for_presets(laminate, full_lower_order):
    mesh = DomainMesh.for_period(0.25, 8)
    assert coercivity_probe(assemble_operator(laminate, 0.25, mesh)) > 0.0
    assert assemble_operator(full_lower_order, 0.25, mesh).coercivity > 0.0


@pytest.mark.parametrize("trials", [0, 1, 31])
def test_coercivity_probe_rejects_too_few_trials(laminate, trials):
    op = assemble_operator(laminate, 0.25, DomainMesh.for_period(0.25, 8))
    with pytest.raises(CoercivityError) as excinfo:
        coercivity_probe(op, trials=trials)
    assert excinfo.value.details["minimum"] == 32


def test_negative_reaction_is_not_coercive():
    shifted = CoefficientSet(
        name="indefinite",
        m=1,
        A={"1.1.1.1": FourierEntry(constant=1.0), "2.2.1.1": FourierEntry(constant=1.0)},
        c={"1.1": FourierEntry(constant=-100.0)},
        mu=1.0,
        kappa=100.0,
    )
    op = assemble_operator(shifted, None, DomainMesh(M=15))
    with pytest.raises(CoercivityError):
        solve_dirichlet(op, F=np.ones((1, 15, 15)))


def test_select_lambda_reaches_threshold(full_lower_order):
    mesh = DomainMesh.for_period(0.25, 8)
    lam = select_lambda(full_lower_order, 0.25, mesh)
    assert lam in LAMBDA_CANDIDATES
    op = assemble_operator(full_lower_order.with_lambda(lam), 0.25, mesh)
    assert coercivity_probe(op) >= COERCIVITY_THRESHOLD


def test_with_lambda_shifts_diagonal(laminate):
    mesh = DomainMesh(M=7)
    op = assemble_operator(laminate, None, mesh)
    shifted = op.with_lambda(2.0)
    assert shifted.lam == 2.0
    gap = (shifted.matrix - op.matrix).toarray()
    assert np.allclose(gap, 2.0 * np.eye(op.size))
