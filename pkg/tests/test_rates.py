from __future__ import annotations

import numpy as np
import pytest

from homog2d.core.errors import RateError
from homog2d.models.schemas import RateExperiment
from homog2d.services.coefficients import preset, sample_grid
from homog2d.services.effective import build_correctors
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.norms import norm
from homog2d.services.rates import (
    CORNER_CAVEAT,
    RateRow,
    dirichlet_corrector,
    expansion_residual_check,
    fit_rate,
    green_convergence,
    green_convergence_bound,
    measure_errors,
    refinement_change,
    run_rate_experiment,
    snap_to_period,
    summarize,
    truncated_slope,
    two_scale_expansion,
)

EPS = [0.25, 0.125, 0.0625]


def test_fit_rate_recovers_slope():
    fit = fit_rate([(eps, 3.0 * eps) for eps in EPS])
    assert fit.slope == pytest.approx(1.0)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert not fit.exact


def test_fit_rate_needs_three_points():
    with pytest.raises(RateError):
        fit_rate([(0.25, 1.0), (0.125, 0.5)])


def test_fit_rate_exact_rows():
    fit = fit_rate([(eps, 1e-12) for eps in EPS])
    assert fit.exact
    assert fit.slope is None
    assert fit.describe() == "exact"


def test_truncated_slope_uses_small_eps_half():
    points = [(eps, eps**2) for eps in (*EPS, 0.03125)]
    assert truncated_slope(points) == pytest.approx(2.0)


def test_summarize_orders_rows_by_descending_eps():
    rows = [RateRow("L2", eps, eps) for eps in reversed(EPS)]
    report = summarize("demo", rows)
    assert [row.eps for row in report.rows] == EPS
    assert report.fits["L2"].slope == pytest.approx(1.0)


def test_green_helpers():
    assert green_convergence_bound(0.1, 0.5) == pytest.approx(0.2)
    assert snap_to_period((0.3, 0.6), 0.25) == (0.25, 0.5)


def test_green_pairs_too_close(identity, identity_correctors):
    _, effective = identity_correctors
    with pytest.raises(RateError):
        green_convergence(identity, effective, [((0.5, 0.5), (0.6, 0.5))], EPS)


def test_green_convergence_for_identity_is_exact(identity, identity_correctors):
    _, effective = identity_correctors
    report = green_convergence(identity, effective, [((0.25, 0.5), (0.75, 0.5))], EPS)
    assert report.fits["pair1"].exact
    assert report.profile["pair1"] <= 1e-6


def test_two_scale_expansion_without_oscillation(identity_correctors):
    bundle, _ = identity_correctors
    mesh = DomainMesh.for_period(0.25, 8)
    u0 = Field.from_function(mesh, lambda x1, x2: np.sin(np.pi * x1) * x2)
    expanded = two_scale_expansion(u0, bundle, 0.25)
    np.testing.assert_allclose(expanded.full(), u0.full(), atol=1e-8)


def test_dirichlet_corrector_for_identity(identity):
    mesh = DomainMesh.for_period(0.25, 8)
    x1, _ = mesh.coordinates
    (phi1,) = dirichlet_corrector(identity, 0.25, mesh, 1)
    (phi0,) = dirichlet_corrector(identity, 0.25, mesh, 0)
    np.testing.assert_allclose(phi1.full()[0], x1, atol=1e-8)
    np.testing.assert_allclose(phi0.full()[0], 1.0, atol=1e-8)
    with pytest.raises(RateError):
        dirichlet_corrector(identity, 0.25, mesh, 3)


def test_identity_errors_vanish(identity, identity_correctors):
    bundle, effective = identity_correctors
    exp = RateExperiment(eps=EPS, nodes_per_period=8)
    rows = measure_errors(identity, bundle, effective, 0.25, exp)
    assert [row.norm for row in rows] == list(exp.norms)
    assert max(row.error for row in rows) <= 1e-8
    assert refinement_change(identity, bundle, effective, 0.25, exp) == 0.0


@pytest.fixture(scope="module", params=["laminate", "full-lower-order"])
def fine_correctors(request):
    """(coefficients, bundle, effective) on a 256² torus."""
    coefficients = preset(request.param)
    return coefficients, *build_correctors(sample_grid(coefficients, 256), tol=1e-10)


@pytest.mark.slow
def test_convergence_rates(fine_correctors):
    coefficients, bundle, effective = fine_correctors
    exp = RateExperiment(
        eps=[0.25, 0.125, 0.0625, 0.03125], nodes_per_period=16, norms=["L2", "H1", "H1_corrected"]
    )
    report = run_rate_experiment(exp, coefficients, bundle, effective)
    assert report.fits["L2"].slope >= 0.9
    assert report.fits["H1_corrected"].slope >= 0.9
    assert report.fits["H1"].slope < 0.5
    assert CORNER_CAVEAT in report.caveats


@pytest.mark.slow
def test_expansion_identity_is_second_order(fine_correctors):
    coefficients, bundle, effective = fine_correctors
    result = expansion_residual_check(coefficients, bundle, effective, 0.25, (8, 16))
    assert result.defects[1] < result.defects[0]
    assert result.order >= 1.5


def test_green_convergence_for_laminate(laminate, laminate_correctors):
    _, effective = laminate_correctors
    report = green_convergence(laminate, effective, [((0.3, 0.5), (0.7, 0.5))], EPS)
    fit = report.fits["pair1"]
    assert not fit.exact
    assert fit.slope >= 0.8
    assert 0.0 < report.profile["pair1"] < float("inf")


def test_dirichlet_corrector_approaches_affine_trace(laminate):
    points = []
    for eps in (0.25, 0.125, 0.0625, 0.03125):
        mesh = DomainMesh.for_period(eps, 8)
        (phi,) = dirichlet_corrector(laminate, eps, mesh, 1)
        trace = Field.from_function(mesh, lambda x1, x2: x1)
        assert np.array_equal(phi.boundary, trace.boundary)
        points.append((eps, norm(phi - trace, "L2")))
    assert fit_rate(points).slope >= 0.9


def test_expansion_identity_for_constant_coefficients(identity, identity_correctors):
    bundle, effective = identity_correctors
    result = expansion_residual_check(identity, bundle, effective, 0.25, (8, 16))
    assert max(result.defects) <= 1e-8
    assert result.order is None
    with pytest.raises(RateError):
        expansion_residual_check(identity, bundle, effective, 0.25, (16, 8))
