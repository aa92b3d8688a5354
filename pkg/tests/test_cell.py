from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from homog2d.core.errors import GridMismatchError, SolvabilityError
from homog2d.services.cell import (
    CorrectorBundle,
    cell_residuals,
    compute_b,
    flux_divergence,
    solve_chi,
    solve_flux_corrector,
    theta_residual,
)
from homog2d.services.coefficients import sample_grid


def test_laminate_corrector_slope(laminate_correctors):
    bundle, effective = laminate_correctors
    N = bundle.N
    chi1 = bundle.chi[1, 0, 0]
    # x-face between nodes N/4 - 1 and N/4 sits at y1 = 1/4, where a = 3
    slope = (chi1[N // 4, 0] - chi1[N // 4 - 1, 0]) * N
    assert slope == pytest.approx(np.sqrt(3.0) / 3.0 - 1.0, abs=1e-5)


def test_laminate_corrector_is_one_dimensional(laminate_correctors):
    bundle, _ = laminate_correctors
    assert np.abs(bundle.chi[2]).max() < 1e-8
    assert np.abs(bundle.chi[0]).max() == 0.0
    assert np.abs(bundle.chi[1] - bundle.chi[1][..., :1]).max() < 1e-8


def test_bundle_is_read_only(laminate_correctors):
    bundle, _ = laminate_correctors
    with pytest.raises(ValueError):
        bundle.chi[0, 0, 0, 0, 0] = 1.0


def test_laminate_invariants(laminate_grid, laminate_correctors):
    bundle, effective = laminate_correctors
    residuals = cell_residuals(laminate_grid, bundle)
    assert residuals["chi_residual"] < 1e-9
    assert residuals["chi_mean"] < 1e-12
    assert residuals["b_mean"] < 1e-8
    assert residuals["b_divergence"] < 1e-6
    assert residuals["E_antisymmetry"] == 0.0
    assert residuals["E_divergence"] < 1e-2
    assert theta_residual(laminate_grid, bundle, effective) == 0.0


def test_full_lower_order_invariants(full_correctors):
    grid, bundle, effective = full_correctors
    residuals = cell_residuals(grid, bundle)
    assert residuals["chi_residual"] < 1e-9
    assert residuals["chi_mean"] < 1e-8
    assert residuals["theta_mean"] < 1e-8
    assert residuals["b_mean"] < 1e-8
    assert residuals["b_divergence"] < 1e-6
    assert residuals["E_antisymmetry"] == 0.0
    assert residuals["E_divergence"] < 1e-2
    assert theta_residual(grid, bundle, effective) < 1e-10


def test_flux_corrector_recovers_divergence_free_field():
    n, h = 32, 1 / 32
    x = (np.arange(n) + 0.5) * h
    psi = np.sin(2 * np.pi * x)[:, None] * np.cos(2 * np.pi * x)[None, :]
    # b = curl of psi on the faces, so div b = 0 and mean b = 0
    b1 = (psi - np.roll(psi, 1, axis=1)) / h
    b2 = -(psi - np.roll(psi, 1, axis=0)) / h
    b = np.stack([b1, b2])[:, None, None, None]
    E = solve_flux_corrector(b, h)
    assert np.array_equal(E[0, 1], -E[1, 0])
    assert np.abs(flux_divergence(E, h) - b).max() < 1e-10 * np.abs(b).max()


def test_flux_corrector_of_zero_is_zero():
    E = solve_flux_corrector(np.zeros((2, 3, 1, 1, 16, 16)), 1 / 16)
    assert E.shape == (2, 2, 3, 1, 1, 16, 16)
    assert not np.any(E)


def test_flux_corrector_rejects_nonzero_mean():
    b = np.zeros((2, 3, 1, 1, 16, 16))
    b[1, 2] = 1.0
    with pytest.raises(SolvabilityError) as excinfo:
        solve_flux_corrector(b, 1 / 16)
    assert excinfo.value.details["i"] == 1
    assert excinfo.value.details["k"] == 2
    assert "b_22" in str(excinfo.value)


def test_flux_corrector_rejects_constant_field():
    with pytest.raises(SolvabilityError):
        solve_flux_corrector(np.ones((2, 3, 1, 1, 16, 16)), 1 / 16)


def test_compute_b_rejects_correctors_from_another_grid(laminate_grid, laminate_correctors):
    _, effective = laminate_correctors
    coarse = np.zeros((3, 1, 1, laminate_grid.N // 2, laminate_grid.N // 2))
    with pytest.raises(GridMismatchError):
        compute_b(laminate_grid, coarse, effective)


def test_mean_defect_is_relative_to_field_size(laminate_grid, laminate_correctors):
    bundle, _ = laminate_correctors
    N = bundle.N
    # a small χ with a mean as large as its amplitude must still be flagged
    chi = np.zeros((3, 1, 1, N, N))
    chi[1] = 1e-6
    tiny = CorrectorBundle(
        N=N, m=1, digest=bundle.digest, chi=chi, theta=np.zeros_like(chi), b=np.array(bundle.b), E=np.array(bundle.E)
    )
    residuals = cell_residuals(laminate_grid, tiny)
    assert residuals["chi_mean"] == pytest.approx(1.0)
    assert residuals["theta_mean"] == 0.0


def _laminate_chi1(y: np.ndarray, resolution: int = 2**14) -> np.ndarray:
    """χ₁(y₁) from χ′ = √3/(2 + sin 2πy) − 1, up to a constant; y must lie on the fine lattice."""
    fine = np.arange(resolution + 1) / resolution
    integral = cumulative_trapezoid(np.sqrt(3.0) / (2.0 + np.sin(2 * np.pi * fine)) - 1.0, fine, initial=0.0)
    return integral[np.rint(y * resolution).astype(int)]


@pytest.mark.slow
def test_laminate_corrector_refines_at_second_order(laminate):
    errors = []
    for N in (64, 128, 256):
        chi1 = solve_chi(sample_grid(laminate, N), 1, tol=1e-10)[0, 0, :, 0]
        exact = _laminate_chi1((np.arange(N) + 0.5) / N)
        errors.append(np.abs((chi1 - chi1.mean()) - (exact - exact.mean())).max())
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert orders.min() >= 1.8
