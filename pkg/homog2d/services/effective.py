"""
Homogenized tensors from the cell correctors, and the full corrector build.
"""

from __future__ import annotations

import logging

import numpy as np

from homog2d.core.errors import EllipticityError
from homog2d.models.effective import EffectiveTensors
from homog2d.services.cell import (
    CellFluxes,
    CorrectorBundle,
    cell_fluxes,
    compute_b,
    solve_chi,
    solve_flux_corrector,
    solve_theta,
    theta_rhs,
)
from homog2d.services.coefficients import GridCoefficients
from homog2d.services.mesh import DomainMesh
from homog2d.services.solver import DiscreteOperator, assemble_operator

logger = logging.getLogger(__name__)


def assemble_homogenized(
    grid: GridCoefficients, chi: np.ndarray, fluxes: CellFluxes | None = None
) -> EffectiveTensors:
    """
    Â_ik = ⟨σ_k⟩ on i-faces, V̂_i = ⟨σ_0⟩, B̂_k = ⟨B-drift of χ_k + P_k⟩, ĉ = ⟨c⟩ + ⟨B-drift of χ_0⟩.
    """
    fluxes = fluxes or cell_fluxes(grid, chi)
    m = grid.m
    A_hat = np.zeros((2, 2, m, m))
    V_hat = np.zeros((2, m, m))
    for i, sigma in enumerate((fluxes.sigma_x, fluxes.sigma_y)):
        V_hat[i] = sigma[0].mean(axis=(-2, -1))
        for k in (1, 2):
            A_hat[i, k - 1] = sigma[k].mean(axis=(-2, -1))
    B_hat = np.stack([fluxes.drift[k].mean(axis=(-2, -1)) for k in (1, 2)])
    c_hat = grid.samples.c.mean(axis=(-2, -1)) + fluxes.drift[0].mean(axis=(-2, -1))
    return EffectiveTensors(
        A_hat=A_hat,
        V_hat=V_hat,
        B_hat=B_hat,
        c_hat=c_hat,
        lam=grid.coefficients.lam,
        quadrature_N=grid.N,
        source=grid.coefficients.name,
    )


def check_effective_ellipticity(effective: EffectiveTensors) -> float:
    """Smallest eigenvalue of sym(Â) as a 2m×2m matrix; must be positive."""
    lowest, _ = effective.ellipticity()
    if lowest <= 0.0:
        raise EllipticityError(
            f"Homogenized tensor of '{effective.source}' is not elliptic (min eigenvalue {lowest:.3e})",
            details={"min_eigenvalue": lowest},
        )
    return lowest


def assemble_L0(effective: EffectiveTensors, mesh: DomainMesh) -> DiscreteOperator:
    """L₀ on the domain mesh through the same assembly path as L_ε."""
    return assemble_operator(effective.to_coefficient_set(), None, mesh)


def build_correctors(grid: GridCoefficients, tol: float = 1e-10) -> tuple[CorrectorBundle, EffectiveTensors]:
    """χ_0..χ_2, Â/V̂/B̂/ĉ, b, Θ_0..Θ_2 and E for one torus sampling."""
    chi = np.stack([solve_chi(grid, k, tol) for k in range(3)])
    fluxes = cell_fluxes(grid, chi)
    effective = assemble_homogenized(grid, chi, fluxes)
    b = compute_b(grid, chi, effective, fluxes)
    theta = np.stack(
        [solve_theta(grid, chi, k, effective, rhs=theta_rhs(grid, chi, effective, k, fluxes)) for k in range(3)]
    )
    E = solve_flux_corrector(b, grid.h)
    bundle = CorrectorBundle(N=grid.N, m=grid.m, digest=grid.digest, chi=chi, theta=theta, b=b, E=E)
    logger.info(
        f"{grid.coefficients.name}: correctors on N={grid.N}, Â diag "
        f"{np.round(np.diagonal(effective.legendre_matrix()), 6).tolist()}"
    )
    return bundle, effective


def effective_from_bundle(grid: GridCoefficients, bundle: CorrectorBundle) -> EffectiveTensors:
    """Recompute the effective tensors from cached correctors."""
    return assemble_homogenized(grid, np.asarray(bundle.chi))
