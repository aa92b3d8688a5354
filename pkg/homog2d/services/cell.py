"""
Periodic cell problems: correctors χ, fluxes, b, Θ and the flux corrector E.

Array layouts (all over the N×N torus, last two axes):
  chi, theta  (3, m, m, N, N)     [k, γ, β]; k = 0 is the V/c corrector
  b           (2, 3, m, m, N, N)  [i, k, α, γ]; b_1k on x-faces, b_2k on y-faces
  E           (2, 2, 3, m, m, N, N) [j, i, k, α, γ] on cell corners
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from homog2d.core.errors import GridMismatchError, SolvabilityError, SolverError
from homog2d.models.effective import EffectiveTensors
from homog2d.services.coefficients import GridCoefficients
from homog2d.services.krylov import krylov_solve, relative_residual
from homog2d.services.spectral import periodic_inverse_laplacian
from homog2d.services.stencil import split_edges, unit_gradient

logger = logging.getLogger(__name__)

SOLVABILITY_TOL = 1e-6


@dataclass(frozen=True)
class CorrectorBundle:
    N: int
    m: int
    digest: str
    chi: np.ndarray
    theta: np.ndarray
    b: np.ndarray
    E: np.ndarray
    residuals: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for array in (self.chi, self.theta, self.b, self.E):
            array.flags.writeable = False


def _project(vector: np.ndarray, m: int) -> np.ndarray:
    """Remove the per-component mean."""
    blocks = vector.reshape(m, -1)
    return (blocks - blocks.mean(axis=1, keepdims=True)).ravel()


def _mean_diffusion(grid: GridCoefficients) -> np.ndarray:
    s = grid.samples
    return np.array([0.5 * (s.a11[a, a].mean() + s.a22[a, a].mean()) for a in range(grid.m)])


def _cell_operator(grid: GridCoefficients) -> tuple[spla.LinearOperator, spla.LinearOperator]:
    """Mean-zero projected stiffness and its FFT-Laplacian preconditioner."""
    m, N, h = grid.m, grid.N, grid.h
    size = m * N * N
    stiffness = grid.stiffness
    scale = _mean_diffusion(grid)

    def matvec(x: np.ndarray) -> np.ndarray:
        return _project(stiffness @ _project(x, m), m)

    def precondition(x: np.ndarray) -> np.ndarray:
        blocks = x.reshape(m, N, N)
        return (periodic_inverse_laplacian(blocks, h) / scale[:, None, None]).ravel()

    operator = spla.LinearOperator((size, size), matvec=matvec, rmatvec=matvec, dtype=np.float64)
    preconditioner = spla.LinearOperator((size, size), matvec=precondition, dtype=np.float64)
    return operator, preconditioner


def cell_rhs(grid: GridCoefficients, k: int, beta: int) -> np.ndarray:
    """−Gᵀ𝔸 e_k e^β for k ≥ 1, −Gᵀ𝒱 e^β for k = 0."""
    m, n_nodes = grid.m, grid.lattice.num_nodes
    if k == 0:
        unit = np.zeros(m * n_nodes)
        unit[beta * n_nodes : (beta + 1) * n_nodes] = 1.0
        flux = grid.drift_in @ unit
    else:
        flux = grid.flux @ unit_gradient(grid.lattice, m, k, beta)
    return -(grid.gradient.T @ flux)


def solve_chi(grid: GridCoefficients, k: int, tol: float = 1e-10) -> np.ndarray:
    """
    Periodic corrector χ_k, mean zero per component; shape (m(γ), m(β), N, N).

    Column β solves Gᵀ𝔸Gχ = rhs with CG (symmetric stiffness) or BiCGStab.
    """
    m, N = grid.m, grid.N
    operator, preconditioner = _cell_operator(grid)
    chi = np.zeros((m, m, N, N))
    for beta in range(m):
        rhs = _project(cell_rhs(grid, k, beta), m)
        try:
            result = krylov_solve(
                operator,
                rhs,
                symmetric=grid.symmetric,
                preconditioner=preconditioner,
                tol=tol,
                label=f"chi_{k} column {beta + 1}",
            )
        except SolverError as exc:
            exc.details["hint"] = "cell stiffness singular beyond constants; check ellipticity"
            raise
        chi[:, beta] = _project(result.solution, m).reshape(m, N, N)
    return chi


@dataclass(frozen=True)
class CellFluxes:
    """σ on x/y faces and the B-drift on nodes, (3, m(α), m(β), N, N) each."""

    sigma_x: np.ndarray
    sigma_y: np.ndarray
    drift: np.ndarray


def cell_fluxes(grid: GridCoefficients, chi: np.ndarray) -> CellFluxes:
    m, N, n_nodes = grid.m, grid.N, grid.lattice.num_nodes
    sigma_x = np.zeros((3, m, m, N, N))
    sigma_y = np.zeros((3, m, m, N, N))
    drift = np.zeros((3, m, m, N, N))
    for k in range(3):
        for beta in range(m):
            gradient = grid.gradient @ chi[k, :, beta].ravel()
            if k == 0:
                unit = np.zeros(m * n_nodes)
                unit[beta * n_nodes : (beta + 1) * n_nodes] = 1.0
                flux = grid.flux @ gradient + grid.drift_in @ unit
            else:
                gradient = gradient + unit_gradient(grid.lattice, m, k, beta)
                flux = grid.flux @ gradient
            sx, sy = split_edges(flux, grid.lattice, m)
            sigma_x[k, :, beta] = sx
            sigma_y[k, :, beta] = sy
            drift[k, :, beta] = (grid.drift_out @ gradient).reshape(m, N, N)
    return CellFluxes(sigma_x=sigma_x, sigma_y=sigma_y, drift=drift)


def compute_b(
    grid: GridCoefficients, chi: np.ndarray, effective: EffectiveTensors, fluxes: CellFluxes | None = None
) -> np.ndarray:
    """b_ik = Â_ik − σ_k|_i (k ≥ 1), b_i0 = V̂_i − σ_0|_i; located on i-faces."""
    expected = (3, grid.m, grid.m, grid.N, grid.N)
    if chi.shape != expected:
        raise GridMismatchError(
            f"Correctors have shape {chi.shape}, grid expects {expected}",
            details={"chi_shape": list(chi.shape), "grid_N": grid.N, "grid_m": grid.m},
        )
    fluxes = fluxes or cell_fluxes(grid, chi)
    m, N = grid.m, grid.N
    b = np.zeros((2, 3, m, m, N, N))
    for i, sigma in enumerate((fluxes.sigma_x, fluxes.sigma_y)):
        b[i, 0] = effective.V_hat[i][:, :, None, None] - sigma[0]
        for k in (1, 2):
            b[i, k] = effective.A_hat[i, k - 1][:, :, None, None] - sigma[k]
    return b


def theta_rhs(
    grid: GridCoefficients, chi: np.ndarray, effective: EffectiveTensors, k: int, fluxes: CellFluxes | None = None
) -> np.ndarray:
    fluxes = fluxes or cell_fluxes(grid, chi)
    if k == 0:
        return effective.c_hat[:, :, None, None] - grid.samples.c - fluxes.drift[0]
    return effective.B_hat[k - 1][:, :, None, None] - fluxes.drift[k]


def solve_theta(
    grid: GridCoefficients, chi: np.ndarray, k: int, effective: EffectiveTensors, *, rhs: np.ndarray | None = None
) -> np.ndarray:
    """ΔΘ_k = B̂_k − B_k − B_i∂_iχ_k (k ≥ 1) or ĉ − c − B_i∂_iχ_0, mean zero."""
    rhs = theta_rhs(grid, chi, effective, k) if rhs is None else rhs
    mean = np.abs(rhs.mean(axis=(-2, -1))).max()
    scale = max(float(np.abs(rhs).max()), 1e-10)
    if mean > SOLVABILITY_TOL * scale:
        raise SolvabilityError(
            f"Θ_{k} right-hand side has mean {mean:.3e} (sup {scale:.3e})",
            details={"k": k, "mean": float(mean), "sup": scale},
        )
    if not np.any(rhs):
        return np.zeros_like(rhs)
    return -periodic_inverse_laplacian(rhs, grid.h)


def theta_residual(grid: GridCoefficients, bundle: CorrectorBundle, effective: EffectiveTensors) -> float:
    """max_k ‖Δ_hΘ_k − rhs_k‖∞ / ‖rhs_k‖∞ with the 5-point torus Laplacian."""
    N = grid.N
    chi = np.asarray(bundle.chi)
    fluxes = cell_fluxes(grid, chi)
    laplacian = grid.lattice.scalar_gradient.T @ grid.lattice.scalar_gradient
    worst = 0.0
    for k in range(3):
        rhs = theta_rhs(grid, chi, effective, k, fluxes)
        theta = np.asarray(bundle.theta[k]).reshape(-1, N * N)
        applied = -(laplacian @ theta.T).T.reshape(rhs.shape)
        gap = float(np.abs(applied - rhs).max())
        scale = float(np.abs(rhs).max())
        worst = max(worst, gap / scale if scale > 0 else gap)
    return worst


def solve_flux_corrector(b: np.ndarray, h: float, tol: float = SOLVABILITY_TOL) -> np.ndarray:
    """
    E from Δf_ik = b_ik: E_21k = ∂_2 f_1k − ∂_1 f_2k on corners, E_12 = −E_21.

    Every (i, k, α, β) block of b must have zero mean relative to ‖b‖∞.
    """
    means = np.abs(b.mean(axis=(-2, -1)))
    scale = max(float(np.abs(b).max()), 1e-10)
    if means.size and means.max() > tol * scale:
        i, k, alpha, beta = (int(index) for index in np.unravel_index(int(means.argmax()), means.shape))
        raise SolvabilityError(
            f"b_{i + 1}{k} block (α={alpha + 1}, β={beta + 1}) has mean {means.max():.3e} (sup {scale:.3e})",
            details={"i": i, "k": k, "alpha": alpha, "beta": beta, "mean": float(means.max()), "sup": scale},
        )
    f = -periodic_inverse_laplacian(b, h)
    f1, f2 = f[0], f[1]
    corner = (np.roll(f1, -1, axis=-1) - f1) / h - (np.roll(f2, -1, axis=-2) - f2) / h
    E = np.zeros((2, 2, *b.shape[1:]))
    E[1, 0] = corner
    E[0, 1] = -corner
    return E


def flux_divergence(E: np.ndarray, h: float) -> np.ndarray:
    """∂_j E_jik on i-faces, same layout as b."""
    corner = E[1, 0]
    recovered = np.empty((2, *corner.shape))
    recovered[0] = (corner - np.roll(corner, 1, axis=-1)) / h
    recovered[1] = -(corner - np.roll(corner, 1, axis=-2)) / h
    return recovered


def flux_divergence_defect(bundle: CorrectorBundle, h: float | None = None) -> float:
    h = h if h is not None else 1.0 / bundle.N
    scale = max(float(np.abs(bundle.b).max()), 1.0)
    return float(np.abs(flux_divergence(bundle.E, h) - bundle.b).max()) / scale


def cell_residuals(grid: GridCoefficients, bundle: CorrectorBundle) -> dict[str, float]:
    """Invariant defects recomputed from the stored arrays."""
    m, h = grid.m, grid.h
    chi_residual = 0.0
    for k in range(3):
        for beta in range(m):
            rhs = cell_rhs(grid, k, beta)
            x = bundle.chi[k, :, beta].ravel()
            if np.any(rhs) or np.any(x):
                chi_residual = max(chi_residual, relative_residual(grid.stiffness, x, rhs))

    def mean_defect(array: np.ndarray) -> float:
        mean = float(np.abs(array.mean(axis=(-2, -1))).max())
        scale = float(np.abs(array).max())
        return mean / scale if scale > 0 else mean

    b_div = np.zeros_like(bundle.b[0])
    b_div += (bundle.b[0] - np.roll(bundle.b[0], 1, axis=-2)) / h
    b_div += (bundle.b[1] - np.roll(bundle.b[1], 1, axis=-1)) / h
    b_scale = max(float(np.abs(bundle.b).max()), 1.0) / h
    return {
        "chi_residual": chi_residual,
        "chi_mean": mean_defect(bundle.chi),
        "theta_mean": mean_defect(bundle.theta),
        "b_mean": mean_defect(bundle.b),
        "b_divergence": float(np.abs(b_div).max()) / b_scale,
        "E_antisymmetry": float(np.abs(bundle.E + np.swapaxes(bundle.E, 0, 1)).max()),
        "E_divergence": flux_divergence_defect(bundle, h),
    }
