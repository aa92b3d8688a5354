"""
Preset coefficient sets, ellipticity/boundedness checks and torus sampling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from homog2d.core.errors import AliasingError, CoefficientError, EllipticityError
from homog2d.models.coefficients import CoefficientSet, FourierEntry
from homog2d.services.stencil import (
    Lattice,
    StaggeredSamples,
    drift_into_edges,
    drift_onto_nodes,
    flux_matrix,
    gradient_matrix,
    is_symmetric,
    sample_staggered,
)

logger = logging.getLogger(__name__)

PRESET_NAMES = ("identity", "laminate", "smooth-checkerboard", "full-lower-order")
DEFAULT_CHECK_DENSITY = 64
MIN_CHECK_DENSITY = 16


def _const(value: float) -> FourierEntry:
    return FourierEntry(constant=value)


def _identity() -> CoefficientSet:
    return CoefficientSet(
        name="identity",
        m=1,
        A={"1.1.1.1": _const(1.0), "2.2.1.1": _const(1.0)},
        lam=1.0,
        mu=1.0,
    )


def _laminate() -> CoefficientSet:
    # a(y) = 2 + sin 2πy1, isotropic
    a = FourierEntry(constant=2.0, modes=[(1, 0, 0.0, 1.0)])
    return CoefficientSet(name="laminate", m=1, A={"1.1.1.1": a, "2.2.1.1": a}, lam=0.0, mu=1.0 / 3.0)


def _smooth_checkerboard() -> CoefficientSet:
    # 2 + 0.8 sin 2πy1 sin 2πy2
    a = FourierEntry(constant=2.0, modes=[(1, -1, 0.4, 0.0), (1, 1, -0.4, 0.0)])
    return CoefficientSet(
        name="smooth-checkerboard", m=1, A={"1.1.1.1": a, "2.2.1.1": a}, lam=0.0, mu=0.35
    )


def _full_lower_order() -> CoefficientSet:
    cross_11 = FourierEntry(modes=[(0, 1, 0.0, 0.3)])
    cross_22 = FourierEntry(modes=[(1, 0, 0.2, 0.0)])
    coupling_11 = FourierEntry(modes=[(0, 1, 0.25, 0.0)])
    coupling_22 = _const(0.25)
    A = {
        "1.1.1.1": FourierEntry(constant=2.0, modes=[(1, 0, 0.0, 0.5)]),
        "2.2.1.1": FourierEntry(constant=2.0, modes=[(0, 1, 0.5, 0.0)]),
        "1.1.2.2": FourierEntry(constant=1.5, modes=[(1, 1, 0.4, 0.0)]),
        "2.2.2.2": FourierEntry(constant=1.5, modes=[(1, 0, 0.0, 0.4)]),
        "1.2.1.1": cross_11,
        "2.1.1.1": cross_11,
        "1.2.2.2": cross_22,
        "2.1.2.2": cross_22,
        "1.1.1.2": coupling_11,
        "1.1.2.1": coupling_11,
        "2.2.1.2": coupling_22,
        "2.2.2.1": coupling_22,
    }
    V = {
        "1.1.1": FourierEntry(modes=[(0, 1, 0.0, 0.5)]),
        "2.1.2": FourierEntry(modes=[(1, 0, 0.4, 0.0)]),
        "1.2.1": FourierEntry(modes=[(1, -1, 0.3, 0.0)]),
    }
    B = {
        "1.1.1": FourierEntry(modes=[(0, 1, 0.5, 0.0)]),
        "2.2.1": FourierEntry(modes=[(1, 0, 0.0, 0.4)]),
        "2.2.2": FourierEntry(modes=[(1, 1, 0.0, 0.3)]),
    }
    c = {
        "1.1": FourierEntry(constant=0.5, modes=[(1, 0, 0.5, 0.0)]),
        "1.2": FourierEntry(modes=[(0, 1, 0.0, 0.3)]),
        "2.1": FourierEntry(modes=[(0, 1, 0.0, -0.3)]),
        "2.2": FourierEntry(modes=[(0, 1, 0.2, 0.0)]),
    }
    return CoefficientSet(
        name="full-lower-order", m=2, A=A, V=V, B=B, c=c, lam=2.0, mu=0.3, kappa=1.0
    )


_PRESETS = {
    "identity": _identity,
    "laminate": _laminate,
    "smooth-checkerboard": _smooth_checkerboard,
    "full-lower-order": _full_lower_order,
}


def preset(name: str) -> CoefficientSet:
    """Return a validated preset coefficient set."""
    try:
        factory = _PRESETS[name]
    except KeyError as exc:
        raise CoefficientError(
            f"Unknown preset '{name}'", details={"known": list(PRESET_NAMES)}
        ) from exc
    coeffs = factory()
    verify_ellipticity(coeffs, DEFAULT_CHECK_DENSITY)
    verify_boundedness(coeffs, DEFAULT_CHECK_DENSITY)
    return coeffs


def _sample_lattice(density: int) -> tuple[np.ndarray, np.ndarray]:
    y = np.arange(density, dtype=np.float64) / density
    return np.meshgrid(y, y, indexing="ij")


def verify_ellipticity(coeffs: CoefficientSet, density: int = DEFAULT_CHECK_DENSITY) -> float:
    """
    Smallest eigenvalue of the symmetrized 2m×2m matrix a_ij^{αβ} over a density² grid.

    Also checks the upper bound |Aξ| ≤ μ⁻¹|ξ|.
    """
    if density < MIN_CHECK_DENSITY:
        raise CoefficientError(
            f"Ellipticity check needs a lattice of at least {MIN_CHECK_DENSITY}², got {density}²",
            details={"density": density, "minimum": MIN_CHECK_DENSITY},
        )
    y1, y2 = _sample_lattice(density)
    tensor = coeffs.tensor_A(y1, y2)  # (i, j, α, β, d, d)
    size = 2 * coeffs.m
    matrices = np.transpose(tensor, (4, 5, 0, 2, 1, 3)).reshape(density, density, size, size)
    symmetric = 0.5 * (matrices + np.swapaxes(matrices, -1, -2))
    lowest = np.linalg.eigvalsh(symmetric)[..., 0]
    norms = np.linalg.norm(matrices, ord=2, axis=(-2, -1))

    worst = np.unravel_index(np.argmin(lowest), lowest.shape)
    min_eig = float(lowest[worst])
    point = (float(y1[worst]), float(y2[worst]))
    if min_eig <= 0.0:
        raise EllipticityError(
            f"Coefficients of '{coeffs.name}' are not elliptic at y={point}",
            details={"point": point, "min_eigenvalue": min_eig},
        )
    if min_eig < coeffs.mu - 1e-12:
        raise EllipticityError(
            f"Declared μ={coeffs.mu} exceeds the ellipticity constant {min_eig:.6g} at y={point}",
            details={"point": point, "min_eigenvalue": min_eig, "mu": coeffs.mu},
        )
    peak = np.unravel_index(np.argmax(norms), norms.shape)
    if norms[peak] > 1.0 / coeffs.mu + 1e-12:
        where = (float(y1[peak]), float(y2[peak]))
        raise EllipticityError(
            f"|A| = {norms[peak]:.6g} exceeds 1/μ = {1.0 / coeffs.mu:.6g} at y={where}",
            details={"point": where, "norm": float(norms[peak]), "mu": coeffs.mu},
        )
    logger.debug(f"{coeffs.name}: min eigenvalue {min_eig:.6g} on a {density}² grid")
    return min_eig


def verify_boundedness(coeffs: CoefficientSet, density: int = DEFAULT_CHECK_DENSITY) -> float:
    """Largest entry magnitude of V, B, c over the sample grid; must not exceed κ."""
    if not coeffs.has_lower_order:
        return 0.0
    y1, y2 = _sample_lattice(density)
    peak = 0.0
    for i in range(2):
        peak = max(peak, float(np.abs(coeffs.v_component(i, y1, y2)).max()))
        peak = max(peak, float(np.abs(coeffs.b_component(i, y1, y2)).max()))
    peak = max(peak, float(np.abs(coeffs.c_values(y1, y2)).max()))
    if peak > coeffs.kappa + 1e-12:
        raise CoefficientError(
            f"Lower-order coefficients of '{coeffs.name}' reach {peak:.6g} > κ={coeffs.kappa}",
            details={"sup": peak, "kappa": coeffs.kappa},
        )
    return peak


@dataclass(frozen=True)
class GridCoefficients:
    """Coefficient samples on the N×N torus with unknowns at cell centres."""

    N: int
    m: int
    coefficients: CoefficientSet
    lattice: Lattice
    samples: StaggeredSamples
    digest: str

    @property
    def h(self) -> float:
        return self.lattice.h

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        return gradient_matrix(self.lattice, self.m)

    @cached_property
    def flux(self) -> sp.csr_matrix:
        return flux_matrix(self.lattice, self.samples)

    @cached_property
    def drift_in(self) -> sp.csr_matrix:
        return drift_into_edges(self.lattice, self.samples)

    @cached_property
    def drift_out(self) -> sp.csr_matrix:
        return drift_onto_nodes(self.lattice, self.samples)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Periodic Gᵀ𝔸G; its kernel is the per-component constants."""
        return (self.gradient.T @ self.flux @ self.gradient).tocsr()

    @cached_property
    def symmetric(self) -> bool:
        return is_symmetric(self.stiffness)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def sample_grid(coeffs: CoefficientSet, N: int) -> GridCoefficients:
    """
    Sample on the torus: nodes at ((i+½)h, (j+½)h), a11/V1/B1 on x-faces, a22/V2/B2 on
    y-faces, a12/a21 on corners and c at nodes.
    """
    if not is_power_of_two(N) or N < max(4, 4 * coeffs.kmax):
        raise AliasingError(
            f"Torus size N={N} must be a power of two with N ≥ max(4, 4·kmax={4 * coeffs.kmax})",
            details={"N": N, "kmax": coeffs.kmax},
        )
    lattice = Lattice(n=N, h=1.0 / N, periodic=True, node_offset=0.5)
    samples = sample_staggered(coeffs, lattice, cells_per_unit=N)
    return GridCoefficients(
        N=N, m=coeffs.m, coefficients=coeffs, lattice=lattice, samples=samples, digest=coeffs.digest()
    )
