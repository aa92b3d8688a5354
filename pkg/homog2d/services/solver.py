"""
Dirichlet discretization of L_ε / L₀ on the unit square, solves and coercivity checks.
"""

from __future__ import annotations

import logging
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from homog2d.core.config import Settings, get_settings
from homog2d.core.errors import CoercivityError, GridMismatchError
from homog2d.models.coefficients import CoefficientSet
from homog2d.services.krylov import krylov_solve
from homog2d.services.mesh import DomainMesh, Field, domain_gradient
from homog2d.services.spectral import dirichlet_solve
from homog2d.services.stencil import assemble, is_symmetric, sample_staggered

logger = logging.getLogger(__name__)

LAMBDA_CANDIDATES = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
COERCIVITY_THRESHOLD = 0.05
MIN_COERCIVITY_TRIALS = 32
HOMOGENIZED = "homogenized"


class DiscreteOperator:
    """
    Assembled operator on a DomainMesh.

    `full_matrix` acts on every lattice node; `matrix` is its interior block and
    `lift` the interior-rows × boundary-columns block used to move Dirichlet data
    to the right-hand side.
    """

    def __init__(
        self,
        full: sp.csr_matrix,
        mesh: DomainMesh,
        coefficients: CoefficientSet,
        *,
        eps: float | None,
        lam: float,
        label: str,
        settings: Settings | None = None,
    ) -> None:
        self._settings = settings or get_settings()
        self.full_matrix = full
        self.mesh = mesh
        self.coefficients = coefficients
        self.m = coefficients.m
        self.eps = eps
        self.lam = lam
        self.label = label
        self.digest = coefficients.digest()
        self.interior_index = mesh.component_indices(mesh.interior_flat, self.m)
        self.boundary_index = mesh.component_indices(mesh.boundary_flat, self.m)
        rows = full[self.interior_index]
        self.matrix = rows[:, self.interior_index].tocsr()
        self.lift = rows[:, self.boundary_index].tocsr()

    def __repr__(self) -> str:
        return f"DiscreteOperator({self.label!r}, M={self.mesh.M}, m={self.m}, λ={self.lam})"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def symmetric(self) -> bool:
        return is_symmetric(self.matrix)

    @cached_property
    def diffusion_scale(self) -> np.ndarray:
        y = np.linspace(0.0, 1.0, 17)[:-1]
        y1, y2 = np.meshgrid(y, y, indexing="ij")
        tensor = self.coefficients.tensor_A(y1, y2)
        return np.array([0.5 * (tensor[0, 0, a, a].mean() + tensor[1, 1, a, a].mean()) for a in range(self.m)])

    @cached_property
    def preconditioner(self) -> spla.LinearOperator:
        """DST fast Poisson for symmetric operators, incomplete LU otherwise."""
        if not self.symmetric:
            try:
                ilu = spla.spilu(
                    self.matrix.tocsc(),
                    drop_tol=self._settings.ilu_drop_tol,
                    fill_factor=self._settings.ilu_fill_factor,
                )
                return spla.LinearOperator(self.matrix.shape, matvec=ilu.solve, dtype=np.float64)
            except RuntimeError as exc:
                logger.warning(f"{self.label}: ILU failed ({exc}); falling back to the Poisson preconditioner")
        M, m, h = self.mesh.M, self.m, self.mesh.h
        scale = np.maximum(self.diffusion_scale, 1e-12)

        def apply(x: np.ndarray) -> np.ndarray:
            blocks = x.reshape(m, M, M)
            return np.stack(
                [dirichlet_solve(blocks[a], h, diffusion=scale[a], shift=self.lam) for a in range(m)]
            ).ravel()

        return spla.LinearOperator(self.matrix.shape, matvec=apply, dtype=np.float64)

    @cached_property
    def coercivity(self) -> float:
        return coercivity_probe(self)

    def require_coercive(self) -> float:
        c0 = self.coercivity
        if c0 <= 0.0:
            raise CoercivityError(
                f"{self.label}: coercivity probe gave c₀={c0:.3e} ≤ 0; raise λ (try lambda = \"auto\")",
                details={"c0": c0, "lambda": self.lam, "M": self.mesh.M},
            )
        return c0

    def with_lambda(self, lam: float) -> "DiscreteOperator":
        shifted = self.full_matrix + (lam - self.lam) * sp.identity(self.full_matrix.shape[0], format="csr")
        return DiscreteOperator(
            shifted.tocsr(),
            self.mesh,
            self.coefficients.with_lambda(lam),
            eps=self.eps,
            lam=lam,
            label=self.label,
            settings=self._settings,
        )

    def apply(self, u: Field) -> np.ndarray:
        """(L u) at interior nodes, shape (m, M, M)."""
        values = self.full_matrix @ u.full().ravel()
        return values[self.interior_index].reshape(self.m, self.mesh.M, self.mesh.M)

    def divergence(self, f: np.ndarray) -> np.ndarray:
        """Discrete div f = −Gᵀf at interior nodes, for an edge vector f."""
        gradient = domain_gradient(self.mesh, self.m)
        if f.shape != (gradient.shape[0],):
            raise GridMismatchError(f"Edge vector has shape {f.shape}, expected ({gradient.shape[0]},)")
        return -(gradient.T @ f)[self.interior_index]


def assemble_operator(
    coefficients: CoefficientSet,
    eps: float | None,
    mesh: DomainMesh,
    *,
    label: str | None = None,
    settings: Settings | None = None,
) -> DiscreteOperator:
    """
    Assemble L_ε (coefficients sampled at x/ε) or, with eps=None, a non-oscillating
    operator such as L₀.
    """
    cells_per_unit = float(mesh.nodes_per_period(eps)) if eps is not None else 1.0
    samples = sample_staggered(coefficients, mesh.lattice, cells_per_unit)
    full = assemble(mesh.lattice, samples, shift=coefficients.lam)
    label = label or (HOMOGENIZED if eps is None else f"{coefficients.name}@eps={eps:g}")
    logger.debug(f"assembled {label} on M={mesh.M}: {full.nnz} nonzeros")
    return DiscreteOperator(full, mesh, coefficients, eps=eps, lam=coefficients.lam, label=label, settings=settings)


def assemble_adjoint(op: DiscreteOperator) -> DiscreteOperator:
    """L*_ε assembled from the adjoint coefficient set on the same mesh."""
    return assemble_operator(
        op.coefficients.adjoint(), op.eps, op.mesh, label=f"{op.label}-adjoint", settings=op._settings
    )


def _interior_values(value: Field | np.ndarray | None, mesh: DomainMesh, m: int) -> np.ndarray:
    if value is None:
        return np.zeros((m, mesh.M, mesh.M))
    if isinstance(value, Field):
        return value.interior
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0:
        return np.full((m, mesh.M, mesh.M), float(array))
    if array.ndim == 2:
        array = array[None]
    if array.shape[-1] == mesh.n:
        array = array[:, 1:-1, 1:-1]
    return np.broadcast_to(array, (m, mesh.M, mesh.M))


def _boundary_values(value: Field | np.ndarray | None, mesh: DomainMesh, m: int) -> np.ndarray:
    if value is None:
        return np.zeros((m, mesh.num_boundary))
    if isinstance(value, Field):
        return value.boundary
    return np.broadcast_to(np.asarray(value, dtype=np.float64), (m, mesh.num_boundary))


def solve_dirichlet(
    op: DiscreteOperator,
    f: np.ndarray | None = None,
    F: Field | np.ndarray | None = None,
    g: Field | np.ndarray | None = None,
    tol: float = 1e-10,
) -> Field:
    """Solve L u = F + div f in Ω, u = g on ∂Ω."""
    op.require_coercive()
    mesh, m = op.mesh, op.m
    boundary = np.array(_boundary_values(g, mesh, m))
    rhs = _interior_values(F, mesh, m).ravel().copy()
    if f is not None:
        rhs += op.divergence(np.asarray(f, dtype=np.float64))
    if np.any(boundary):
        rhs -= op.lift @ boundary.ravel()
    result = krylov_solve(
        op.matrix,
        rhs,
        symmetric=op.symmetric,
        preconditioner=op.preconditioner,
        tol=tol,
        label=op.label,
        settings=op._settings,
    )
    return Field(mesh=mesh, interior=result.solution.reshape(m, mesh.M, mesh.M), boundary=boundary)


def _dirichlet_laplacian(mesh: DomainMesh, m: int) -> sp.csr_matrix:
    gradient = mesh.lattice.scalar_gradient[:, mesh.interior_flat]
    return sp.block_diag([(gradient.T @ gradient).tocsr()] * m, format="csr")


def _probe_fields(mesh: DomainMesh, m: int, trials: int, seed: int) -> list[np.ndarray]:
    x1, x2 = mesh.coordinates
    x1, x2 = x1[1:-1, 1:-1], x2[1:-1, 1:-1]
    shapes = [
        np.sin(np.pi * x1) * np.sin(np.pi * x2),
        np.minimum(1.0, 8.0 * np.minimum.reduce([x1, 1 - x1, x2, 1 - x2])),
        np.sin(mesh.M * np.pi * x1) * np.sin(mesh.M * np.pi * x2),
    ]
    probes = []
    for shape in shapes:
        for alpha in range(m):
            u = np.zeros((m, mesh.M, mesh.M))
            u[alpha] = shape
            probes.append(u.ravel())
    rng = np.random.default_rng(seed)
    modes = min(4, mesh.M)
    for _ in range(max(trials - len(probes), 1)):
        weights = rng.standard_normal((m, modes, modes))
        u = np.zeros((m, mesh.M, mesh.M))
        for p in range(modes):
            for q in range(modes):
                u += weights[:, p, q, None, None] * np.sin((p + 1) * np.pi * x1) * np.sin((q + 1) * np.pi * x2)
        probes.append(u.ravel())
    return probes


def coercivity_probe(op: DiscreteOperator, trials: int = 32, seed: int = 0) -> float:
    """
    c₀ = min over probes of ⟨Lu,u⟩ / (‖u‖² + ⟨K₀u,u⟩), K₀ the Dirichlet 5-point Laplacian.

    Probes: tapered constants, the highest sine mode, and random low modes (≤ 4).
    """
    if trials < MIN_COERCIVITY_TRIALS:
        raise CoercivityError(
            f"coercivity_probe needs at least {MIN_COERCIVITY_TRIALS} trials, got {trials}",
            details={"trials": trials, "minimum": MIN_COERCIVITY_TRIALS},
        )
    laplacian = _dirichlet_laplacian(op.mesh, op.m)
    quotients = []
    for u in _probe_fields(op.mesh, op.m, trials, seed):
        energy = float(u @ (op.matrix @ u))
        reference = float(u @ u + u @ (laplacian @ u))
        quotients.append(energy / reference)
    c0 = float(min(quotients))
    logger.debug(f"{op.label}: coercivity probe c₀={c0:.4f} over {len(quotients)} probes")
    return c0


def select_lambda(
    coefficients: CoefficientSet,
    eps: float,
    mesh: DomainMesh,
    *,
    candidates: Sequence[float] = LAMBDA_CANDIDATES,
    threshold: float = COERCIVITY_THRESHOLD,
    trials: int = 32,
    seed: int = 0,
) -> float:
    """Smallest candidate λ whose probed coercivity constant reaches the threshold."""
    base = assemble_operator(coefficients.with_lambda(0.0), eps, mesh)
    for lam in candidates:
        c0 = coercivity_probe(base.with_lambda(lam), trials=trials, seed=seed)
        if c0 >= threshold:
            logger.info(f"{coefficients.name}: λ₀={lam:g} (c₀={c0:.4f})")
            return float(lam)
    raise CoercivityError(
        f"No λ in {list(candidates)} makes '{coefficients.name}' coercive at threshold {threshold}",
        details={"candidates": list(candidates), "threshold": threshold},
    )
