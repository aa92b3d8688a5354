"""
Discrete Green functions with ball-averaged poles, and the diagnostics built on them.

A column G(·, y) solves L G^{·γ} = q_y e^γ with Dirichlet data 0, where q_y is the
normalized indicator of the interior nodes within ρ of y (h² Σ q_y = 1). Point
evaluations G_ρ(x, y) average the column against q_x, so the duality
G_ρ(x, y) = G*_ρ(y, x)ᵀ holds to solver tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from homog2d.core.errors import GreenError
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.solver import DiscreteOperator, assemble_adjoint, solve_dirichlet

logger = logging.getLogger(__name__)

DIAMETER = float(np.sqrt(2.0))
PROBE_LATTICE = 16
RANDOM_POINTS = 512
CORNER_LAYER = 4  # in units of h
DEFAULT_SIGMAS = (0.5, 0.5, 0.5, 0.5, 0.5)


@dataclass(frozen=True, eq=False)
class GreenColumn:
    """values[α, γ] is the full nodal array of G^{αγ}(·, y)."""

    mesh: DomainMesh
    pole: tuple[int, int]
    rho: float
    label: str
    values: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def pole_point(self) -> tuple[float, float]:
        return self.mesh.node_point(self.pole)

    def field(self, gamma: int) -> Field:
        return Field.from_full(self.mesh, self.values[:, gamma])


def ball_weights(mesh: DomainMesh, node: tuple[int, int], rho: float) -> np.ndarray:
    """q: indicator of interior nodes with |x − node| ≤ ρ, scaled so h² Σ q = 1."""
    x1, x2 = mesh.coordinates
    px, py = mesh.node_point(node)
    inside = ((x1 - px) ** 2 + (x2 - py) ** 2 <= rho**2 * (1.0 + 1e-12)) & mesh.interior_mask
    count = int(inside.sum())
    if count == 0:
        raise GreenError(f"Ball of radius {rho:g} around {mesh.node_point(node)} holds no interior node")
    return inside / (mesh.h**2 * count)


def _validate_pole(mesh: DomainMesh, node: tuple[int, int], rho: float) -> None:
    if rho < mesh.h * (1.0 - 1e-12):
        raise GreenError(f"Source radius ρ={rho:g} is below the mesh size h={mesh.h:g}", details={"rho": rho})
    delta = float(mesh.distance_to_boundary[node])
    if delta < rho * (1.0 - 1e-12):
        raise GreenError(
            f"Pole {mesh.node_point(node)} is within ρ={rho:g} of the boundary (δ={delta:g})",
            details={"pole": mesh.node_point(node), "rho": rho, "delta": delta},
        )


def green_column(
    op: DiscreteOperator, y: tuple[float, float], rho: float | None = None, tol: float = 1e-10
) -> GreenColumn:
    """Column G(·, y) for every source component γ; default ρ = 2h."""
    mesh = op.mesh
    rho = 2.0 * mesh.h if rho is None else rho
    node = mesh.nearest_node(y)
    _validate_pole(mesh, node, rho)
    q = ball_weights(mesh, node, rho)[1:-1, 1:-1]
    values = np.zeros((op.m, op.m, mesh.n, mesh.n))
    for gamma in range(op.m):
        source = np.zeros((op.m, mesh.M, mesh.M))
        source[gamma] = q
        values[:, gamma] = solve_dirichlet(op, F=source, tol=tol).full()
    return GreenColumn(mesh=mesh, pole=node, rho=rho, label=op.label, values=values)


def ball_average(column: GreenColumn, node: tuple[int, int]) -> np.ndarray:
    """G_ρ(x, y) as an m×m matrix, averaging the column over the ρ-ball at x."""
    q = ball_weights(column.mesh, node, column.rho)
    return column.mesh.h**2 * np.tensordot(column.values, q, axes=([2, 3], [0, 1]))


def adjoint_symmetry_defect(direct: list[GreenColumn], adjoint: list[GreenColumn]) -> float:
    """max |G_ρ(x, y) − G*_ρ(y, x)ᵀ| / max |G_ρ| over every pole pair."""
    worst, scale = 0.0, 0.0
    for column in direct:
        for dual in adjoint:
            forward = ball_average(column, dual.pole)
            backward = ball_average(dual, column.pole).T
            worst = max(worst, float(np.abs(forward - backward).max()))
            scale = max(scale, float(np.abs(forward).max()))
    return worst / scale if scale > 0 else worst


def _smooth_sources(mesh: DomainMesh, m: int, count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    x1, x2 = mesh.coordinates
    x1, x2 = x1[1:-1, 1:-1], x2[1:-1, 1:-1]
    sources = []
    for _ in range(count):
        weights = rng.standard_normal((m, 3, 3))
        F = np.zeros((m, mesh.M, mesh.M))
        for p in range(3):
            for q in range(3):
                F += weights[:, p, q, None, None] * np.cos(p * np.pi * x1) * np.cos(q * np.pi * x2)
        sources.append(F)
    return sources


def representation_error(
    op: DiscreteOperator, adjoint_columns: list[GreenColumn], *, count: int = 5, seed: int = 0, tol: float = 1e-10
) -> float:
    """
    Relative gap between the ρ-average of the solution of L u = F at y and
    h²⟨G*_ρ(·, y), F⟩, maximized over `count` seeded smooth F.
    """
    worst = 0.0
    h2 = op.mesh.h**2
    for F in _smooth_sources(op.mesh, op.m, count, seed):
        u = solve_dirichlet(op, F=F, tol=tol)
        full = u.full()
        for column in adjoint_columns:
            q = ball_weights(op.mesh, column.pole, column.rho)
            direct = h2 * np.tensordot(full, q, axes=([1, 2], [0, 1]))
            represented = h2 * np.einsum("agij,aij->g", column.values[:, :, 1:-1, 1:-1], F)
            scale = max(float(np.abs(direct).max()), 1e-300)
            worst = max(worst, float(np.abs(direct - represented).max()) / scale)
    return worst


def adjoint_columns(op: DiscreteOperator, poles: list[tuple[float, float]], rho: float | None = None, tol: float = 1e-10):
    """Columns of the assembled L*_ε at the given poles."""
    adjoint = assemble_adjoint(op)
    return [green_column(adjoint, pole, rho, tol) for pole in poles]


def bmo_norm(
    u: Field,
    *,
    samples: int = 128,
    seed: int = 0,
    include: list[tuple[int, int]] | None = None,
) -> float:
    """
    sup over balls B(x₀, r)∩Ω̄ of the mean of |u − ū|, with ū = 0 once r ≥ δ(x₀).

    Centres are seeded points of the square snapped to nodes; radii are h·2^k.
    """
    mesh = u.mesh
    full = u.full()
    n, h = mesh.n, mesh.h
    rng = np.random.default_rng(seed)
    centres = [mesh.nearest_node(tuple(p)) for p in rng.random((samples, 2))]
    centres.extend(include or [])
    radii = [h * 2**k for k in range(int(np.ceil(np.log2(DIAMETER / h))) + 1)]
    best = 0.0
    for ci, cj in centres:
        delta = float(mesh.distance_to_boundary[ci, cj])
        for r in radii:
            w = int(np.floor(r / h + 1e-9))
            i0, i1 = max(ci - w, 0), min(ci + w, n - 1) + 1
            j0, j1 = max(cj - w, 0), min(cj + w, n - 1) + 1
            di = (np.arange(i0, i1) - ci)[:, None] * h
            dj = (np.arange(j0, j1) - cj)[None, :] * h
            mask = di**2 + dj**2 <= r**2 * (1.0 + 1e-12)
            values = full[:, i0:i1, j0:j1][:, mask]
            mean = np.zeros((u.m, 1)) if r >= delta else values.mean(axis=1, keepdims=True)
            oscillation = float(np.mean(np.sqrt(np.sum((values - mean) ** 2, axis=0))))
            best = max(best, oscillation)
    return best


def log_slope(column: GreenColumn, r_min: float | None = None, r_max: float = 0.125) -> float:
    """Least-squares slope of G^{11}(x, y) against ln(1/|x − y|) over r_min ≤ |x − y| ≤ r_max."""
    mesh = column.mesh
    r_min = 4.0 * mesh.h if r_min is None else r_min
    x1, x2 = mesh.coordinates
    py1, py2 = column.pole_point
    r = np.hypot(x1 - py1, x2 - py2)
    keep = (r >= r_min) & (r <= r_max) & mesh.interior_mask
    if keep.sum() < 3:
        raise GreenError(f"Too few nodes in the annulus [{r_min:g}, {r_max:g}] for a log fit")
    slope, _ = np.polyfit(np.log(1.0 / r[keep]), column.values[0, 0][keep], 1)
    return float(slope)


@dataclass(slots=True)
class BoundRow:
    ineq_id: str
    x: tuple[float, float]
    y: tuple[float, float]
    lhs: float
    bound: float
    ratio: float
    near_corner: bool = False


@dataclass
class PointwiseReport:
    label: str
    rows: list[BoundRow] = field(default_factory=list)
    excluded: int = 0
    flagged: int = 0

    def max_ratios(self) -> dict[str, float]:
        """Largest lhs/bound per inequality, ignoring pairs near a corner."""
        out: dict[str, float] = {}
        for row in self.rows:
            if not row.near_corner:
                out[row.ineq_id] = max(out.get(row.ineq_id, 0.0), row.ratio)
        return out


def _probe_nodes(mesh: DomainMesh, seed: int) -> np.ndarray:
    centres = (np.arange(PROBE_LATTICE) + 0.5) / PROBE_LATTICE
    lattice = [mesh.nearest_node((a, b)) for a in centres for b in centres]
    rng = np.random.default_rng(seed)
    random = rng.integers(1, mesh.n - 1, size=(RANDOM_POINTS, 2))
    nodes = np.unique(np.vstack([np.array(lattice), random]), axis=0)
    inside = (nodes[:, 0] > 0) & (nodes[:, 0] < mesh.n - 1) & (nodes[:, 1] > 0) & (nodes[:, 1] < mesh.n - 1)
    return nodes[inside]


def check_pointwise_bounds(
    column: GreenColumn,
    sigmas: tuple[float, float, float, float, float] = DEFAULT_SIGMAS,
    *,
    constant: float = 1.0,
    neighbor: GreenColumn | None = None,
    seed: int = 0,
) -> PointwiseReport:
    """
    Ratios |G|/bound for the pointwise, Hölder and Lipschitz Green estimates.

    sigmas = (σ, σ₁, σ₂, σ₃, σ₄). Pairs with |x − y| < 2h are excluded; pairs with x
    within 4h of a corner are reported but flagged. `neighbor` is a column whose pole
    is one node to the right of this one; it enables the y-Hölder and ∇_y bounds.
    """
    sigma, s1, s2, s3, s4 = sigmas
    mesh, h = column.mesh, column.mesh.h
    nodes = _probe_nodes(mesh, seed)
    y = column.pole_point
    delta_y = float(mesh.distance_to_boundary[column.pole])
    x1, x2 = nodes[:, 0] * h, nodes[:, 1] * h
    r = np.hypot(x1 - y[0], x2 - y[1])
    keep = r >= 2.0 * h * (1.0 - 1e-12)
    report = PointwiseReport(label=column.label, excluded=int((~keep).sum()))
    nodes, x1, x2, r = nodes[keep], x1[keep], x2[keep], r[keep]
    delta_x = mesh.distance_to_boundary[nodes[:, 0], nodes[:, 1]]
    corner = np.min(
        [np.hypot(x1 - a, x2 - b) for a in (0.0, 1.0) for b in (0.0, 1.0)], axis=0
    ) < CORNER_LAYER * h
    report.flagged = int(corner.sum())

    def block_norm(values: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(values[:, :, ii, jj] ** 2, axis=(0, 1)))

    G = block_norm(column.values, nodes[:, 0], nodes[:, 1])
    grad = np.gradient(column.values, h, axis=(2, 3), edge_order=2)
    grad_x = np.sqrt(sum(block_norm(g, nodes[:, 0], nodes[:, 1]) ** 2 for g in grad))

    near_x = delta_x < 0.25 * r
    near_y = delta_y < 0.25 * r
    bounds: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {
        "preliminary": (np.ones_like(r, dtype=bool), G, r**-sigma),
        "pw1": (near_x, G, (delta_x / r) ** s1),
        "pw2": (near_y, G, (delta_y / r) ** s2),
        "pw3": (near_x | near_y, G, (delta_x / r) ** s1 * (delta_y / r) ** s2),
        "pw4": (~near_x & ~near_y, G, 1.0 + np.log(DIAMETER / r)),
        "combined": (
            np.ones_like(near_x),
            G,
            r**-sigma
            * np.minimum.reduce(
                [np.ones_like(r), (delta_x / r) ** s1, (delta_y / r) ** s2, (delta_x / r) ** s1 * (delta_y / r) ** s2]
            ),
        ),
        "lip_pw1": (near_x, G, delta_x / r),
        "lip_pw2": (near_y, G, delta_y / r),
        "lip_pw3": (near_x | near_y, G, delta_x * delta_y / r**2),
        "lip_grad_x": (np.ones_like(near_x), grad_x, np.minimum(1.0, delta_y / r) / r),
    }

    shifted = nodes[:, 0] + 1 < mesh.n - 1
    step_ok = shifted & (h < 0.5 * r)
    if step_ok.any():
        diff = block_norm(
            column.values[:, :, 1:, :] - column.values[:, :, :-1, :],
            np.minimum(nodes[:, 0], mesh.n - 2),
            nodes[:, 1],
        )
        bounds["pw5"] = (step_ok, diff, (h / r) ** s3)

    if neighbor is not None:
        dy = float(np.hypot(*np.subtract(neighbor.pole_point, y)))
        change = neighbor.values - column.values
        diff = block_norm(change, nodes[:, 0], nodes[:, 1])
        bounds["pw6"] = (np.full_like(near_x, dy < 0.5) & (dy < 0.5 * r), diff, (dy / r) ** s4)
        bounds["lip_grad_y"] = (
            np.ones_like(near_x),
            diff / dy,
            np.minimum(1.0, delta_x / r) / r,
        )
        mixed = np.gradient(change / dy, h, axis=(2, 3), edge_order=2)
        mixed_norm = np.sqrt(sum(block_norm(g, nodes[:, 0], nodes[:, 1]) ** 2 for g in mixed))
        bounds["lip_mixed"] = (np.ones_like(near_x), mixed_norm, r**-2.0)

    for ineq_id, (applies, lhs, bound) in bounds.items():
        bound = constant * np.broadcast_to(bound, r.shape)
        for idx in np.flatnonzero(applies):
            report.rows.append(
                BoundRow(
                    ineq_id=ineq_id,
                    x=(float(x1[idx]), float(x2[idx])),
                    y=y,
                    lhs=float(lhs[idx]),
                    bound=float(bound[idx]),
                    ratio=float(lhs[idx] / bound[idx]) if bound[idx] > 0 else float("inf"),
                    near_corner=bool(corner[idx]),
                )
            )
    return report


@dataclass(slots=True)
class GreenDiagnostics:
    eps: float | None
    symmetry: float
    representation: float
    bmo: float
    bounds: PointwiseReport


def green_diagnostics(
    op: DiscreteOperator,
    poles: list[tuple[float, float]],
    sigmas: tuple[float, float, float, float, float] = DEFAULT_SIGMAS,
    *,
    seed: int = 0,
    tol: float = 1e-10,
) -> GreenDiagnostics:
    """Symmetry, representation, BMO and pointwise-bound diagnostics for one operator."""
    if not poles:
        raise GreenError("green_diagnostics needs at least one pole")
    direct = [green_column(op, pole, tol=tol) for pole in poles]
    duals = adjoint_columns(op, poles, tol=tol)
    first = direct[0]
    px, py = first.pole_point
    neighbor = green_column(op, (px + op.mesh.h, py), rho=first.rho, tol=tol)
    bmo = max(bmo_norm(first.field(gamma), seed=seed, include=[first.pole]) for gamma in range(op.m))
    diagnostics = GreenDiagnostics(
        eps=op.eps,
        symmetry=adjoint_symmetry_defect(direct, duals),
        representation=representation_error(op, duals, seed=seed, tol=tol),
        bmo=bmo,
        bounds=check_pointwise_bounds(first, sigmas, neighbor=neighbor, seed=seed),
    )
    logger.info(
        f"{op.label}: symmetry {diagnostics.symmetry:.2e}, representation {diagnostics.representation:.2e}, "
        f"BMO {diagnostics.bmo:.4f}, {len(diagnostics.bounds.rows)} bound rows"
    )
    return diagnostics
