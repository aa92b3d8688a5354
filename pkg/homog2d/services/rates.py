"""
ε-sweeps that measure homogenization rates, and the interior expansion identity check.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from homog2d.core.errors import GridMismatchError, RateError
from homog2d.models.coefficients import CoefficientSet
from homog2d.models.effective import EffectiveTensors
from homog2d.models.schemas import RateExperiment
from homog2d.services.cell import CorrectorBundle
from homog2d.services.effective import assemble_L0
from homog2d.services.green import ball_average, green_column
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.norms import norm
from homog2d.services.solver import assemble_operator, solve_dirichlet
from homog2d.services.stencil import Lattice, assemble, drift_into_edges, gradient_matrix, sample_staggered

logger = logging.getLogger(__name__)

# Torus sample locations in cell units: centres, x-faces, y-faces, corners.
NODE_OFFSET = (0.5, 0.5)
X_FACE_OFFSET = (1.0, 0.5)
Y_FACE_OFFSET = (0.5, 1.0)
CORNER_OFFSET = (1.0, 1.0)

EXACT_FLOOR = 1e-8
SEPARATION = 0.25
CORNER_CAVEAT = "global norms on the square: corners are not C^{1,1}, interior rows are the clean ones"


def periodic_interpolate(
    values: np.ndarray, y1: np.ndarray, y2: np.ndarray, offset: tuple[float, float] = NODE_OFFSET
) -> np.ndarray:
    """
    Bilinear interpolation of torus samples at y mod 1.

    values has shape (..., N, N) with sample (i, j) at ((i + offset₁)/N, (j + offset₂)/N).
    """
    N = values.shape[-1]
    s1 = np.asarray(y1, dtype=np.float64) * N - offset[0]
    s2 = np.asarray(y2, dtype=np.float64) * N - offset[1]
    f1, f2 = np.floor(s1), np.floor(s2)
    t1, t2 = s1 - f1, s2 - f2
    i0 = f1.astype(np.int64) % N
    j0 = f2.astype(np.int64) % N
    i1, j1 = (i0 + 1) % N, (j0 + 1) % N
    return (
        (1 - t1) * (1 - t2) * values[..., i0, j0]
        + t1 * (1 - t2) * values[..., i1, j0]
        + (1 - t1) * t2 * values[..., i0, j1]
        + t1 * t2 * values[..., i1, j1]
    )


def _derivative_stack(full: np.ndarray, h: float) -> np.ndarray:
    """(3, m, n, n): u, ∂₁u, ∂₂u by centred differences."""
    d1, d2 = np.gradient(full, h, axis=(1, 2), edge_order=2)
    return np.stack([full, d1, d2])


def two_scale_expansion(u0: Field, bundle: CorrectorBundle, eps: float) -> Field:
    """u₀ + ε Σ_k χ_k(x/ε) ∂_k u₀, with ∂₀u₀ = u₀."""
    if bundle.m != u0.m:
        raise GridMismatchError(f"Correctors have m={bundle.m}, field has m={u0.m}")
    mesh = u0.mesh
    mesh.nodes_per_period(eps)
    x1, x2 = mesh.coordinates
    chi = periodic_interpolate(np.asarray(bundle.chi), x1 / eps, x2 / eps)
    derivatives = _derivative_stack(u0.full(), mesh.h)
    correction = np.einsum("kgbij,kbij->gij", chi, derivatives)
    return Field.from_full(mesh, u0.full() + eps * correction)


def _unit_nodes(m: int, num_nodes: int, beta: int) -> np.ndarray:
    unit = np.zeros(m * num_nodes)
    unit[beta * num_nodes : (beta + 1) * num_nodes] = 1.0
    return unit


def dirichlet_corrector(
    coefficients: CoefficientSet, eps: float, mesh: DomainMesh, k: int, tol: float = 1e-10
) -> list[Field]:
    """
    Φ_{ε,k}, one m-component Field per column β, for the leading-order operator −div(A(x/ε)∇).

    k = 0 solves L Φ = div(V(x/ε) e^β) with Φ = e^β on ∂Ω; k = 1, 2 solve L Φ = 0 with Φ = x_k e^β.
    """
    if k not in (0, 1, 2):
        raise RateError(f"Corrector index k must be 0, 1 or 2, got {k}")
    m = coefficients.m
    op = assemble_operator(coefficients.leading_order(), eps, mesh, label=f"Phi_{k}@eps={eps:g}")
    boundary_coordinate = mesh.coordinates[k - 1].ravel()[mesh.boundary_flat] if k else None
    drift = None
    if k == 0 and coefficients.V:
        samples = sample_staggered(coefficients, mesh.lattice, mesh.nodes_per_period(eps))
        drift = drift_into_edges(mesh.lattice, samples)
    columns = []
    for beta in range(m):
        g = np.zeros((m, mesh.num_boundary))
        g[beta] = 1.0 if k == 0 else boundary_coordinate
        f = drift @ _unit_nodes(m, mesh.lattice.num_nodes, beta) if drift is not None else None
        columns.append(solve_dirichlet(op, f=f, g=g, tol=tol))
    return columns


def problem_data(mesh: DomainMesh, m: int, rhs: str, boundary: str) -> tuple[np.ndarray, np.ndarray]:
    """Interior F (m, M, M) and boundary trace g (m, 4(M+1)) for the named data."""
    x1, x2 = mesh.coordinates
    if rhs == "one":
        F = np.ones((m, mesh.M, mesh.M))
    else:
        shape = np.sin(np.pi * x1) * np.sin(np.pi * x2)
        F = np.broadcast_to(shape[1:-1, 1:-1], (m, mesh.M, mesh.M)).copy()
    if boundary == "zero":
        g = np.zeros((m, mesh.num_boundary))
    else:
        trace = (x1 + 0.5 * x2).ravel()[mesh.boundary_flat]
        g = np.broadcast_to(trace, (m, mesh.num_boundary)).copy()
    return F, g


def corrected_difference(u_eps: Field, u0: Field, phi: dict[int, list[Field]]) -> Field:
    """u_ε − Φ₀u₀ − Σ_{k,β} (Φ_k^β − P_k^β) ∂_k u₀^β."""
    mesh, m = u0.mesh, u0.m
    derivatives = _derivative_stack(u0.full(), mesh.h)
    w = u_eps.full()
    for beta in range(m):
        w = w - phi[0][beta].full() * derivatives[0, beta]
        for k in (1, 2):
            column = phi[k][beta].full()
            column[beta] -= mesh.coordinates[k - 1]
            w = w - column * derivatives[k, beta]
    return Field.from_full(mesh, w)


@dataclass(slots=True)
class RateRow:
    norm: str
    eps: float
    error: float


@dataclass(slots=True)
class RateFit:
    slope: float | None
    residual: float | None
    exact: bool = False

    def describe(self) -> str:
        if self.exact:
            return "exact"
        if self.slope is None:
            return "undetermined"
        return f"{self.slope:.3f} (residual {self.residual:.2e})"


@dataclass(slots=True)
class RateReport:
    label: str
    rows: list[RateRow] = field(default_factory=list)
    fits: dict[str, RateFit] = field(default_factory=dict)
    runtime: float = 0.0
    caveats: list[str] = field(default_factory=list)
    profile: dict[str, float] = field(default_factory=dict)

    def points(self, norm_id: str) -> list[tuple[float, float]]:
        return [(row.eps, row.error) for row in self.rows if row.norm == norm_id]

    def norm_ids(self) -> list[str]:
        return list(dict.fromkeys(row.norm for row in self.rows))


def _least_squares(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    log_eps = np.log([p[0] for p in points])
    log_err = np.log([p[1] for p in points])
    slope, intercept = np.polyfit(log_eps, log_err, 1)
    residual = float(np.max(np.abs(slope * log_eps + intercept - log_err)))
    return float(slope), residual


def fit_rate(points: Sequence[tuple[float, float]], floor: float = EXACT_FLOOR) -> RateFit:
    """Least squares on (ln ε, ln err); errors at or below `floor` make the row exact."""
    if len(points) < 3:
        raise RateError(f"fit_rate needs at least 3 points, got {len(points)}")
    if all(err <= floor for _, err in points):
        return RateFit(slope=None, residual=None, exact=True)
    usable = [(e, err) for e, err in points if err > floor]
    if len(usable) < 2:
        return RateFit(slope=None, residual=None)
    slope, residual = _least_squares(usable)
    return RateFit(slope=slope, residual=residual)


def truncated_slope(points: Sequence[tuple[float, float]], floor: float = EXACT_FLOOR) -> float | None:
    """Slope over the smaller-ε half of the sweep."""
    ordered = sorted((p for p in points if p[1] > floor), key=lambda p: -p[0])
    tail = ordered[-max(2, len(ordered) // 2) :]
    if len(tail) < 2:
        return None
    return _least_squares(tail)[0]


def measure_errors(
    coefficients: CoefficientSet,
    bundle: CorrectorBundle,
    effective: EffectiveTensors,
    eps: float,
    exp: RateExperiment,
    nodes_per_period: int | None = None,
) -> list[RateRow]:
    """Solve u_ε and u₀ with the same data at one ε and return the requested error norms."""
    started = time.perf_counter()
    mesh = DomainMesh.for_period(eps, nodes_per_period or exp.nodes_per_period)
    m = coefficients.m
    F, g = problem_data(mesh, m, exp.rhs, exp.boundary)
    u_eps = solve_dirichlet(assemble_operator(coefficients, eps, mesh), F=F, g=g, tol=exp.tol)
    u0 = solve_dirichlet(assemble_L0(effective, mesh), F=F, g=g, tol=exp.tol)
    difference = u_eps - u0
    rows = []
    for norm_id in exp.norms:
        if norm_id == "L2":
            error = norm(difference, "L2")
        elif norm_id == "Linf":
            error = norm(difference, "Linf")
        elif norm_id == "L2_interior":
            error = norm(difference, "L2", region="interior")
        elif norm_id == "H1":
            error = norm(difference, "H1")
        elif norm_id == "H1_corrected":
            phi = {k: dirichlet_corrector(coefficients, eps, mesh, k, exp.tol) for k in range(3)}
            error = norm(corrected_difference(u_eps, u0, phi), "H1")
        else:
            error = norm(u_eps - two_scale_expansion(u0, bundle, eps), "H1")
        rows.append(RateRow(norm=norm_id, eps=eps, error=error))
    logger.info(
        f"{coefficients.name} ε={eps:g} (M={mesh.M}): "
        + ", ".join(f"{row.norm}={row.error:.3e}" for row in rows)
        + f" in {time.perf_counter() - started:.2f}s"
    )
    return rows


def summarize(label: str, rows: list[RateRow], floor: float = EXACT_FLOOR, runtime: float = 0.0) -> RateReport:
    """Deterministic reduction: rows ordered by descending ε, one fit per norm."""
    ordered = sorted(rows, key=lambda row: -row.eps)
    report = RateReport(label=label, rows=ordered, runtime=runtime)
    for norm_id in report.norm_ids():
        points = report.points(norm_id)
        report.fits[norm_id] = fit_rate(points, floor) if len(points) >= 3 else RateFit(slope=None, residual=None)
    return report


def run_rate_experiment(
    exp: RateExperiment,
    coefficients: CoefficientSet,
    bundle: CorrectorBundle,
    effective: EffectiveTensors,
) -> RateReport:
    started = time.perf_counter()
    rows: list[RateRow] = []
    for eps in exp.eps:
        rows.extend(measure_errors(coefficients, bundle, effective, eps, exp))
    report = summarize(coefficients.name, rows, exp.exact_floor, time.perf_counter() - started)
    report.caveats.append(CORNER_CAVEAT)
    return report


def refinement_change(
    coefficients: CoefficientSet,
    bundle: CorrectorBundle,
    effective: EffectiveTensors,
    eps: float,
    exp: RateExperiment,
) -> float:
    """Relative change of the L² error when P doubles at fixed ε."""
    single = exp.model_copy(update={"norms": ["L2"]})
    coarse = measure_errors(coefficients, bundle, effective, eps, single)[0].error
    fine = measure_errors(coefficients, bundle, effective, eps, single, 2 * exp.nodes_per_period)[0].error
    if max(coarse, fine) <= exp.exact_floor:
        return 0.0
    return abs(fine - coarse) / max(abs(fine), abs(coarse))


def green_convergence_bound(eps: float, distance: float) -> float:
    """ε / |x − y|^{d−1} with d = 2."""
    return eps / distance


def snap_to_period(point: tuple[float, float], period: float) -> tuple[float, float]:
    return (round(point[0] / period) * period, round(point[1] / period) * period)


def _check_pair(x: tuple[float, float], y: tuple[float, float]) -> None:
    distance = math.dist(x, y)
    delta = min(min(p, 1.0 - p) for p in (*x, *y))
    if distance < SEPARATION - 1e-12 or delta < SEPARATION - 1e-12:
        raise RateError(
            f"Pair x={x}, y={y} violates |x−y| ≥ 1/4 and δ ≥ 1/4 (|x−y|={distance:.4f}, δ={delta:.4f})",
            details={"x": list(x), "y": list(y), "distance": distance, "delta": delta},
        )


def green_convergence(
    coefficients: CoefficientSet,
    effective: EffectiveTensors,
    pairs: Sequence[tuple[tuple[float, float], tuple[float, float]]],
    eps_list: Sequence[float],
    *,
    nodes_per_period: int = 8,
    rho: float | None = None,
    tol: float = 1e-10,
) -> RateReport:
    """
    max |G_ε,ρ(x, y) − G_0,ρ(x, y)| per pair and ε, with a slope fit per pair.

    Points are snapped to multiples of the largest ε so x/ε sits at the same cell
    phase for every ε in the sweep.
    """
    started = time.perf_counter()
    eps_sorted = sorted(eps_list, reverse=True)
    period = eps_sorted[0]
    snapped = []
    for x, y in pairs:
        sx, sy = snap_to_period(x, period), snap_to_period(y, period)
        if (sx, sy) != (tuple(x), tuple(y)):
            logger.info(f"green pair {x}→{sx}, {y}→{sy} snapped to the ε={period:g} lattice")
        _check_pair(sx, sy)
        snapped.append((sx, sy))
    rho = rho if rho is not None else 2.0 * period / nodes_per_period
    rows = []
    for eps in eps_sorted:
        mesh = DomainMesh.for_period(eps, nodes_per_period)
        op_eps = assemble_operator(coefficients, eps, mesh)
        op0 = assemble_L0(effective, mesh)
        columns = {}
        for index, (x, y) in enumerate(snapped):
            if y not in columns:
                columns[y] = (green_column(op_eps, y, rho, tol), green_column(op0, y, rho, tol))
            oscillating, homogenized = columns[y]
            node = mesh.nearest_node(x)
            gap = float(np.abs(ball_average(oscillating, node) - ball_average(homogenized, node)).max())
            rows.append(RateRow(norm=f"pair{index + 1}", eps=eps, error=gap))
    report = summarize(f"{coefficients.name}-green", rows, runtime=time.perf_counter() - started)
    finest = eps_sorted[-1]
    for index, (x, y) in enumerate(snapped):
        gap = next(r.error for r in report.rows if r.norm == f"pair{index + 1}" and r.eps == finest)
        report.profile[f"pair{index + 1}"] = gap / green_convergence_bound(finest, math.dist(x, y))
    return report


@dataclass(frozen=True)
class _TrigJet:
    """u₀^γ = sin(2π(x₁ + γ/4)) cos(2πx₂) with first and second derivatives."""

    m: int

    def evaluate(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(D, H): D[k] = ∂_k u₀ (k = 0..2, ∂₀u₀ = u₀); H[j, k] = ∂_j∂_k u₀ with ∂_j∂₀u₀ = ∂_ju₀."""
        w = 2.0 * np.pi
        phase = np.arange(self.m)[:, None, None] / 4.0
        a, b = w * (x1[None] + phase), w * x2[None]
        u = np.sin(a) * np.cos(b)
        u1, u2 = w * np.cos(a) * np.cos(b), -w * np.sin(a) * np.sin(b)
        u11, u12 = -(w**2) * u, -(w**2) * np.cos(a) * np.sin(b)
        u22 = u11
        D = np.stack([u, u1, u2])
        H = np.stack([np.stack([u1, u11, u12]), np.stack([u2, u12, u22])])
        return D, H


@dataclass(slots=True)
class ExpansionResidual:
    resolutions: tuple[int, ...]
    defects: list[float]
    flux_defects: list[float]
    order: float | None
    flux_order: float | None


def _order(coarse: float, fine: float, ratio: float) -> float | None:
    if coarse <= EXACT_FLOOR and fine <= EXACT_FLOOR:
        return None
    return math.log(coarse / max(fine, 1e-300)) / math.log(ratio)


def _identity_defects(
    coefficients: CoefficientSet, bundle: CorrectorBundle, effective: EffectiveTensors, eps: float, P: int
) -> tuple[float, float]:
    n = int(round(P / eps))
    lattice = Lattice(n=n, h=1.0 / n, periodic=True, node_offset=0.0)
    h, m, N = lattice.h, coefficients.m, bundle.N
    jet = _TrigJet(m)

    def points(location: str) -> tuple[np.ndarray, np.ndarray]:
        p1, p2 = lattice.positions(location)
        return p1 * h, p2 * h

    chi, theta, b, E = (np.asarray(a) for a in (bundle.chi, bundle.theta, bundle.b, bundle.E))
    theta_faces = [(np.roll(theta, -1, axis=-2) - theta) * N, (np.roll(theta, -1, axis=-1) - theta) * N]
    theta_centres = [
        (np.roll(theta, -1, axis=-2) - np.roll(theta, 1, axis=-2)) * N / 2,
        (np.roll(theta, -1, axis=-1) - np.roll(theta, 1, axis=-1)) * N / 2,
    ]
    face_offsets = (X_FACE_OFFSET, Y_FACE_OFFSET)

    x1, x2 = points("node")
    D, H = jet.evaluate(x1, x2)
    y1, y2 = x1 / eps, x2 / eps
    chi_n = periodic_interpolate(chi, y1, y2)
    v = D[0] + eps * np.einsum("kgbij,kbij->gij", chi_n, D)

    L_eps = assemble(lattice, sample_staggered(coefficients, lattice, cells_per_unit=P), shift=coefficients.lam)
    homogenized = effective.to_coefficient_set()
    L_0 = assemble(lattice, sample_staggered(homogenized, lattice, cells_per_unit=1.0), shift=homogenized.lam)
    lhs = L_0 @ D[0].ravel() - L_eps @ v.ravel()

    K, IJ, Et = [], [], []
    for i, location in enumerate(("x_edge", "y_edge")):
        e1, e2 = points(location)
        De, He = jet.evaluate(e1, e2)
        z1, z2 = e1 / eps, e2 / eps
        b_i = periodic_interpolate(b[i], z1, z2, face_offsets[i])
        K.append(np.einsum("kagij,kgij->aij", b_i, De))
        chi_e = periodic_interpolate(chi, z1, z2)
        a_ij = [coefficients.a_component(i, j, z1, z2) for j in range(2)]
        I_i = sum(np.einsum("abij,kbgij,kgij->aij", a_ij[j], chi_e, He[j]) for j in range(2))
        I_i = I_i + np.einsum("abij,kbgij,kgij->aij", coefficients.v_component(i, z1, z2), chi_e, De)
        J_i = np.einsum("kagij,kgij->aij", periodic_interpolate(theta_faces[i], z1, z2, face_offsets[i]), De)
        IJ.append(I_i + J_i)
        # Ẽ_i = Σ_{j,k} E_jik ∂_j∂_k u₀; only j ≠ i survives
        j = 1 - i
        E_ji = periodic_interpolate(E[j, i], z1, z2, CORNER_OFFSET)
        Et.append(np.einsum("kagij,kgij->aij", E_ji, He[j]))

    y_theta = [periodic_interpolate(t, y1, y2) for t in theta_centres]
    M_term = np.zeros_like(D[0])
    for i in range(2):
        B_i = coefficients.b_component(i, y1, y2)
        weight = y_theta[i] + np.einsum("abij,kbgij->kagij", B_i, chi_n)
        M_term += np.einsum("kagij,kgij->aij", weight, H[i])
    reaction = coefficients.c_values(y1, y2) + coefficients.lam * np.eye(m)[:, :, None, None]
    N_term = np.einsum("abij,kbgij,kgij->aij", reaction, chi_n, D)

    gradient = gradient_matrix(lattice, m)

    def divergence(edges: list[np.ndarray]) -> np.ndarray:
        stacked = np.concatenate([edges[0].reshape(m, -1), edges[1].reshape(m, -1)], axis=1)
        return -(gradient.T @ stacked.ravel())

    div_K = divergence(K)
    rhs = -div_K + eps * divergence(IJ) - eps * (M_term + N_term).ravel()
    scale = float(np.abs(lhs).max())
    defect = float(np.abs(lhs - rhs).max()) / scale if scale > EXACT_FLOOR else float(np.abs(lhs - rhs).max())
    k_scale = float(np.abs(div_K).max())
    flux_gap = float(np.abs(div_K + eps * divergence(Et)).max())
    flux_defect = flux_gap / k_scale if k_scale > EXACT_FLOOR else flux_gap
    logger.debug(f"expansion identity at P={P}: defect {defect:.3e}, flux-corrector form {flux_defect:.3e}")
    return defect, flux_defect


def expansion_residual_check(
    coefficients: CoefficientSet,
    bundle: CorrectorBundle,
    effective: EffectiveTensors,
    eps: float = 0.25,
    resolutions: tuple[int, int] = (8, 16),
) -> ExpansionResidual:
    """
    Compare L₀u₀ − L_ε(u₀ + εχ_k∂_ku₀) with −div K + ε div(I + J) − ε(M + N) on a periodic
    lattice for a smooth periodic u₀, at two resolutions; also checks div K = −ε div(E∂²u₀).
    """
    coarse, fine = resolutions
    if fine <= coarse:
        raise RateError(f"Resolutions must increase, got {resolutions}")
    defects, flux_defects = [], []
    for P in resolutions:
        defect, flux_defect = _identity_defects(coefficients, bundle, effective, eps, P)
        defects.append(defect)
        flux_defects.append(flux_defect)
    ratio = fine / coarse
    return ExpansionResidual(
        resolutions=tuple(resolutions),
        defects=defects,
        flux_defects=flux_defects,
        order=_order(defects[0], defects[1], ratio),
        flux_order=_order(flux_defects[0], flux_defects[1], ratio),
    )
