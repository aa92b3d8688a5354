"""
ε-uniformity diagnostics: W^{1,p}, Hölder, maximum principle, Caccioppoli and energy ratios,
plus the manufactured-solution order study.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from homog2d.core.errors import RateError
from homog2d.models.coefficients import CoefficientSet
from homog2d.services.coefficients import preset
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.norms import field_gradient, holder_seminorm, norm, quadrature_weights
from homog2d.services.rates import fit_rate, problem_data
from homog2d.services.solver import assemble_operator, solve_dirichlet

logger = logging.getLogger(__name__)

STABILITY_FACTOR = 2.0
CACCIOPPOLI_RADII = (0.125, 0.0625)
CENTER = (0.5, 0.5)


def _ball_mean(values: np.ndarray, mesh: DomainMesh, center: tuple[float, float], radius: float) -> float:
    x1, x2 = mesh.coordinates
    inside = (x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 <= radius**2 * (1.0 + 1e-12)
    weights = quadrature_weights(mesh) * inside
    total = weights.sum()
    if total <= 0:
        raise RateError(f"Ball of radius {radius:g} at {center} holds no mesh node")
    return float((weights * values).sum() / total)


def caccioppoli_ratio(u: Field, center: tuple[float, float] = CENTER, r: float = 0.125) -> float:
    """(⨍_{B_r}|∇u|²)^{1/2} / [r⁻¹ (⨍_{B_2r}|u|²)^{1/2}]; B_2r must lie inside Ω."""
    if min(center[0], center[1], 1 - center[0], 1 - center[1]) < 2 * r - 1e-12:
        raise RateError(f"B({center}, {2 * r:g}) leaves the unit square")
    mesh = u.mesh
    gradient_sq = np.sum(field_gradient(u) ** 2, axis=(0, 1))
    value_sq = np.sum(u.full() ** 2, axis=0)
    numerator = np.sqrt(_ball_mean(gradient_sq, mesh, center, r))
    denominator = np.sqrt(_ball_mean(value_sq, mesh, center, 2 * r)) / r
    return float(numerator / denominator) if denominator > 0 else 0.0


def energy_ratio(u: Field, F: np.ndarray, g: np.ndarray) -> float:
    """‖u‖_{H¹} / (‖F‖_{L²} + ‖g‖_{L^∞(∂Ω)})."""
    mesh = u.mesh
    forcing = Field(mesh=mesh, interior=np.asarray(F, dtype=np.float64), boundary=np.zeros((u.m, mesh.num_boundary)))
    data = norm(forcing, "L2") + float(np.abs(g).max(initial=0.0))
    if data == 0:
        return 0.0
    return norm(u, "H1") / data


@dataclass(slots=True)
class ManufacturedStudy:
    rows: list[tuple[float, float]]
    order: float | None


def manufactured_study(levels: Sequence[int] = (32, 64, 128, 256), tol: float = 1e-12) -> ManufacturedStudy:
    """
    Identity preset with λ = 1 and u = sin(πx)sin(πy), so F = (2π² + 1)u; L² error per h = 1/level.
    """
    if len(levels) < 3:
        raise RateError("manufactured_study needs at least three levels")
    identity = preset("identity").with_lambda(1.0)
    rows = []
    for level in sorted(levels):
        mesh = DomainMesh(M=level - 1)
        exact = Field.from_function(mesh, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2))
        F = (2 * np.pi**2 + 1.0) * exact.interior
        u = solve_dirichlet(assemble_operator(identity, None, mesh), F=F, tol=tol)
        rows.append((mesh.h, norm(u - exact, "L2")))
        logger.debug(f"manufactured h={mesh.h:g}: L² error {rows[-1][1]:.3e}")
    points = sorted(rows, key=lambda row: -row[0])
    order = fit_rate(points).slope
    return ManufacturedStudy(rows=points, order=order)


@dataclass(slots=True)
class UniformityRow:
    metric: str
    eps: float
    value: float


@dataclass(slots=True)
class UniformityReport:
    label: str
    rows: list[UniformityRow] = field(default_factory=list)

    def metrics(self) -> list[str]:
        return list(dict.fromkeys(row.metric for row in self.rows))

    def spread(self, metric: str) -> float:
        """max/min across ε; 1 for an all-zero metric."""
        values = np.array([row.value for row in self.rows if row.metric == metric])
        if not values.size or values.max() == 0:
            return 1.0
        if values.min() <= 0:
            return float("inf")
        return float(values.max() / values.min())

    def verdicts(self) -> dict[str, tuple[float, str]]:
        verdicts = {}
        for metric in self.metrics():
            spread = self.spread(metric)
            verdicts[metric] = (spread, "PASS" if spread < STABILITY_FACTOR else "FLAG")
        return verdicts


def uniformity_at(
    coefficients: CoefficientSet,
    eps: float,
    nodes_per_period: int,
    *,
    rhs: str = "one",
    boundary: str = "zero",
    tol: float = 1e-10,
    seed: int = 0,
) -> list[UniformityRow]:
    """Every uniformity metric for one ε."""
    mesh = DomainMesh.for_period(eps, nodes_per_period)
    m = coefficients.m
    op = assemble_operator(coefficients, eps, mesh)
    F, g = problem_data(mesh, m, rhs, boundary)
    u = solve_dirichlet(op, F=F, g=g, tol=tol)
    _, trace = problem_data(mesh, m, rhs, "affine")
    harmonic = solve_dirichlet(op, g=trace, tol=tol)
    rows = [
        UniformityRow("grad_L2", eps, norm(u, "W1psemi", p=2.0)),
        UniformityRow("grad_L4", eps, norm(u, "W1psemi", p=4.0)),
        UniformityRow("holder_0.5", eps, holder_seminorm(u, 0.5, seed=seed)),
        UniformityRow("max_principle", eps, norm(harmonic, "Linf") / float(np.abs(trace).max())),
        UniformityRow("energy", eps, energy_ratio(u, F, g)),
    ]
    for r in CACCIOPPOLI_RADII:
        rows.append(UniformityRow(f"caccioppoli_r={r:g}", eps, caccioppoli_ratio(harmonic, CENTER, r)))
    return rows


def uniformity_suite(
    coefficients: CoefficientSet,
    eps_list: Sequence[float],
    nodes_per_period: int = 16,
    *,
    rhs: str = "one",
    boundary: str = "zero",
    tol: float = 1e-10,
    seed: int = 0,
) -> UniformityReport:
    report = UniformityReport(label=coefficients.name)
    for eps in sorted(eps_list, reverse=True):
        report.rows.extend(
            uniformity_at(coefficients, eps, nodes_per_period, rhs=rhs, boundary=boundary, tol=tol, seed=seed)
        )
    for metric, (spread, status) in report.verdicts().items():
        logger.info(f"{coefficients.name} {metric}: max/min={spread:.3f} [{status}]")
    return report
