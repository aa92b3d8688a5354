"""
Discrete Lebesgue/Sobolev norms and Hölder seminorms of nodal fields.

Integrals use the tensor trapezoid rule on the closed lattice and gradients use
second-order centred differences (one-sided on the boundary rows).
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from homog2d.core.errors import GridMismatchError
from homog2d.services.mesh import DomainMesh, Field

NormKind = Literal["L1", "L2", "Lp", "Linf", "H1", "H1semi", "W1p", "W1psemi"]
Region = Literal["all", "interior"]

# Ω' = (1/4, 3/4)²
INTERIOR_REGION = (0.25, 0.75)


def quadrature_weights(mesh: DomainMesh, region: Region = "all") -> np.ndarray:
    w = np.full(mesh.n, mesh.h)
    w[0] = w[-1] = 0.5 * mesh.h
    weights = np.outer(w, w)
    if region == "interior":
        weights = weights * region_mask(mesh, region)
    return weights


def region_mask(mesh: DomainMesh, region: Region = "all") -> np.ndarray:
    if region == "all":
        return np.ones((mesh.n, mesh.n), dtype=bool)
    lo, hi = INTERIOR_REGION
    x1, x2 = mesh.coordinates
    eps = 1e-12
    return (x1 >= lo - eps) & (x1 <= hi + eps) & (x2 >= lo - eps) & (x2 <= hi + eps)


def integrate(values: np.ndarray, mesh: DomainMesh, region: Region = "all") -> float:
    return float(np.sum(quadrature_weights(mesh, region) * values))


def field_gradient(u: Field) -> np.ndarray:
    """(m, 2, n, n) centred-difference gradient of the full nodal array."""
    full = u.full()
    d1, d2 = np.gradient(full, u.mesh.h, axis=(1, 2), edge_order=2)
    return np.stack([d1, d2], axis=1)


def pointwise_magnitude(u: Field) -> np.ndarray:
    return np.sqrt(np.sum(u.full() ** 2, axis=0))


def gradient_magnitude(u: Field) -> np.ndarray:
    return np.sqrt(np.sum(field_gradient(u) ** 2, axis=(0, 1)))


def _lp(values: np.ndarray, p: float, mesh: DomainMesh, region: Region) -> float:
    if np.isinf(p):
        return float(values[region_mask(mesh, region)].max())
    return integrate(values**p, mesh, region) ** (1.0 / p)


def norm(u: Field, kind: NormKind, p: float = 2.0, region: Region = "all") -> float:
    """‖u‖ of the requested kind over Ω or Ω'."""
    mesh = u.mesh
    if kind == "Linf":
        return _lp(pointwise_magnitude(u), np.inf, mesh, region)
    if kind in ("L1", "L2", "Lp"):
        exponent = {"L1": 1.0, "L2": 2.0}.get(kind, p)
        return _lp(pointwise_magnitude(u), exponent, mesh, region)
    grad = gradient_magnitude(u)
    if kind == "H1semi":
        return _lp(grad, 2.0, mesh, region)
    if kind == "H1":
        return float(np.hypot(_lp(pointwise_magnitude(u), 2.0, mesh, region), _lp(grad, 2.0, mesh, region)))
    if kind == "W1psemi":
        return _lp(grad, p, mesh, region)
    if kind == "W1p":
        if np.isinf(p):
            return max(_lp(pointwise_magnitude(u), p, mesh, region), _lp(grad, p, mesh, region))
        values = pointwise_magnitude(u) ** p + grad**p
        return integrate(values, mesh, region) ** (1.0 / p)
    raise GridMismatchError(f"Unknown norm kind '{kind}'")


def holder_seminorm(
    u: Field,
    sigma: float,
    *,
    pairs: int = 4096,
    seed: int = 0,
    region: Region = "all",
) -> float:
    """
    max |u(x)−u(y)|/|x−y|^σ over every adjacent node pair plus `pairs` random pairs.
    """
    mesh = u.mesh
    full = u.full()
    mask = region_mask(mesh, region)
    best = 0.0
    step = mesh.h**sigma
    horizontal = np.sqrt(np.sum((full[:, 1:, :] - full[:, :-1, :]) ** 2, axis=0))
    vertical = np.sqrt(np.sum((full[:, :, 1:] - full[:, :, :-1]) ** 2, axis=0))
    h_mask = mask[1:, :] & mask[:-1, :]
    v_mask = mask[:, 1:] & mask[:, :-1]
    if h_mask.any():
        best = max(best, float(horizontal[h_mask].max()) / step)
    if v_mask.any():
        best = max(best, float(vertical[v_mask].max()) / step)
    if pairs > 0:
        rng = np.random.default_rng(seed)
        candidates = np.argwhere(mask)
        first = candidates[rng.integers(len(candidates), size=pairs)]
        second = candidates[rng.integers(len(candidates), size=pairs)]
        distance = np.hypot(*(first - second).T) * mesh.h
        keep = distance > 0
        if keep.any():
            a = full[:, first[keep, 0], first[keep, 1]]
            b = full[:, second[keep, 0], second[keep, 1]]
            jumps = np.sqrt(np.sum((a - b) ** 2, axis=0))
            best = max(best, float(np.max(jumps / distance[keep] ** sigma)))
    return best
