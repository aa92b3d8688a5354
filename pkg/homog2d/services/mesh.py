"""
Uniform mesh of the unit square and nodal vector fields on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from homog2d.core.errors import CommensurabilityError, GridMismatchError
from homog2d.services.stencil import Lattice, gradient_matrix


@dataclass(frozen=True)
class DomainMesh:
    """Nodes (ih, jh), 0 ≤ i, j ≤ M+1, h = 1/(M+1); M×M interior unknowns."""

    M: int

    def __post_init__(self) -> None:
        if self.M < 1:
            raise GridMismatchError(f"Mesh needs at least one interior node, got M={self.M}")

    @classmethod
    def for_period(cls, eps: float, nodes_per_period: int) -> "DomainMesh":
        """M+1 = P/ε."""
        cells = Fraction(nodes_per_period) / Fraction(eps).limit_denominator(1 << 20)
        if cells.denominator != 1:
            raise CommensurabilityError(
                f"P/ε = {float(cells)} is not an integer (ε={eps}, P={nodes_per_period})",
                details={"eps": eps, "nodes_per_period": nodes_per_period},
            )
        return cls(M=int(cells) - 1)

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    @property
    def n(self) -> int:
        return self.M + 2

    @property
    def num_boundary(self) -> int:
        return 4 * (self.M + 1)

    def nodes_per_period(self, eps: float) -> int:
        """(M+1)ε; raises when the mesh does not resolve whole periods."""
        cells = Fraction(self.M + 1) * Fraction(eps).limit_denominator(1 << 20)
        if cells.denominator != 1:
            raise CommensurabilityError(
                f"(M+1)·ε = {float(cells)} is not an integer (M={self.M}, ε={eps})",
                details={"M": self.M, "eps": eps},
            )
        return int(cells)

    @cached_property
    def lattice(self) -> Lattice:
        return Lattice(n=self.n, h=self.h, periodic=False, node_offset=0.0)

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = np.indices((self.n, self.n), dtype=np.float64)
        return i * self.h, j * self.h

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros((self.n, self.n), dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask

    @cached_property
    def interior_flat(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def boundary_flat(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask)

    @cached_property
    def distance_to_boundary(self) -> np.ndarray:
        x1, x2 = self.coordinates
        return np.minimum.reduce([x1, 1.0 - x1, x2, 1.0 - x2])

    def nearest_node(self, point: tuple[float, float]) -> tuple[int, int]:
        i = int(np.clip(round(point[0] / self.h), 0, self.n - 1))
        j = int(np.clip(round(point[1] / self.h), 0, self.n - 1))
        return i, j

    def node_point(self, node: tuple[int, int]) -> tuple[float, float]:
        return node[0] * self.h, node[1] * self.h

    def component_indices(self, flat: np.ndarray, m: int) -> np.ndarray:
        """Scalar node indices → indices into the stacked m-component vector."""
        return np.concatenate([alpha * self.n * self.n + flat for alpha in range(m)])


@lru_cache(maxsize=32)
def domain_gradient(mesh: DomainMesh, m: int) -> sp.csr_matrix:
    return gradient_matrix(mesh.lattice, m)


@dataclass(frozen=True, eq=False)
class Field:
    """m-component nodal field: interior (m, M, M) plus boundary trace (m, 4(M+1))."""

    mesh: DomainMesh
    interior: np.ndarray
    boundary: np.ndarray

    def __post_init__(self) -> None:
        M = self.mesh.M
        m = self.interior.shape[0]
        if self.interior.shape != (m, M, M) or self.boundary.shape != (m, self.mesh.num_boundary):
            raise GridMismatchError(
                f"Field arrays {self.interior.shape}/{self.boundary.shape} do not match M={M}",
                details={"M": M},
            )

    @property
    def m(self) -> int:
        return self.interior.shape[0]

    def full(self) -> np.ndarray:
        n = self.mesh.n
        out = np.zeros((self.m, n * n))
        out[:, self.mesh.interior_flat] = self.interior.reshape(self.m, -1)
        out[:, self.mesh.boundary_flat] = self.boundary
        return out.reshape(self.m, n, n)

    @classmethod
    def from_full(cls, mesh: DomainMesh, full: np.ndarray) -> "Field":
        full = np.asarray(full, dtype=np.float64)
        if full.ndim == 2:
            full = full[None]
        flat = full.reshape(full.shape[0], -1)
        return cls(
            mesh=mesh,
            interior=full[:, 1:-1, 1:-1].copy(),
            boundary=flat[:, mesh.boundary_flat].copy(),
        )

    @classmethod
    def from_function(cls, mesh: DomainMesh, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], m: int = 1) -> "Field":
        x1, x2 = mesh.coordinates
        values = np.broadcast_to(np.asarray(fn(x1, x2), dtype=np.float64), (m, mesh.n, mesh.n))
        return cls.from_full(mesh, values)

    @classmethod
    def zeros(cls, mesh: DomainMesh, m: int = 1) -> "Field":
        return cls(mesh=mesh, interior=np.zeros((m, mesh.M, mesh.M)), boundary=np.zeros((m, mesh.num_boundary)))

    def _check(self, other: "Field") -> None:
        if other.mesh != self.mesh or other.m != self.m:
            raise GridMismatchError("Field arithmetic needs matching meshes and component counts")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.mesh, self.interior + other.interior, self.boundary + other.boundary)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.mesh, self.interior - other.interior, self.boundary - other.boundary)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.mesh, self.interior * scalar, self.boundary * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0
