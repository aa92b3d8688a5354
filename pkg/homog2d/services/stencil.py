"""
Staggered finite-difference stencil shared by the torus and the Dirichlet domain.

Unknowns sit on lattice nodes. a11, V1, B1 are sampled on x-edges (between a node
and its +x1 neighbour), a22, V2, B2 on y-edges, the cross terms a12, a21 on quads
and c on nodes. The operator is assembled as

    L = Gᵀ(𝔸 G + 𝒱) + ℬ G + 𝒞 + shift·I

where G stacks the forward differences, 𝔸 maps gradients to fluxes, 𝒱 averages
nodes onto edges and ℬ averages edge quantities back onto nodes. Because every
term is written as a product of the same primitives, the coefficient set of the
formal adjoint assembles to exactly the transposed matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp

from homog2d.models.coefficients import CoefficientSet

Location = Literal["node", "x_edge", "y_edge", "quad"]


@dataclass(frozen=True)
class Lattice:
    """n×n nodes with spacing h; periodic (torus) or a closed square."""

    n: int
    h: float
    periodic: bool
    node_offset: float = 0.0

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def x_edge_shape(self) -> tuple[int, int]:
        return (self.n, self.n) if self.periodic else (self.n - 1, self.n)

    @property
    def y_edge_shape(self) -> tuple[int, int]:
        return (self.n, self.n) if self.periodic else (self.n, self.n - 1)

    @property
    def quad_shape(self) -> tuple[int, int]:
        return (self.n, self.n) if self.periodic else (self.n - 1, self.n - 1)

    @property
    def num_nodes(self) -> int:
        return self.n * self.n

    @property
    def num_x_edges(self) -> int:
        return int(np.prod(self.x_edge_shape))

    @property
    def num_y_edges(self) -> int:
        return int(np.prod(self.y_edge_shape))

    @property
    def num_edges(self) -> int:
        return self.num_x_edges + self.num_y_edges

    def shape_of(self, location: Location) -> tuple[int, int]:
        return {
            "node": self.node_shape,
            "x_edge": self.x_edge_shape,
            "y_edge": self.y_edge_shape,
            "quad": self.quad_shape,
        }[location]

    def positions(self, location: Location) -> tuple[np.ndarray, np.ndarray]:
        """Lattice coordinates (index + offset, in units of h) of a location family."""
        shift = {
            "node": (0.0, 0.0),
            "x_edge": (0.5, 0.0),
            "y_edge": (0.0, 0.5),
            "quad": (0.5, 0.5),
        }[location]
        i, j = np.indices(self.shape_of(location), dtype=np.float64)
        return i + self.node_offset + shift[0], j + self.node_offset + shift[1]

    def node_index(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        if self.periodic:
            i, j = i % self.n, j % self.n
        return i * self.n + j

    def x_edge_index(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        if self.periodic:
            return (i % self.n) * self.n + j % self.n
        return i * self.x_edge_shape[1] + j

    def y_edge_index(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        if self.periodic:
            return (i % self.n) * self.n + j % self.n
        return i * self.y_edge_shape[1] + j

    def _edge_operator(self, axis: int, low: float, high: float) -> sp.csr_matrix:
        shape = self.x_edge_shape if axis == 0 else self.y_edge_shape
        i, j = np.indices(shape)
        rows = (i * shape[1] + j).ravel()
        lo = self.node_index(i, j).ravel()
        hi = (self.node_index(i + 1, j) if axis == 0 else self.node_index(i, j + 1)).ravel()
        data = np.concatenate([np.full(rows.size, low), np.full(rows.size, high)])
        return sp.csr_matrix(
            (data, (np.concatenate([rows, rows]), np.concatenate([lo, hi]))),
            shape=(rows.size, self.num_nodes),
        )

    @cached_property
    def d1(self) -> sp.csr_matrix:
        return self._edge_operator(0, -1.0 / self.h, 1.0 / self.h)

    @cached_property
    def d2(self) -> sp.csr_matrix:
        return self._edge_operator(1, -1.0 / self.h, 1.0 / self.h)

    @cached_property
    def s1(self) -> sp.csr_matrix:
        return self._edge_operator(0, 0.5, 0.5)

    @cached_property
    def s2(self) -> sp.csr_matrix:
        return self._edge_operator(1, 0.5, 0.5)

    @cached_property
    def scalar_gradient(self) -> sp.csr_matrix:
        return sp.vstack([self.d1, self.d2]).tocsr()

    def pair(self, weights: np.ndarray) -> sp.csr_matrix:
        """Quad coupling x-edges × y-edges, ¼·w for each bottom/top × left/right pair."""
        qi, qj = np.indices(self.quad_shape)
        x_edges = [self.x_edge_index(qi, qj).ravel(), self.x_edge_index(qi, qj + 1).ravel()]
        y_edges = [self.y_edge_index(qi, qj).ravel(), self.y_edge_index(qi + 1, qj).ravel()]
        w = 0.25 * np.asarray(weights, dtype=np.float64).ravel()
        rows = np.concatenate([xe for xe in x_edges for _ in y_edges])
        cols = np.concatenate([ye for _ in x_edges for ye in y_edges])
        data = np.tile(w, 4)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.num_x_edges, self.num_y_edges))


@dataclass(frozen=True)
class StaggeredSamples:
    """Coefficients sampled at their staggered locations; arrays are read-only."""

    m: int
    a11: np.ndarray
    a22: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray


def sample_staggered(coeffs: CoefficientSet, lattice: Lattice, cells_per_unit: float) -> StaggeredSamples:
    """Sample every coefficient at y = (lattice position)/cells_per_unit."""

    def at(location: Location) -> tuple[np.ndarray, np.ndarray]:
        p1, p2 = lattice.positions(location)
        return p1 / cells_per_unit, p2 / cells_per_unit

    xe, ye, qd, nd = at("x_edge"), at("y_edge"), at("quad"), at("node")
    arrays = {
        "a11": coeffs.a_component(0, 0, *xe),
        "a22": coeffs.a_component(1, 1, *ye),
        "a12": coeffs.a_component(0, 1, *qd),
        "a21": coeffs.a_component(1, 0, *qd),
        "v1": coeffs.v_component(0, *xe),
        "v2": coeffs.v_component(1, *ye),
        "b1": coeffs.b_component(0, *xe),
        "b2": coeffs.b_component(1, *ye),
        "c": coeffs.c_values(*nd),
    }
    for array in arrays.values():
        array.flags.writeable = False
    return StaggeredSamples(m=coeffs.m, **arrays)


def _diag(values: np.ndarray) -> sp.csr_matrix:
    flat = values.ravel()
    if not np.any(flat):
        return sp.csr_matrix((flat.size, flat.size))
    return sp.diags(flat, format="csr")


def _empty(rows: int, cols: int) -> sp.csr_matrix:
    return sp.csr_matrix((rows, cols))


def gradient_matrix(lattice: Lattice, m: int) -> sp.csr_matrix:
    """Block-diagonal [D1; D2] per component: nodes → edges."""
    return sp.block_diag([lattice.scalar_gradient] * m, format="csr")


def flux_matrix(lattice: Lattice, s: StaggeredSamples) -> sp.csr_matrix:
    """𝔸: edge gradients → edge fluxes."""
    blocks = []
    for alpha in range(s.m):
        row = []
        for beta in range(s.m):
            a12, a21 = s.a12[alpha, beta], s.a21[alpha, beta]
            cross = lattice.pair(a12) if np.any(a12) else _empty(lattice.num_x_edges, lattice.num_y_edges)
            cross_t = (
                lattice.pair(a21).T
                if np.any(a21)
                else _empty(lattice.num_y_edges, lattice.num_x_edges)
            )
            row.append(sp.bmat([[_diag(s.a11[alpha, beta]), cross], [cross_t, _diag(s.a22[alpha, beta])]]))
        blocks.append(row)
    return sp.bmat(blocks, format="csr")


def drift_into_edges(lattice: Lattice, s: StaggeredSamples) -> sp.csr_matrix:
    """𝒱: node values → V-weighted edge averages."""
    blocks = [
        [
            sp.vstack([_diag(s.v1[alpha, beta]) @ lattice.s1, _diag(s.v2[alpha, beta]) @ lattice.s2])
            for beta in range(s.m)
        ]
        for alpha in range(s.m)
    ]
    return sp.bmat(blocks, format="csr")


def drift_onto_nodes(lattice: Lattice, s: StaggeredSamples) -> sp.csr_matrix:
    """ℬ: edge gradients → B-weighted node averages."""
    blocks = [
        [
            sp.hstack([lattice.s1.T @ _diag(s.b1[alpha, beta]), lattice.s2.T @ _diag(s.b2[alpha, beta])])
            for beta in range(s.m)
        ]
        for alpha in range(s.m)
    ]
    return sp.bmat(blocks, format="csr")


def reaction_matrix(s: StaggeredSamples) -> sp.csr_matrix:
    return sp.bmat([[_diag(s.c[alpha, beta]) for beta in range(s.m)] for alpha in range(s.m)], format="csr")


def assemble(lattice: Lattice, s: StaggeredSamples, *, shift: float = 0.0) -> sp.csr_matrix:
    """Full operator on every lattice node, boundary nodes included."""
    grad = gradient_matrix(lattice, s.m)
    operator = grad.T @ (flux_matrix(lattice, s) @ grad + drift_into_edges(lattice, s))
    operator = operator + drift_onto_nodes(lattice, s) @ grad + reaction_matrix(s)
    if shift:
        operator = operator + shift * sp.identity(s.m * lattice.num_nodes, format="csr")
    operator = operator.tocsr()
    operator.eliminate_zeros()
    return operator


def leading_order_matrix(lattice: Lattice, s: StaggeredSamples) -> sp.csr_matrix:
    """Gᵀ𝔸G only."""
    grad = gradient_matrix(lattice, s.m)
    operator = (grad.T @ flux_matrix(lattice, s) @ grad).tocsr()
    operator.eliminate_zeros()
    return operator


def unit_gradient(lattice: Lattice, m: int, k: int, beta: int) -> np.ndarray:
    """Edge vector of the constant gradient e_k in component β (k = 1, 2)."""
    out = np.zeros(m * lattice.num_edges)
    start = beta * lattice.num_edges
    if k == 1:
        out[start : start + lattice.num_x_edges] = 1.0
    else:
        out[start + lattice.num_x_edges : start + lattice.num_edges] = 1.0
    return out


def split_edges(vector: np.ndarray, lattice: Lattice, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Edge vector → (x-edge values (m, *x_shape), y-edge values (m, *y_shape))."""
    blocks = vector.reshape(m, lattice.num_edges)
    x = blocks[:, : lattice.num_x_edges].reshape(m, *lattice.x_edge_shape)
    y = blocks[:, lattice.num_x_edges :].reshape(m, *lattice.y_edge_shape)
    return x, y


def is_symmetric(matrix: sp.spmatrix, *, rtol: float = 1e-12) -> bool:
    difference = abs(matrix - matrix.T)
    scale = abs(matrix).max() if matrix.nnz else 0.0
    return difference.nnz == 0 or difference.max() <= rtol * max(scale, 1e-300)
