"""Tensor Chebyshev interpolation and kernel matrix assembly.

Every cluster box carries a tensor grid of order**3 Chebyshev points of
the first kind.  Interpolating the kernel on an admissible block yields
the familiar degenerate expansion: leaf matrices sample the Lagrange
polynomials at triangle midpoints (weighted by triangle area, matching a
one-point quadrature of piecewise-constant Galerkin integrals), transfer
matrices evaluate parent Lagrange polynomials at child grids, and the
coupling matrix is the kernel evaluated on a pair of grids.

Boxes may be flat in one or more axes (planar or singleton clusters).  A
degenerate axis keeps order identical points; its 1D "Lagrange basis" is
the constant 1 in the first slot and 0 elsewhere.  Polynomial
reproduction still holds on the flat box, so basis nestedness stays
exact.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import BlockTree, BoundingBox, Cluster, ClusterTree, TriangleMesh
from .h2core import ClusterBasis, H2Matrix


def chebyshev_points(a: float, b: float, m: int) -> np.ndarray:
    """Chebyshev points of the first kind mapped to [a, b], largest first.

    A degenerate interval (a == b) yields m copies of a.
    """
    if m < 1:
        raise ValueError("order must be >= 1")
    if b < a:
        raise ValueError("interval must satisfy a <= b")
    j = np.arange(m)
    nodes = np.cos((2 * j + 1) * math.pi / (2 * m))
    return 0.5 * (a + b) + 0.5 * (b - a) * nodes


def _lagrange_1d(nodes: np.ndarray, x: np.ndarray, degenerate: bool) -> np.ndarray:
    """Matrix of 1D Lagrange values L[p, i] = ell_i(x_p)."""
    m = len(nodes)
    out = np.empty((len(x), m))
    if degenerate:
        out[:, 0] = 1.0
        out[:, 1:] = 0.0
        return out
    for i in range(m):
        values = np.ones_like(x)
        for j in range(m):
            if j != i:
                values = values * ((x - nodes[j]) / (nodes[i] - nodes[j]))
        out[:, i] = values
    return out


class InterpolationScheme:
    """Fixed-order tensor Chebyshev interpolation on bounding boxes."""

    __slots__ = ("order", "rank")

    def __init__(self, order: int):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.rank = order**3

    def axis_points(self, box: BoundingBox) -> list[np.ndarray]:
        return [
            chebyshev_points(box.lower[d], box.upper[d], self.order) for d in range(3)
        ]

    def points(self, box: BoundingBox) -> np.ndarray:
        """Tensor grid of rank = order**3 points, C-ordered over the axes."""
        xs = self.axis_points(box)
        grid = np.meshgrid(*xs, indexing="ij")
        return np.stack([g.reshape(-1) for g in grid], axis=1)

    def lagrange(self, box: BoundingBox, points: np.ndarray) -> np.ndarray:
        """Values of all tensor Lagrange polynomials of the box at given points."""
        xs = self.axis_points(box)
        factors = [
            _lagrange_1d(xs[d], points[:, d], box.upper[d] == box.lower[d])
            for d in range(3)
        ]
        m, p = self.order, len(points)
        product = (
            factors[0][:, :, None, None]
            * factors[1][:, None, :, None]
            * factors[2][:, None, None, :]
        )
        return product.reshape(p, m**3)


def transfer_matrix(parent: Cluster, child: Cluster, scheme: InterpolationScheme) -> np.ndarray:
    """Parent Lagrange polynomials evaluated at the child grid: row nu' = child point."""
    return scheme.lagrange(parent.box, scheme.points(child.box))


class SingleLayerLaplace:
    """3D Laplace single-layer kernel 1 / (4 pi |x - y|), zero on the diagonal."""

    def pairwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = x[:, None, :] - y[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        out = np.zeros_like(r)
        mask = r > 0.0
        out[mask] = 1.0 / (4.0 * math.pi * r[mask])
        return out

    def __call__(self, x, y) -> float:
        return float(self.pairwise(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


def interpolation_basis(
    mesh: TriangleMesh, tree: ClusterTree, scheme: InterpolationScheme
) -> ClusterBasis:
    """Cluster basis of area-weighted Lagrange samples with uniform rank."""
    mids = mesh.midpoints[tree.order]
    areas = mesh.areas[tree.order]
    leaf: dict[int, np.ndarray] = {}
    transfer: dict[int, np.ndarray] = {}
    for cluster in tree.clusters:
        if cluster.is_leaf:
            values = scheme.lagrange(cluster.box, mids[cluster.start : cluster.stop])
            leaf[cluster.index] = areas[cluster.start : cluster.stop, None] * values
        for child in cluster.children:
            transfer[child.index] = transfer_matrix(cluster, child, scheme)
    ranks = [scheme.rank] * len(tree.clusters)
    return ClusterBasis(tree, ranks, leaf, transfer)


def assemble_h2(
    mesh: TriangleMesh,
    block_tree: BlockTree,
    kernel,
    scheme: InterpolationScheme,
) -> H2Matrix:
    """Assemble the H^2 approximation of the kernel matrix on a block tree.

    Admissible blocks get coupling matrices of kernel values on the two
    grids; inadmissible leaves get exact one-point-quadrature entries
    area_i * area_j * g(mid_i, mid_j).
    """
    row_tree, col_tree = block_tree.row_tree, block_tree.col_tree
    row_basis = interpolation_basis(mesh, row_tree, scheme)
    col_basis = interpolation_basis(mesh, col_tree, scheme)
    row_mids = mesh.midpoints[row_tree.order]
    row_areas = mesh.areas[row_tree.order]
    col_mids = mesh.midpoints[col_tree.order]
    col_areas = mesh.areas[col_tree.order]
    coupling: dict[int, np.ndarray] = {}
    nearfield: dict[int, np.ndarray] = {}
    for block in block_tree.blocks:
        if block.is_admissible_leaf:
            coupling[block.index] = kernel.pairwise(
                scheme.points(block.row.box), scheme.points(block.col.box)
            )
        elif block.is_dense_leaf:
            t, s = block.row, block.col
            values = kernel.pairwise(row_mids[t.start : t.stop], col_mids[s.start : s.stop])
            nearfield[block.index] = (
                row_areas[t.start : t.stop, None] * values * col_areas[None, s.start : s.stop]
            )
    return H2Matrix(block_tree, row_basis, col_basis, coupling, nearfield)


def assemble_dense(
    mesh: TriangleMesh,
    kernel,
    row_tree: ClusterTree,
    col_tree: ClusterTree,
    limit: int = 4096,
) -> np.ndarray:
    """Dense one-point-quadrature matrix in tree order; the assembly oracle."""
    if max(len(row_tree), len(col_tree)) > limit:
        raise ValueError("dense assembly refused above the oracle limit")
    values = kernel.pairwise(mesh.midpoints[row_tree.order], mesh.midpoints[col_tree.order])
    return (
        mesh.areas[row_tree.order][:, None] * values * mesh.areas[col_tree.order][None, :]
    )
