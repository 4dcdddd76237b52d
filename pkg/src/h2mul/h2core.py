"""Nested cluster bases and the H^2-matrix container.

A cluster basis attaches a matrix V_t with rank(t) columns to every
cluster of a tree, stored as explicit leaf matrices on leaf clusters and
transfer matrices E_t elsewhere, so that restricting V_t to a child's
rows gives V_child @ E_child.  An H^2-matrix combines a row basis V, a
column basis W, one coupling matrix S_b per admissible block (the block
equals V_t S_b W_s^T) and one dense matrix per inadmissible leaf.

All vectors and dense views live in tree order: index i refers to the
triangle at position i of the owning tree's permutation.
"""

from __future__ import annotations

import numpy as np

from .geometry import ADMISSIBLE, Block, BlockTree, BoundingBox, Cluster, ClusterTree, DENSE, SPLIT


class ClusterBasis:
    """Nested basis over a cluster tree with per-cluster ranks."""

    __slots__ = ("tree", "ranks", "leaf", "transfer")

    def __init__(self, tree, ranks, leaf, transfer):
        self.tree = tree
        self.ranks = ranks
        self.leaf = leaf
        self.transfer = transfer

    def rank(self, cluster: Cluster) -> int:
        return self.ranks[cluster.index]

    def leaf_matrix(self, cluster: Cluster) -> np.ndarray:
        return self.leaf[cluster.index]

    def transfer_matrix(self, cluster: Cluster) -> np.ndarray:
        return self.transfer[cluster.index]

    def expand(self, cluster: Cluster) -> np.ndarray:
        """Materialize V_t as a dense (|t|, rank) matrix."""
        return self.unproject(cluster, np.eye(self.rank(cluster)))

    def unproject(self, cluster: Cluster, coeff: np.ndarray) -> np.ndarray:
        """V_t @ coeff without materializing V_t on non-leaf clusters."""
        if coeff.ndim == 1:
            return self.unproject(cluster, coeff[:, None])[:, 0]
        if cluster.is_leaf:
            return self.leaf[cluster.index] @ coeff
        parts = [
            self.unproject(child, self.transfer[child.index] @ coeff)
            for child in cluster.children
        ]
        return np.vstack(parts)

    def project(self, cluster: Cluster, dense: np.ndarray) -> np.ndarray:
        """V_t^T @ dense for a dense block aligned with the cluster's range."""
        if cluster.is_leaf:
            return self.leaf[cluster.index].T @ dense
        total = None
        for child in cluster.children:
            rows = dense[child.start - cluster.start : child.stop - cluster.start]
            part = self.transfer[child.index].T @ self.project(child, rows)
            total = part if total is None else total + part
        return total

    def storage_reals(self) -> int:
        """Number of floats held in leaf and transfer matrices."""
        total = sum(m.size for m in self.leaf.values())
        return total + sum(m.size for m in self.transfer.values())


def expand_basis(basis: ClusterBasis, cluster: Cluster) -> np.ndarray:
    """Dense V_t, stacked from leaf matrices through the transfer chain."""
    return basis.expand(cluster)


class BasisProductMap:
    """Per-cluster Gram-type products W_s^T V_s between two bases on one tree."""

    __slots__ = ("tree", "products")

    def __init__(self, tree, products):
        self.tree = tree
        self.products = products

    def __getitem__(self, cluster: Cluster) -> np.ndarray:
        return self.products[cluster.index]


def basis_products(col_basis: ClusterBasis, row_basis: ClusterBasis) -> BasisProductMap:
    """Compute expand(col_basis, s)^T @ expand(row_basis, s) for every cluster s.

    Both bases must live on the same tree; the recursion sums transfer-
    conjugated child products, touching each cluster once.
    """
    if col_basis.tree is not row_basis.tree:
        raise ValueError("basis products need both bases on one tree")
    tree = col_basis.tree
    products: list[np.ndarray | None] = [None] * len(tree.clusters)
    for cluster in reversed(tree.clusters):
        if cluster.is_leaf:
            products[cluster.index] = (
                col_basis.leaf[cluster.index].T @ row_basis.leaf[cluster.index]
            )
        else:
            total = None
            for child in cluster.children:
                part = (
                    col_basis.transfer[child.index].T
                    @ products[child.index]
                    @ row_basis.transfer[child.index]
                )
                total = part if total is None else total + part
            products[cluster.index] = total
    return BasisProductMap(tree, products)


class H2Matrix:
    """H^2-matrix: block tree, two nested bases, couplings and nearfield blocks."""

    __slots__ = ("block_tree", "row_basis", "col_basis", "coupling", "nearfield")

    def __init__(self, block_tree, row_basis, col_basis, coupling, nearfield):
        self.block_tree = block_tree
        self.row_basis = row_basis
        self.col_basis = col_basis
        self.coupling = coupling
        self.nearfield = nearfield

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.block_tree.row_tree), len(self.block_tree.col_tree))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return h2_matvec(self, x)

    def matvec_adjoint(self, x: np.ndarray) -> np.ndarray:
        return h2_matvec_adjoint(self, x)

    def to_dense(self, limit: int = 4096) -> np.ndarray:
        return to_dense(self, limit)

    def validate(self) -> None:
        """Raise if any stored matrix shape contradicts the trees and ranks."""
        for basis, tree in (
            (self.row_basis, self.block_tree.row_tree),
            (self.col_basis, self.block_tree.col_tree),
        ):
            if basis.tree is not tree:
                raise ValueError("basis attached to the wrong cluster tree")
            for cluster in tree.clusters:
                rank = basis.rank(cluster)
                if cluster.is_leaf:
                    if basis.leaf[cluster.index].shape != (cluster.size, rank):
                        raise ValueError(f"leaf matrix shape mismatch at {cluster}")
                for child in cluster.children:
                    shape = basis.transfer[child.index].shape
                    if shape != (basis.rank(child), rank):
                        raise ValueError(f"transfer shape mismatch at {child}")
        for block in self.block_tree.blocks:
            if block.is_admissible_leaf:
                expected = (self.row_basis.rank(block.row), self.col_basis.rank(block.col))
                if self.coupling[block.index].shape != expected:
                    raise ValueError(f"coupling shape mismatch at {block}")
            elif block.is_dense_leaf:
                expected = (block.row.size, block.col.size)
                if self.nearfield[block.index].shape != expected:
                    raise ValueError(f"nearfield shape mismatch at {block}")


def _as_columns(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[:, None], True
    return x, False


def _forward(basis: ClusterBasis, x: np.ndarray) -> list:
    """Bottom-up transform: coefficient vectors V_s^T x|_s for every cluster."""
    hats: list = [None] * len(basis.tree.clusters)
    for cluster in reversed(basis.tree.clusters):
        if cluster.is_leaf:
            hats[cluster.index] = basis.leaf[cluster.index].T @ x[cluster.start : cluster.stop]
        else:
            total = None
            for child in cluster.children:
                part = basis.transfer[child.index].T @ hats[child.index]
                total = part if total is None else total + part
            hats[cluster.index] = total
    return hats


def _backward(basis: ClusterBasis, hats: list, y: np.ndarray) -> None:
    """Top-down transform: push coefficient contributions into y."""
    for cluster in basis.tree.clusters:
        coeff = hats[cluster.index]
        if coeff is None:
            continue
        if cluster.is_leaf:
            y[cluster.start : cluster.stop] += basis.leaf[cluster.index] @ coeff
        else:
            for child in cluster.children:
                part = basis.transfer[child.index] @ coeff
                if hats[child.index] is None:
                    hats[child.index] = part
                else:
                    hats[child.index] += part


def h2_matvec(matrix: H2Matrix, x: np.ndarray) -> np.ndarray:
    """y = G @ x in tree order; accepts a vector or a matrix of columns."""
    x, squeeze = _as_columns(x)
    if x.shape[0] != matrix.shape[1]:
        raise ValueError("vector length does not match the matrix columns")
    xhat = _forward(matrix.col_basis, x)
    yhat: list = [None] * len(matrix.block_tree.row_tree.clusters)
    y = np.zeros((matrix.shape[0], x.shape[1]))
    for block in matrix.block_tree.blocks:
        if block.is_admissible_leaf:
            part = matrix.coupling[block.index] @ xhat[block.col.index]
            if yhat[block.row.index] is None:
                yhat[block.row.index] = part
            else:
                yhat[block.row.index] += part
        elif block.is_dense_leaf:
            y[block.row.start : block.row.stop] += (
                matrix.nearfield[block.index] @ x[block.col.start : block.col.stop]
            )
    _backward(matrix.row_basis, yhat, y)
    return y[:, 0] if squeeze else y


def h2_matvec_adjoint(matrix: H2Matrix, x: np.ndarray) -> np.ndarray:
    """y = G^T @ x, mirroring h2_matvec with the two bases swapped."""
    x, squeeze = _as_columns(x)
    if x.shape[0] != matrix.shape[0]:
        raise ValueError("vector length does not match the matrix rows")
    xhat = _forward(matrix.row_basis, x)
    yhat: list = [None] * len(matrix.block_tree.col_tree.clusters)
    y = np.zeros((matrix.shape[1], x.shape[1]))
    for block in matrix.block_tree.blocks:
        if block.is_admissible_leaf:
            part = matrix.coupling[block.index].T @ xhat[block.row.index]
            if yhat[block.col.index] is None:
                yhat[block.col.index] = part
            else:
                yhat[block.col.index] += part
        elif block.is_dense_leaf:
            y[block.col.start : block.col.stop] += (
                matrix.nearfield[block.index].T @ x[block.row.start : block.row.stop]
            )
    _backward(matrix.col_basis, yhat, y)
    return y[:, 0] if squeeze else y


def block_apply(matrix: H2Matrix, block: Block, dense: np.ndarray) -> np.ndarray:
    """G|_{t x s} @ dense for a block of the tree, dense aligned with s's range."""
    if block.is_admissible_leaf:
        coeff = matrix.coupling[block.index] @ matrix.col_basis.project(block.col, dense)
        return matrix.row_basis.unproject(block.row, coeff)
    if block.is_dense_leaf:
        return matrix.nearfield[block.index] @ dense
    out = np.zeros((block.row.size, dense.shape[1]))
    for child in block.children:
        cols = dense[child.col.start - block.col.start : child.col.stop - block.col.start]
        rows = slice(child.row.start - block.row.start, child.row.stop - block.row.start)
        out[rows] += block_apply(matrix, child, cols)
    return out


def block_apply_adjoint(matrix: H2Matrix, block: Block, dense: np.ndarray) -> np.ndarray:
    """(G|_{t x s})^T @ dense, dense aligned with t's range."""
    if block.is_admissible_leaf:
        coeff = matrix.coupling[block.index].T @ matrix.row_basis.project(block.row, dense)
        return matrix.col_basis.unproject(block.col, coeff)
    if block.is_dense_leaf:
        return matrix.nearfield[block.index].T @ dense
    out = np.zeros((block.col.size, dense.shape[1]))
    for child in block.children:
        rows = dense[child.row.start - block.row.start : child.row.stop - block.row.start]
        cols = slice(child.col.start - block.col.start, child.col.stop - block.col.start)
        out[cols] += block_apply_adjoint(matrix, child, rows)
    return out


def to_dense(matrix: H2Matrix, limit: int = 4096) -> np.ndarray:
    """Materialize the full matrix in tree order; guarded test oracle."""
    rows, cols = matrix.shape
    if max(rows, cols) > limit:
        raise ValueError(f"to_dense refused for shape {matrix.shape} with limit {limit}")
    out = np.zeros(matrix.shape)
    for block in matrix.block_tree.blocks:
        if block.is_admissible_leaf:
            part = (
                matrix.row_basis.unproject(block.row, matrix.coupling[block.index])
                @ matrix.col_basis.expand(block.col).T
            )
        elif block.is_dense_leaf:
            part = matrix.nearfield[block.index]
        else:
            continue
        out[block.row.start : block.row.stop, block.col.start : block.col.stop] = part
    return out


_MAGIC = b"H2MULv1\n"
_KIND_CODES = {ADMISSIBLE: 0, DENSE: 1, SPLIT: 2}
_KIND_NAMES = {0: ADMISSIBLE, 1: DENSE, 2: SPLIT}


class _Writer:
    def __init__(self):
        self.chunks = [_MAGIC]

    def i64(self, *values) -> None:
        self.chunks.append(np.asarray(values, dtype="<i8").tobytes())

    def f64(self, array) -> None:
        self.chunks.append(np.ascontiguousarray(array, dtype="<f8").tobytes())

    def matrix(self, m: np.ndarray) -> None:
        self.i64(m.shape[0], m.shape[1])
        self.f64(m)


class _Reader:
    def __init__(self, data: bytes):
        if data[: len(_MAGIC)] != _MAGIC:
            raise ValueError("not an H2 matrix file")
        self.data = data
        self.offset = len(_MAGIC)

    def i64(self, count: int) -> np.ndarray:
        out = np.frombuffer(self.data, dtype="<i8", count=count, offset=self.offset)
        self.offset += 8 * count
        return out

    def f64(self, count: int) -> np.ndarray:
        out = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.offset)
        self.offset += 8 * count
        return out.astype(np.float64)

    def matrix(self) -> np.ndarray:
        rows, cols = self.i64(2)
        return self.f64(int(rows) * int(cols)).reshape(int(rows), int(cols))


def _write_cluster_tree(w: _Writer, tree: ClusterTree) -> None:
    w.i64(len(tree), tree.leaf_size, len(tree.clusters))
    w.i64(*tree.order.tolist())
    for c in tree.clusters:
        w.i64(c.start, c.stop, c.level, len(c.children), *(k.index for k in c.children))
        w.f64(c.box.lower)
        w.f64(c.box.upper)


def _read_cluster_tree(r: _Reader) -> ClusterTree:
    n, leaf_size, count = (int(v) for v in r.i64(3))
    order = r.i64(n).astype(np.int64).copy()
    clusters: list[Cluster] = []
    child_ids: list[list[int]] = []
    for index in range(count):
        start, stop, level, nchildren = (int(v) for v in r.i64(4))
        kids = [int(v) for v in r.i64(nchildren)]
        box = BoundingBox(r.f64(3), r.f64(3))
        clusters.append(Cluster(index, start, stop, level, box))
        child_ids.append(kids)
    for cluster, kids in zip(clusters, child_ids):
        cluster.children = tuple(clusters[k] for k in kids)
    return ClusterTree(clusters[0], clusters, order, leaf_size)


def _write_basis(w: _Writer, basis: ClusterBasis) -> None:
    w.i64(*basis.ranks)
    for c in basis.tree.clusters:
        if c.is_leaf:
            w.matrix(basis.leaf[c.index])
        if c.index != basis.tree.root.index:
            w.matrix(basis.transfer[c.index])


def _read_basis(r: _Reader, tree: ClusterTree) -> ClusterBasis:
    ranks = [int(v) for v in r.i64(len(tree.clusters))]
    leaf: dict[int, np.ndarray] = {}
    transfer: dict[int, np.ndarray] = {}
    for c in tree.clusters:
        if c.is_leaf:
            leaf[c.index] = r.matrix()
        if c.index != tree.root.index:
            transfer[c.index] = r.matrix()
    return ClusterBasis(tree, ranks, leaf, transfer)


def save_h2matrix(matrix: H2Matrix, path) -> None:
    """Serialize an H^2-matrix (little-endian, format described in the README)."""
    w = _Writer()
    tree = matrix.block_tree
    same = tree.row_tree is tree.col_tree
    w.i64(1 if same else 0)
    _write_cluster_tree(w, tree.row_tree)
    if not same:
        _write_cluster_tree(w, tree.col_tree)
    w.f64(np.array([tree.eta]))
    w.i64(len(tree.blocks))
    for b in tree.blocks:
        w.i64(b.row.index, b.col.index, _KIND_CODES[b.kind], len(b.children),
              *(k.index for k in b.children))
    _write_basis(w, matrix.row_basis)
    _write_basis(w, matrix.col_basis)
    for store in (matrix.coupling, matrix.nearfield):
        w.i64(len(store))
        for index in sorted(store):
            w.i64(index)
            w.matrix(store[index])
    with open(path, "wb") as handle:
        handle.write(b"".join(w.chunks))


def load_h2matrix(path) -> H2Matrix:
    """Inverse of :func:`save_h2matrix`; float data round-trips bit exactly."""
    with open(path, "rb") as handle:
        r = _Reader(handle.read())
    same = bool(int(r.i64(1)[0]))
    row_tree = _read_cluster_tree(r)
    col_tree = row_tree if same else _read_cluster_tree(r)
    eta = float(r.f64(1)[0])
    nblocks = int(r.i64(1)[0])
    blocks: list[Block] = []
    block_children: list[list[int]] = []
    for index in range(nblocks):
        row_idx, col_idx, kind, nchildren = (int(v) for v in r.i64(4))
        kids = [int(v) for v in r.i64(nchildren)]
        blocks.append(
            Block(index, row_tree.clusters[row_idx], col_tree.clusters[col_idx], _KIND_NAMES[kind])
        )
        block_children.append(kids)
    for block, kids in zip(blocks, block_children):
        block.children = tuple(blocks[k] for k in kids)
    block_tree = BlockTree(blocks[0], blocks, row_tree, col_tree, eta)
    row_basis = _read_basis(r, row_tree)
    col_basis = _read_basis(r, col_tree)
    stores = []
    for _ in range(2):
        count = int(r.i64(1)[0])
        store: dict[int, np.ndarray] = {}
        for _ in range(count):
            index = int(r.i64(1)[0])
            store[index] = r.matrix()
        stores.append(store)
    return H2Matrix(block_tree, row_basis, col_basis, stores[0], stores[1])
