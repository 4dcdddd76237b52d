"""Compression of exact products back to H^2 form with error control.

Two stages.  Coarsening converts the exact product representation into
an intermediate form with one low-rank block per admissible leaf of a
target block structure: the product leaves covered by a target block
are cut along all their row and column boundaries into a grid, and the
grid is agglomerated by truncated merges whose tolerance is divided by
twice the number of grid cells, so each target block carries a relative
error below the requested tolerance no matter how many merges ran.

Recompression then rebuilds nested cluster bases adaptively.  Every
low-rank block is condensed against an orthogonal factor on its far
side, restricted down the cluster tree, and entered into per-cluster
singular value problems scaled by weights that shrink geometrically
with depth below the block's own cluster, which turns one absolute
cutoff into a blockwise-relative bound for the assembled matrix.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Block, BlockTree
from .h2core import ClusterBasis, H2Matrix
from .product import ProductDriver, ProductResult


class TruncationControl:
    """Tolerances and knobs shared by coarsening and recompression.

    target_eps is the blockwise-relative accuracy of the final matrix;
    the recompression cutoff absorbs a factor sqrt(1 - sigma * theta)
    to leave room for the weighted accumulation across levels.
    """

    __slots__ = ("target_eps", "theta", "sigma", "power_steps", "seed", "recompress_eps")

    def __init__(self, target_eps, theta=0.25, sigma=2.0, power_steps=10, seed=0):
        if not target_eps > 0.0:
            raise ValueError("target_eps must be positive")
        if not 0.0 < theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if not sigma * theta < 1.0:
            raise ValueError("sigma * theta must stay below one")
        self.target_eps = float(target_eps)
        self.theta = float(theta)
        self.sigma = float(sigma)
        self.power_steps = int(power_steps)
        self.seed = int(seed)
        self.recompress_eps = self.target_eps * math.sqrt(1.0 - sigma * theta)

    def coarsen_eps(self, rows: int, cols: int) -> float:
        """Per-merge tolerance for a grid of rows x cols agglomerated cells."""
        return self.target_eps / (2.0 * rows * cols)


class LowRankBlock:
    """Factored block a @ b.T with a of shape (m, k) and b of shape (n, k)."""

    __slots__ = ("a", "b")

    def __init__(self, a: np.ndarray, b: np.ndarray):
        if a.shape[1] != b.shape[1]:
            raise ValueError("factor widths differ")
        self.a = a
        self.b = b

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    def to_dense(self) -> np.ndarray:
        return self.a @ self.b.T


def lowrank_truncate(a: np.ndarray, b: np.ndarray, eps: float):
    """Recompress a @ b.T, dropping singular values below eps relative.

    Keeps the smallest rank whose first discarded singular value is at
    most eps times the largest one.
    """
    qa, ra = np.linalg.qr(a)
    qb, rb = np.linalg.qr(b)
    u, s, vt = np.linalg.svd(ra @ rb.T, full_matrices=False)
    rank = int(np.count_nonzero(s > eps * s[0])) if s.size else 0
    left = qa @ (u[:, :rank] * s[:rank])
    right = qb @ vt[:rank].T
    return left, right


def _block_diag(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros((x.shape[0] + y.shape[0], x.shape[1] + y.shape[1]))
    out[: x.shape[0], : x.shape[1]] = x
    out[x.shape[0] :, x.shape[1] :] = y
    return out


def agglomerate(grid, eps: float):
    """Merge a grid of factored cells into one factored block.

    grid[i][j] holds (a, b) factors of the cell on row strip i and
    column strip j.  Cells are merged across each row, then the merged
    rows are stacked, with one truncation at tolerance eps per merge;
    a single cell passes through untouched.
    """
    merged_rows = []
    for row in grid:
        a, b = row[0]
        for a2, b2 in row[1:]:
            a, b = lowrank_truncate(np.hstack([a, a2]), _block_diag(b, b2), eps)
        merged_rows.append((a, b))
    a, b = merged_rows[0]
    for a2, b2 in merged_rows[1:]:
        a, b = lowrank_truncate(_block_diag(a, a2), np.hstack([b, b2]), eps)
    return a, b


class BlockLowRank:
    """Intermediate matrix over a block tree without nested bases.

    Admissible leaves hold LowRankBlock factors, inadmissible leaves
    hold dense matrices; there is no coupling between blocks.
    """

    __slots__ = ("block_tree", "lowrank", "dense")

    def __init__(self, block_tree: BlockTree, lowrank: dict, dense: dict):
        self.block_tree = block_tree
        self.lowrank = lowrank
        self.dense = dense

    def max_rank(self) -> int:
        return max((blk.rank for blk in self.lowrank.values()), default=0)

    def to_dense(self, limit: int = 4096) -> np.ndarray:
        rows = len(self.block_tree.row_tree)
        cols = len(self.block_tree.col_tree)
        if max(rows, cols) > limit:
            raise ValueError("materialization refused above the oracle limit")
        out = np.zeros((rows, cols))
        for block in self.block_tree.leaves():
            t, r = block.row, block.col
            if block.is_admissible_leaf:
                out[t.start : t.stop, r.start : r.stop] = self.lowrank[block.index].to_dense()
            else:
                out[t.start : t.stop, r.start : r.stop] = self.dense[block.index]
        return out


def _contains(block: Block, row, col) -> bool:
    return (
        block.row.start <= row.start
        and row.stop <= block.row.stop
        and block.col.start <= col.start
        and col.stop <= block.col.stop
    )


class _GroupCollector:
    """Consumes product leaves in depth-first order, grouped per target leaf.

    Relies on the product traversal visiting everything below one target
    leaf contiguously, which holds because both structures refine pairs
    level by level; a leaf that fits no single target leaf means the
    target is not a coarsening of the product structure and is refused.
    """

    def __init__(self, target: BlockTree, control: TruncationControl):
        self.target = target
        self.control = control
        self.lowrank: dict = {}
        self.dense: dict = {}
        self.current: Block | None = None
        self.items: list = []
        self.filled = 0

    def _locate(self, row, col) -> Block:
        node = self.current
        if node is not None and _contains(node, row, col):
            return node
        node = self.target.root
        while not node.is_leaf:
            for child in node.children:
                if _contains(child, row, col):
                    node = child
                    break
            else:
                raise ValueError(
                    "product leaf straddles target blocks; the target "
                    "structure is not a coarsening of the product"
                )
        if not _contains(node, row, col):
            raise ValueError(
                "product leaf straddles target blocks; the target "
                "structure is not a coarsening of the product"
            )
        return node

    def _feed(self, row, col, item) -> None:
        block = self._locate(row, col)
        if block is not self.current:
            self._flush()
            self.current = block
        self.items.append(item)

    def feed_lowrank(self, row, col, a, b) -> None:
        self._feed(row, col, ("lr", row, col, a, b))

    def feed_dense(self, row, col, dense) -> None:
        self._feed(row, col, ("dense", row, col, dense))

    def _flush(self) -> None:
        if self.current is None:
            return
        block, items = self.current, self.items
        if block.is_admissible_leaf:
            self.lowrank[block.index] = self._agglomerate_block(block, items)
        else:
            self.dense[block.index] = self._assemble_dense(block, items)
        self.filled += 1
        self.items = []

    def _agglomerate_block(self, block: Block, items) -> LowRankBlock:
        if len(items) == 1:
            kind, _, _, *payload = items[0]
            if kind == "lr":
                return LowRankBlock(payload[0], payload[1])
            return LowRankBlock(*_identity_split(payload[0]))
        row_cuts = sorted({c for item in items for c in (item[1].start, item[1].stop)})
        col_cuts = sorted({c for item in items for c in (item[2].start, item[2].stop)})
        row_strips = list(zip(row_cuts[:-1], row_cuts[1:]))
        col_strips = list(zip(col_cuts[:-1], col_cuts[1:]))
        row_index = {lo: i for i, (lo, _) in enumerate(row_strips)}
        col_index = {lo: j for j, (lo, _) in enumerate(col_strips)}
        grid = [[None] * len(col_strips) for _ in row_strips]
        for kind, row, col, *payload in items:
            i = row_index[row.start]
            while i < len(row_strips) and row_strips[i][0] < row.stop:
                rlo, rhi = row_strips[i][0] - row.start, row_strips[i][1] - row.start
                j = col_index[col.start]
                while j < len(col_strips) and col_strips[j][0] < col.stop:
                    clo, chi = col_strips[j][0] - col.start, col_strips[j][1] - col.start
                    if kind == "lr":
                        cell = (payload[0][rlo:rhi], payload[1][clo:chi])
                    else:
                        cell = _identity_split(payload[0][rlo:rhi, clo:chi])
                    grid[i][j] = cell
                    j += 1
                i += 1
        if any(cell is None for grow in grid for cell in grow):
            raise ValueError("product leaves do not tile the target block")
        eps = self.control.coarsen_eps(len(row_strips), len(col_strips))
        a, b = agglomerate(grid, eps)
        return LowRankBlock(a, b)

    def _assemble_dense(self, block: Block, items) -> np.ndarray:
        out = np.zeros((block.row.size, block.col.size))
        for kind, row, col, *payload in items:
            rlo = row.start - block.row.start
            clo = col.start - block.col.start
            if kind == "lr":
                out[rlo : rlo + row.size, clo : clo + col.size] = payload[0] @ payload[1].T
            else:
                out[rlo : rlo + row.size, clo : clo + col.size] = payload[0]
        return out

    def finish(self) -> BlockLowRank:
        self._flush()
        self.current = None
        expected = len(self.target.leaves())
        if self.filled != expected:
            raise ValueError("product leaves did not reach every target block")
        return BlockLowRank(self.target, self.lowrank, self.dense)


def _identity_split(dense: np.ndarray):
    """Exact factorization of a dense block, identity on the short side."""
    rows, cols = dense.shape
    if rows <= cols:
        return np.eye(rows), dense.T
    return dense, np.eye(cols)


class ProductStats:
    """Counters observed while driving one product."""

    __slots__ = ("max_pending", "max_row_overlap", "semi_leaves", "dense_leaves")

    def __init__(self, max_pending, max_row_overlap, semi_leaves, dense_leaves):
        self.max_pending = max_pending
        self.max_row_overlap = max_row_overlap
        self.semi_leaves = semi_leaves
        self.dense_leaves = dense_leaves


def coarsen_product(X: H2Matrix, Y: H2Matrix, target: BlockTree, control: TruncationControl):
    """Multiply X @ Y and coarsen onto the target structure in one sweep.

    Product leaves are converted and folded into their target block as
    soon as the traversal finishes them, so only the intermediate block
    low-rank matrix is ever held in full.  Returns (matrix, stats).
    """
    driver = ProductDriver(X, Y)
    collector = _GroupCollector(target, control)
    counts = [0, 0]

    def sink(node, acc):
        if acc.nearfield is None:
            a, b = driver.semi_uniform_factors(acc)
            collector.feed_lowrank(node.row, node.col, a, b)
            counts[0] += 1
        else:
            collector.feed_dense(node.row, node.col, driver.dense_leaf(acc))
            counts[1] += 1

    driver.drive(sink)
    blr = collector.finish()
    stats = ProductStats(driver.max_pending, driver.max_row_overlap, counts[0], counts[1])
    return blr, stats


def coarsen(result: ProductResult, target: BlockTree, control: TruncationControl) -> BlockLowRank:
    """Coarsen a materialized exact product onto the target structure."""
    collector = _GroupCollector(target, control)
    for node in result.tree.leaves():
        if node.payload[0] == "semi":
            a, b = result.leaf_factors(node)
            collector.feed_lowrank(node.row, node.col, a, b)
        else:
            collector.feed_dense(node.row, node.col, node.payload[1])
    return collector.finish()


def spectral_norm_lower_bound(apply, apply_adjoint, dim: int, iterations: int = 10, seed: int = 0) -> float:
    """Power iteration estimate of a spectral norm, never above the truth.

    Runs the iteration on the normal equations from a seeded random
    start and returns the norm of the image of the final unit vector.
    """
    if dim == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim)
    scale = np.linalg.norm(x)
    if scale == 0.0:
        return 0.0
    x /= scale
    for _ in range(iterations):
        z = apply_adjoint(apply(x))
        scale = np.linalg.norm(z)
        if scale == 0.0:
            return 0.0
        x = z / scale
    return float(np.linalg.norm(apply(x)))


def block_norms(blr: BlockLowRank, control: TruncationControl) -> dict:
    """Spectral norm estimate per low-rank block, keyed by block index."""
    norms = {}
    for index, blk in blr.lowrank.items():
        a, b = blk.a, blk.b
        norms[index] = spectral_norm_lower_bound(
            lambda v, a=a, b=b: a @ (b.T @ v),
            lambda v, a=a, b=b: b @ (a.T @ v),
            b.shape[0],
            iterations=control.power_steps,
            seed=control.seed + index,
        )
    return norms


class _BasisEntry:
    """One condensed block restricted to the cluster under construction."""

    __slots__ = ("key", "matrix", "norm", "owner_level")

    def __init__(self, key, matrix, norm, owner_level):
        self.key = key
        self.matrix = matrix
        self.norm = norm
        self.owner_level = owner_level


class RecompressionState:
    """Per-cluster records of the truncation problems actually solved.

    For every cluster: the block keys, the unscaled matrices in the
    local coordinates (rows of the cluster on leaves, stacked child
    coefficients elsewhere), their weights, and the orthogonal basis
    chosen there.  Only intended for verification at small sizes.
    """

    __slots__ = ("records",)

    def __init__(self):
        self.records: dict = {}

    def record(self, cluster_index, keys, matrices, weights, basis):
        self.records[cluster_index] = (keys, matrices, weights, basis)


def _adaptive_basis(tree, entries_by_cluster, control: TruncationControl, state=None):
    """Build one nested basis from condensed blocks hung on clusters.

    entries_by_cluster maps cluster index to _BasisEntry items whose
    matrices span the block rows at that cluster.  Each cluster solves a
    singular value problem over every block alive there, scaled by
    weight norm * sqrt(theta)^(depth below owner), truncated at the
    absolute recompression tolerance.
    """
    eps = control.recompress_eps
    sqrt_theta = math.sqrt(control.theta)
    ranks = [0] * len(tree.clusters)
    leaf: dict = {}
    transfer: dict = {}

    def visit(cluster, inherited):
        active = inherited + entries_by_cluster.get(cluster.index, [])
        weights = [
            entry.norm * sqrt_theta ** (cluster.level - entry.owner_level)
            for entry in active
        ]
        if cluster.is_leaf:
            locals_ = [entry.matrix for entry in active]
        else:
            stacked_children = []
            for child in cluster.children:
                restricted = [
                    _BasisEntry(
                        entry.key,
                        entry.matrix[
                            child.start - cluster.start : child.stop - cluster.start
                        ],
                        entry.norm,
                        entry.owner_level,
                    )
                    for entry in active
                ]
                stacked_children.append(visit(child, restricted))
            locals_ = [
                np.vstack([projs[i] for projs in stacked_children])
                for i in range(len(active))
            ]
        scaled = [
            mat * (1.0 / w) for mat, w in zip(locals_, weights) if w > 0.0
        ]
        if scaled:
            u, s, _ = np.linalg.svd(np.hstack(scaled), full_matrices=False)
            rank = int(np.count_nonzero(s > eps))
            basis = u[:, :rank]
        else:
            height = cluster.size if cluster.is_leaf else sum(
                ranks[child.index] for child in cluster.children
            )
            basis = np.zeros((height, 0))
        ranks[cluster.index] = basis.shape[1]
        if cluster.is_leaf:
            leaf[cluster.index] = basis
        else:
            offset = 0
            for child in cluster.children:
                width = ranks[child.index]
                transfer[child.index] = basis[offset : offset + width]
                offset += width
        if state is not None:
            state.record(
                cluster.index,
                tuple(entry.key for entry in active),
                locals_,
                weights,
                basis,
            )
        return [basis.T @ mat for mat in locals_]

    visit(tree.root, [])
    return ClusterBasis(tree, ranks, leaf, transfer)


def _condensed_entries(blr: BlockLowRank, norms: dict, row_side: bool) -> dict:
    """Group condensed blocks by the cluster whose basis they constrain.

    On the row side each block contributes a @ qr(b).R.T, which spans
    the same columns as the block itself because the discarded factor is
    orthogonal; the column side mirrors this with the factors swapped.
    """
    entries: dict = {}
    for index, blk in blr.lowrank.items():
        block = blr.block_tree.blocks[index]
        if row_side:
            cluster = block.row
            _, r = np.linalg.qr(blk.b)
            condensed = blk.a @ r.T
        else:
            cluster = block.col
            _, r = np.linalg.qr(blk.a)
            condensed = blk.b @ r.T
        entry = _BasisEntry(index, condensed, norms[index], cluster.level)
        entries.setdefault(cluster.index, []).append(entry)
    return entries


def adaptive_row_basis(blr: BlockLowRank, control: TruncationControl, norms=None, state=None):
    """Row cluster basis capturing every low-rank block's column space."""
    if norms is None:
        norms = block_norms(blr, control)
    entries = _condensed_entries(blr, norms, row_side=True)
    return _adaptive_basis(blr.block_tree.row_tree, entries, control, state)


def adaptive_col_basis(blr: BlockLowRank, control: TruncationControl, norms=None, state=None):
    """Column cluster basis capturing every low-rank block's row space."""
    if norms is None:
        norms = block_norms(blr, control)
    entries = _condensed_entries(blr, norms, row_side=False)
    return _adaptive_basis(blr.block_tree.col_tree, entries, control, state)


def assemble_recompressed(blr: BlockLowRank, row_basis: ClusterBasis, col_basis: ClusterBasis) -> H2Matrix:
    """Project the block factors onto the new bases and pack the result."""
    coupling = {}
    for index, blk in blr.lowrank.items():
        block = blr.block_tree.blocks[index]
        coupling[index] = row_basis.project(block.row, blk.a) @ (
            col_basis.project(block.col, blk.b).T
        )
    nearfield = dict(blr.dense)
    return H2Matrix(blr.block_tree, row_basis, col_basis, coupling, nearfield)


def recompress(blr: BlockLowRank, control: TruncationControl) -> H2Matrix:
    """Rebuild an H^2-matrix from block low-rank form with adaptive bases."""
    norms = block_norms(blr, control)
    row_basis = adaptive_row_basis(blr, control, norms)
    col_basis = adaptive_col_basis(blr, control, norms)
    return assemble_recompressed(blr, row_basis, col_basis)


def recompress_with_state(blr: BlockLowRank, control: TruncationControl):
    """recompress plus the truncation records of both basis builds."""
    norms = block_norms(blr, control)
    row_state = RecompressionState()
    col_state = RecompressionState()
    row_basis = adaptive_row_basis(blr, control, norms, row_state)
    col_basis = adaptive_col_basis(blr, control, norms, col_state)
    matrix = assemble_recompressed(blr, row_basis, col_basis)
    return matrix, row_state, col_state


def multiply(X: H2Matrix, Y: H2Matrix, target: BlockTree, control: TruncationControl) -> H2Matrix:
    """X @ Y as an H^2-matrix over the target structure.

    Streams the exact product into coarsened block low-rank form, then
    recompresses onto adaptive nested bases; the blockwise-relative
    error of the result stays near control.target_eps.
    """
    blr, _ = coarsen_product(X, Y, target, control)
    return recompress(blr, control)
