"""Exact products of two H^2-matrices.

The product X @ Y is driven top-down over pairs (t, r) of row/column
clusters.  Work that cannot be finished at a pair is carried in an
accumulator with four parts: a basis tree alpha over t collecting terms
A @ W_{Y,r}^T, a basis tree beta over r collecting terms V_{X,t} @ B^T,
a dense nearfield matrix, and a list of pending block pairs still to be
multiplied.  Splitting an accumulator restricts all four parts to child
pairs at cost independent of cluster sizes.

A basis tree over cluster t represents a tall matrix
yield(node) = (V_t C + N) M on leaf clusters, V_t C M on unexpanded
non-leaf clusters (stubs), and the stacked children form
[V_{t_i} E_{t_i} C + yield(child_i)]_i M on branches.  Nodes are
immutable; every operation returns fresh nodes and shares untouched
subtrees, so sibling accumulators can hold overlapping structure.

Sentinels keep the algebra cheap and exact: a coefficient C or
nearfield N of None means a zero matrix, a factor M of None means the
identity, and None in place of a whole tree (or branch child) means the
zero tree of whatever width the context implies.
"""

from __future__ import annotations

import numpy as np

from .geometry import Block, BlockTree, Cluster
from .h2core import (
    ClusterBasis,
    H2Matrix,
    basis_products,
    block_apply,
    block_apply_adjoint,
)


class LeafNode:
    """Basis tree node on a leaf cluster: yield = (V_t C + N) M."""

    __slots__ = ("cluster", "basis", "C", "N", "M")

    def __init__(self, cluster, basis, C, N, M):
        self.cluster = cluster
        self.basis = basis
        self.C = C
        self.N = N
        self.M = M


class StubNode:
    """Unexpanded node on a non-leaf cluster: yield = V_t C M."""

    __slots__ = ("cluster", "basis", "C", "M")

    def __init__(self, cluster, basis, C, M):
        self.cluster = cluster
        self.basis = basis
        self.C = C
        self.M = M


class BranchNode:
    """Expanded node: yield stacks V_{t_i} E_{t_i} C + yield(child_i), then M."""

    __slots__ = ("cluster", "basis", "C", "M", "children")

    def __init__(self, cluster, basis, C, M, children):
        self.cluster = cluster
        self.basis = basis
        self.C = C
        self.M = M
        self.children = children


def _cm(C, M):
    """C @ M with zero/identity sentinels."""
    if C is None:
        return None
    if M is None:
        return C
    return C @ M


def _add_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _width(node):
    """Output width of a node's yield, or None if the node is all zero."""
    if node is None:
        return None
    if node.M is not None:
        return node.M.shape[1]
    if node.C is not None:
        return node.C.shape[1]
    if isinstance(node, LeafNode):
        return None if node.N is None else node.N.shape[1]
    if isinstance(node, BranchNode):
        for child in node.children:
            w = _width(child)
            if w is not None:
                return w
    return None


def yield_of(node, width: int | None = None) -> np.ndarray:
    """Materialize the represented matrix; test oracle and finalization path."""
    if node is None:
        raise ValueError("cannot materialize the anonymous zero tree without a node")
    w = _width(node)
    if w is None:
        w = width
    if w is None:
        raise ValueError("width of an all-zero basis tree is undefined")
    return _yield(node, w)


def _yield(node, width: int) -> np.ndarray:
    inner = width if node.M is None else node.M.shape[0]
    cluster, basis = node.cluster, node.basis
    if isinstance(node, LeafNode):
        out = None if node.C is None else basis.leaf_matrix(cluster) @ node.C
        out = _add_opt(out, node.N)
    elif isinstance(node, StubNode):
        out = None if node.C is None else basis.unproject(cluster, node.C)
    else:
        parts = []
        for child_cluster, child in zip(cluster.children, node.children):
            part = None
            if node.C is not None:
                coeff = basis.transfer_matrix(child_cluster) @ node.C
                part = basis.unproject(child_cluster, coeff)
            if child is not None:
                part = _add_opt(part, _yield(child, inner))
            if part is None:
                part = np.zeros((child_cluster.size, inner))
            parts.append(part)
        out = np.vstack(parts)
    if out is None:
        out = np.zeros((cluster.size, inner))
    return out if node.M is None else out @ node.M


def mul(node, factor: np.ndarray):
    """Multiply the yield by ``factor`` from the right; touches only the root.

    ``factor`` may be None for the identity, matching the M sentinel.
    """
    if node is None or factor is None:
        return node
    m = factor if node.M is None else node.M @ factor
    if isinstance(node, LeafNode):
        return LeafNode(node.cluster, node.basis, node.C, node.N, m)
    if isinstance(node, StubNode):
        return StubNode(node.cluster, node.basis, node.C, m)
    return BranchNode(node.cluster, node.basis, node.C, m, node.children)


def finish(node):
    """Push the root factor M into coefficients and children, leaving M = I."""
    if node is None or node.M is None:
        return node
    m = node.M
    if isinstance(node, LeafNode):
        return LeafNode(node.cluster, node.basis, _cm(node.C, m), _cm(node.N, m), None)
    if isinstance(node, StubNode):
        return StubNode(node.cluster, node.basis, _cm(node.C, m), None)
    children = tuple(mul(child, m) for child in node.children)
    return BranchNode(node.cluster, node.basis, _cm(node.C, m), None, children)


def split_node(node):
    """Expand a stub into a branch whose children absorb E_{t_i} C M."""
    if isinstance(node, LeafNode):
        raise ValueError("cannot split a basis tree node on a leaf cluster")
    if isinstance(node, BranchNode):
        raise ValueError("node is already a branch")
    cluster, basis = node.cluster, node.basis
    children = []
    for child_cluster in cluster.children:
        coeff = _cm(basis.transfer_matrix(child_cluster) @ node.C, node.M) \
            if node.C is not None else None
        if coeff is None:
            children.append(None)
        elif child_cluster.is_leaf:
            children.append(LeafNode(child_cluster, basis, coeff, None, None))
        else:
            children.append(StubNode(child_cluster, basis, coeff, None))
    return BranchNode(cluster, basis, None, None, tuple(children))


def _is_zero(node) -> bool:
    if node is None:
        return True
    if isinstance(node, LeafNode):
        return node.C is None and node.N is None
    if isinstance(node, StubNode):
        return node.C is None
    return False


def add(a, b):
    """Sum of two basis trees over the same cluster and family."""
    if a is None or _is_zero(a):
        return b
    if b is None or _is_zero(b):
        return a
    if a.cluster is not b.cluster or a.basis is not b.basis:
        raise ValueError("can only add basis trees over the same cluster and basis")
    cluster, basis = a.cluster, a.basis
    if isinstance(a, LeafNode) and isinstance(b, LeafNode):
        return LeafNode(
            cluster,
            basis,
            _add_opt(_cm(a.C, a.M), _cm(b.C, b.M)),
            _add_opt(_cm(a.N, a.M), _cm(b.N, b.M)),
            None,
        )
    if isinstance(a, StubNode) and isinstance(b, StubNode):
        return StubNode(cluster, basis, _add_opt(_cm(a.C, a.M), _cm(b.C, b.M)), None)
    if isinstance(a, StubNode):
        return add(split_node(a), b)
    if isinstance(b, StubNode):
        return add(a, split_node(b))
    children = tuple(
        add(mul(ca, a.M), mul(cb, b.M)) for ca, cb in zip(a.children, b.children)
    )
    return BranchNode(
        cluster, basis, _add_opt(_cm(a.C, a.M), _cm(b.C, b.M)), None, children
    )


def restrict_rows(node, child_cluster: Cluster):
    """Restrict the yield to the rows of one child cluster."""
    if node is None:
        return None
    if isinstance(node, LeafNode):
        raise ValueError("cannot restrict a basis tree node on a leaf cluster")
    if child_cluster not in node.cluster.children:
        raise ValueError("restriction target is not a child of the node's cluster")
    basis = node.basis
    if isinstance(node, StubNode):
        coeff = _cm(basis.transfer_matrix(child_cluster) @ node.C, node.M) \
            if node.C is not None else None
        if child_cluster.is_leaf:
            return LeafNode(child_cluster, basis, coeff, None, None)
        return StubNode(child_cluster, basis, coeff, None)
    slot = node.cluster.children.index(child_cluster)
    base = mul(node.children[slot], node.M)
    if node.C is None:
        return base
    coeff = _cm(basis.transfer_matrix(child_cluster) @ node.C, node.M)
    base = finish(base)
    if base is None:
        if child_cluster.is_leaf:
            return LeafNode(child_cluster, basis, coeff, None, None)
        return StubNode(child_cluster, basis, coeff, None)
    if isinstance(base, LeafNode):
        return LeafNode(child_cluster, basis, _add_opt(base.C, coeff), base.N, None)
    if isinstance(base, StubNode):
        return StubNode(child_cluster, basis, _add_opt(base.C, coeff), None)
    return BranchNode(child_cluster, basis, _add_opt(base.C, coeff), None, base.children)


class H2View:
    """An H^2-matrix or its adjoint, presented with uniform accessors."""

    __slots__ = ("matrix", "transposed")

    def __init__(self, matrix: H2Matrix, transposed: bool):
        self.matrix = matrix
        self.transposed = transposed

    @property
    def row_basis(self) -> ClusterBasis:
        return self.matrix.col_basis if self.transposed else self.matrix.row_basis

    @property
    def col_basis(self) -> ClusterBasis:
        return self.matrix.row_basis if self.transposed else self.matrix.col_basis

    def row_cluster(self, block: Block) -> Cluster:
        return block.col if self.transposed else block.row

    def col_cluster(self, block: Block) -> Cluster:
        return block.row if self.transposed else block.col

    def coupling(self, block: Block) -> np.ndarray:
        s = self.matrix.coupling[block.index]
        return s.T if self.transposed else s

    def nearfield(self, block: Block) -> np.ndarray:
        n = self.matrix.nearfield[block.index]
        return n.T if self.transposed else n


class ProductContext:
    """One side of a product: a matrix view, the multiplied basis, their grams.

    ``pmap`` holds, per middle cluster s, the product of the view's
    column basis against ``mul_basis`` so uniform contributions can be
    condensed without touching cluster-sized objects.
    """

    __slots__ = ("view", "mul_basis", "pmap")

    def __init__(self, view: H2View, mul_basis: ClusterBasis, pmap):
        self.view = view
        self.mul_basis = mul_basis
        self.pmap = pmap

    def addproduct(self, block: Block, coupling: np.ndarray, alpha):
        """alpha += (view block) @ V_mul|_s @ coupling, descending the block."""
        view = self.view
        t = view.row_cluster(block)
        basis = view.row_basis
        if block.is_admissible_leaf:
            coeff = view.coupling(block) @ (self.pmap[view.col_cluster(block).index] @ coupling)
            if t.is_leaf:
                contribution = LeafNode(t, basis, coeff, None, None)
            else:
                contribution = StubNode(t, basis, coeff, None)
            return add(alpha, contribution)
        if block.is_dense_leaf:
            s = view.col_cluster(block)
            dense = view.nearfield(block) @ (self.mul_basis.leaf_matrix(s) @ coupling)
            return add(alpha, LeafNode(t, basis, None, dense, None))
        s = view.col_cluster(block)
        if t.is_leaf:
            for child in block.children:
                sc = self.col_cluster_transfer(child, s, coupling)
                alpha = self.addproduct(child, sc, alpha)
            return alpha
        if alpha is None:
            alpha = BranchNode(t, basis, None, None, (None,) * len(t.children))
        elif isinstance(alpha, StubNode):
            alpha = split_node(alpha)
        elif alpha.M is not None:
            alpha = finish(alpha)
        children = list(alpha.children)
        for child in block.children:
            tc = view.row_cluster(child)
            sc = self.col_cluster_transfer(child, s, coupling)
            slot = t.children.index(tc)
            children[slot] = self.addproduct(child, sc, children[slot])
        return BranchNode(t, basis, alpha.C, None, tuple(children))

    def col_cluster_transfer(self, child: Block, s: Cluster, coupling: np.ndarray):
        """Carry the coupling through the multiplied basis when s is refined."""
        sc = self.view.col_cluster(child)
        if sc is s:
            return coupling
        return self.mul_basis.transfer_matrix(sc) @ coupling


class Accumulator:
    """Work in flight for one cluster pair (t, r) of the product."""

    __slots__ = ("row", "col", "alpha", "beta", "nearfield", "pending")

    def __init__(self, row: Cluster, col: Cluster):
        self.row = row
        self.col = col
        self.alpha = None
        self.beta = None
        self.nearfield = None
        self.pending: list[tuple[Block, Block]] = []


class InducedNode:
    """Node of the block structure induced on (t, r) pairs by the product."""

    __slots__ = ("row", "col", "children", "admissible", "payload")

    def __init__(self, row, col, children, admissible, payload=None):
        self.row = row
        self.col = col
        self.children = children
        self.admissible = admissible
        self.payload = payload

    @property
    def is_leaf(self) -> bool:
        return not self.children


class InducedBlockTree:
    """Container for the induced pair structure."""

    __slots__ = ("root",)

    def __init__(self, root: InducedNode):
        self.root = root

    def leaves(self):
        out = []

        def walk(node):
            if node.is_leaf:
                out.append(node)
            for child in node.children:
                walk(child)

        walk(self.root)
        return out

    def nodes(self):
        out = []

        def walk(node):
            out.append(node)
            for child in node.children:
                walk(child)

        walk(self.root)
        return out


class ProductNode:
    """Node of the product tree over cluster triples (t, s, r)."""

    __slots__ = ("row", "mid", "col", "children", "admissible")

    def __init__(self, row, mid, col, children, admissible):
        self.row = row
        self.mid = mid
        self.col = col
        self.children = children
        self.admissible = admissible

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ProductTree:
    __slots__ = ("root",)

    def __init__(self, root: ProductNode):
        self.root = root

    def nodes(self):
        out = []

        def walk(node):
            out.append(node)
            for child in node.children:
                walk(child)

        walk(self.root)
        return out


def build_product_tree(left: BlockTree, right: BlockTree):
    """Materialize the product tree and the induced pair tree.

    Intended for structural tests and geometry checks at moderate sizes;
    the product driver never builds these explicitly.
    """
    if left.col_tree is not right.row_tree:
        raise ValueError("product requires the left column tree to be the right row tree")

    def build(bx: Block, by: Block) -> ProductNode:
        admissible = bx.is_admissible_leaf or by.is_admissible_leaf
        if bx.is_leaf or by.is_leaf:
            children = ()
        else:
            children = tuple(
                build(cx, cy)
                for cx in bx.children
                for cy in by.children
                if cx.col is cy.row
            )
        return ProductNode(bx.row, bx.col, by.col, children, admissible)

    product_root = build(left.root, right.root)

    def induce(row, col, covering) -> InducedNode:
        groups: dict = {}
        for node in covering:
            for child in node.children:
                groups.setdefault((child.row, child.col), []).append(child)
        children = tuple(
            induce(pair[0], pair[1], nodes) for pair, nodes in groups.items()
        )
        admissible = all(node.admissible for node in covering)
        return InducedNode(row, col, children, admissible and not children)

    induced_root = induce(product_root.row, product_root.col, [product_root])
    return ProductTree(product_root), InducedBlockTree(induced_root)


def verify_product_admissibility(left: BlockTree, right: BlockTree, eta: float):
    """Exhaustive geometric check over all subdivided product triples.

    For every triple (t, s, r) that subdivides, pending products only
    survive where eta/(eta+1) * dist(t, r) < max of the three diameters.
    Returns (number of subdivided triples, violations, largest ratio).
    """
    if left.col_tree is not right.row_tree:
        raise ValueError("product requires the left column tree to be the right row tree")
    factor = eta / (eta + 1.0)
    checked = 0
    violations = 0
    worst = 0.0

    def walk(bx: Block, by: Block):
        nonlocal checked, violations, worst
        if bx.is_leaf or by.is_leaf:
            return
        checked += 1
        lhs = factor * bx.row.box.distance(by.col.box)
        rhs = max(bx.row.box.diameter, bx.col.box.diameter, by.col.box.diameter)
        if rhs > 0.0:
            worst = max(worst, lhs / rhs)
        if lhs >= rhs + 1e-12:
            violations += 1
        for cx in bx.children:
            for cy in by.children:
                if cx.col is cy.row:
                    walk(cx, cy)

    walk(left.root, right.root)
    return checked, violations, worst


class ProductDriver:
    """Top-down multiplication of two H^2-matrices sharing the middle tree."""

    def __init__(self, X: H2Matrix, Y: H2Matrix):
        if X.block_tree.col_tree is not Y.block_tree.row_tree:
            raise ValueError("product requires X's column tree to be Y's row tree")
        self.X = X
        self.Y = Y
        gram = basis_products(X.col_basis, Y.row_basis)
        gram_adjoint = [None if p is None else p.T for p in gram.products]
        self.ctx_alpha = ProductContext(H2View(X, False), Y.row_basis, gram.products)
        self.ctx_beta = ProductContext(H2View(Y, True), X.col_basis, gram_adjoint)
        self.max_pending = 0
        self._row_overlap: dict[int, int] = {}
        self.max_row_overlap = 0

    def accumulate(self, acc: Accumulator, bx: Block, by: Block) -> Accumulator:
        """Fold the product of two blocks into the accumulator of their pair."""
        if bx.col is not by.row:
            raise ValueError("blocks do not share a middle cluster")
        if by.is_admissible_leaf:
            acc.alpha = self.ctx_alpha.addproduct(bx, self.Y.coupling[by.index], acc.alpha)
        elif bx.is_admissible_leaf:
            acc.beta = self.ctx_beta.addproduct(by, self.X.coupling[bx.index].T, acc.beta)
        elif bx.is_dense_leaf or by.is_dense_leaf:
            if bx.is_dense_leaf and by.is_dense_leaf:
                part = self.X.nearfield[bx.index] @ self.Y.nearfield[by.index]
            elif bx.is_dense_leaf:
                part = block_apply_adjoint(self.Y, by, self.X.nearfield[bx.index].T).T
            else:
                part = block_apply(self.X, bx, self.Y.nearfield[by.index])
            acc.nearfield = _add_opt(acc.nearfield, part)
        else:
            acc.pending.append((bx, by))
        return acc

    def split_accumulator(self, acc: Accumulator) -> dict:
        """Distribute an accumulator onto the child pairs of (t, r)."""
        t, r = acc.row, acc.col
        row_children = t.children if t.children else (t,)
        col_children = r.children if r.children else (r,)
        children: dict[tuple, Accumulator] = {}
        for tc in row_children:
            for rc in col_children:
                child = Accumulator(tc, rc)
                alpha = acc.alpha
                if rc is not r:
                    alpha = mul(alpha, self.Y.col_basis.transfer_matrix(rc).T)
                if tc is not t:
                    alpha = restrict_rows(alpha, tc)
                child.alpha = alpha
                beta = acc.beta
                if tc is not t:
                    beta = mul(beta, self.X.row_basis.transfer_matrix(tc).T)
                if rc is not r:
                    beta = restrict_rows(beta, rc)
                child.beta = beta
                if acc.nearfield is not None:
                    child.nearfield = acc.nearfield[
                        tc.start - t.start : tc.stop - t.start,
                        rc.start - r.start : rc.stop - r.start,
                    ].copy()
                children[(tc, rc)] = child
        for bx, by in acc.pending:
            for cx in bx.children:
                for cy in by.children:
                    if cx.col is cy.row:
                        self.accumulate(children[(cx.row, cy.col)], cx, cy)
        return children

    def drive(self, leaf_sink) -> InducedNode:
        """Run the whole product, handing finished leaf accumulators to the sink."""
        root = Accumulator(self.X.block_tree.row_tree.root, self.Y.block_tree.col_tree.root)
        self.accumulate(root, self.X.block_tree.root, self.Y.block_tree.root)
        return self._recurse(root, leaf_sink)

    def _recurse(self, acc: Accumulator, leaf_sink) -> InducedNode:
        if not acc.pending:
            node = InducedNode(acc.row, acc.col, (), acc.nearfield is None)
            leaf_sink(node, acc)
            return node
        self.max_pending = max(self.max_pending, len(acc.pending))
        count = self._row_overlap.get(acc.row.index, 0) + 1
        self._row_overlap[acc.row.index] = count
        self.max_row_overlap = max(self.max_row_overlap, count)
        children = self.split_accumulator(acc)
        acc.alpha = acc.beta = acc.nearfield = None
        acc.pending = []
        nodes = tuple(self._recurse(child, leaf_sink) for child in children.values())
        return InducedNode(acc.row, acc.col, nodes, False)

    def semi_uniform_factors(self, acc: Accumulator):
        """Finished factors (A, B) of a semi-uniform leaf: block = A @ B^T."""
        return semi_uniform_factors(self.X, self.Y, acc.row, acc.col, acc.alpha, acc.beta)

    def dense_leaf(self, acc: Accumulator) -> np.ndarray:
        """Materialize the full dense matrix of an inadmissible leaf pair."""
        total = np.zeros((acc.row.size, acc.col.size))
        if acc.nearfield is not None:
            total += acc.nearfield
        if acc.alpha is not None or acc.beta is not None:
            factor_a, factor_b = self.semi_uniform_factors(acc)
            total += factor_a @ factor_b.T
        return total

    def accumulator_dense(self, acc: Accumulator) -> np.ndarray:
        """Dense value of everything the accumulator represents; test oracle."""
        total = np.zeros((acc.row.size, acc.col.size))
        if acc.nearfield is not None:
            total += acc.nearfield
        if acc.alpha is not None:
            total += yield_of(acc.alpha, self.Y.col_basis.rank(acc.col)) @ (
                self.Y.col_basis.expand(acc.col).T
            )
        if acc.beta is not None:
            total += self.X.row_basis.expand(acc.row) @ (
                yield_of(acc.beta, self.X.row_basis.rank(acc.row)).T
            )
        for bx, by in acc.pending:
            left = block_apply(self.X, bx, np.eye(bx.col.size))
            right = block_apply(self.Y, by, np.eye(by.col.size))
            total += left @ right
        return total


def semi_uniform_factors(X, Y, row, col, alpha, beta):
    """Factors (A, B) with A @ B^T = yield(alpha) W_r^T + V_t yield(beta)^T."""
    a_width = Y.col_basis.rank(col)
    b_width = X.row_basis.rank(row)
    alpha = finish(alpha)
    beta = finish(beta)
    a_part = (
        np.zeros((row.size, a_width)) if alpha is None else yield_of(alpha, a_width)
    )
    b_part = (
        np.zeros((col.size, b_width)) if beta is None else yield_of(beta, b_width)
    )
    factor_a = np.hstack([a_part, X.row_basis.expand(row)])
    factor_b = np.hstack([Y.col_basis.expand(col), b_part])
    return factor_a, factor_b


class ProductResult:
    """Exact product over the induced pair tree with materialized leaf payloads.

    Semi-uniform leaves carry ("semi", alpha, beta) with finished basis
    trees; inadmissible leaves carry ("dense", matrix).
    """

    __slots__ = ("X", "Y", "tree", "driver")

    def __init__(self, X, Y, tree, driver):
        self.X = X
        self.Y = Y
        self.tree = tree
        self.driver = driver

    def leaf_factors(self, node: InducedNode):
        """Low-rank factors of a semi-uniform leaf's payload."""
        if node.payload[0] != "semi":
            raise ValueError("dense product leaves have no low-rank factors")
        _, alpha, beta = node.payload
        return semi_uniform_factors(self.X, self.Y, node.row, node.col, alpha, beta)

    def to_dense(self, limit: int = 4096) -> np.ndarray:
        rows = len(self.X.block_tree.row_tree)
        cols = len(self.Y.block_tree.col_tree)
        if max(rows, cols) > limit:
            raise ValueError("product materialization refused above the oracle limit")
        out = np.zeros((rows, cols))
        for node in self.tree.leaves():
            t, r = node.row, node.col
            if node.payload[0] == "semi":
                factor_a, factor_b = self.leaf_factors(node)
                part = factor_a @ factor_b.T
            else:
                part = node.payload[1]
            out[t.start : t.stop, r.start : r.stop] = part
        return out


def exact_product(X: H2Matrix, Y: H2Matrix) -> ProductResult:
    """Multiply two H^2-matrices exactly, materializing every induced leaf.

    The result stores semi-uniform factors and dense nearfield blocks for
    all leaves simultaneously; use the streaming pipeline in
    :mod:`h2mul.compression` when the product should be compressed.
    """
    driver = ProductDriver(X, Y)

    def sink(node: InducedNode, acc: Accumulator) -> None:
        if acc.nearfield is None:
            node.payload = ("semi", finish(acc.alpha), finish(acc.beta))
        else:
            node.payload = ("dense", driver.dense_leaf(acc))

    root = driver.drive(sink)
    return ProductResult(X, Y, InducedBlockTree(root), driver)
