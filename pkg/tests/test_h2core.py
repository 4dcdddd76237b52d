"""Cluster bases, H^2 matvec, basis product maps, serialization."""

import numpy as np
import pytest

from h2mul import (
    ADMISSIBLE,
    Block,
    BlockTree,
    BoundingBox,
    Cluster,
    ClusterBasis,
    ClusterTree,
    H2Matrix,
    basis_products,
    expand_basis,
    h2_matvec,
    h2_matvec_adjoint,
    load_h2matrix,
    save_h2matrix,
    to_dense,
)
from conftest import random_basis, synthetic_cluster_tree


def single_cluster_tree(n):
    root = Cluster(0, 0, n, 0, BoundingBox((0.0, 0.0, 0.0), (float(n), 1.0, 1.0)))
    return ClusterTree(root, [root], np.arange(n, dtype=np.int64), n)


def identity_coupling_matrix(n=4):
    """One admissible root block with V = W = I and S = I."""
    tree = single_cluster_tree(n)
    basis = ClusterBasis(tree, [n], {0: np.eye(n)}, {})
    block = Block(0, tree.root, tree.root, ADMISSIBLE)
    structure = BlockTree(block, [block], tree, tree, eta=1.0)
    return H2Matrix(structure, basis, basis, {0: np.eye(n)}, {})


class TestExpandBasis:
    def test_leaf_returns_stored_matrix(self):
        tree = single_cluster_tree(5)
        leaf = np.arange(15.0).reshape(5, 3)
        basis = ClusterBasis(tree, [3], {0: leaf}, {})
        assert np.array_equal(expand_basis(basis, tree.root), leaf)

    def test_identity_transfers_stack_children(self):
        rng = np.random.default_rng(0)
        tree = synthetic_cluster_tree(rng, depth=1, leaf_size=3)
        while tree.root.is_leaf:
            tree = synthetic_cluster_tree(rng, depth=1, leaf_size=3)
        k = 3
        leaf = {c.index: rng.standard_normal((c.size, k)) for c in tree.leaves()}
        transfer = {c.index: np.eye(k) for c in tree.clusters if c.index != 0}
        basis = ClusterBasis(tree, [k] * len(tree.clusters), leaf, transfer)
        expected = np.vstack([leaf[c.index] for c in tree.root.children])
        assert np.allclose(expand_basis(basis, tree.root), expected, atol=1e-15)

    def test_nestedness_of_assembled_basis(self, problem128):
        basis = problem128.matrix.row_basis
        for cluster in basis.tree.clusters:
            if cluster.is_leaf:
                continue
            full = expand_basis(basis, cluster)
            for child in cluster.children:
                rows = slice(child.start - cluster.start, child.stop - cluster.start)
                piece = expand_basis(basis, child) @ basis.transfer_matrix(child)
                assert np.allclose(full[rows], piece, atol=1e-12)

    def test_project_unproject_adjoint(self, problem128):
        # project is the adjoint of unproject: <V c, d> = <c, V^T d>
        rng = np.random.default_rng(5)
        basis = problem128.matrix.row_basis
        cluster = basis.tree.root
        c = rng.standard_normal(basis.rank(cluster))
        d = rng.standard_normal(cluster.size)
        left = expand_basis(basis, cluster) @ c
        assert np.isclose(left @ d, c @ basis.project(cluster, d), rtol=1e-12, atol=0)
        assert np.allclose(basis.unproject(cluster, c), left, atol=1e-13)


class TestMatvec:
    def test_zero_vector(self, problem128):
        out = h2_matvec(problem128.matrix, np.zeros(problem128.n))
        assert np.array_equal(out, np.zeros(problem128.n))

    def test_against_dense_oracle(self, problem128):
        rng = np.random.default_rng(1)
        g = problem128.dense
        h2 = problem128.matrix
        # the H^2 matrix approximates g; compare against its own dense form
        exact = to_dense(h2)
        for _ in range(10):
            x = rng.standard_normal(problem128.n)
            want = exact @ x
            got = h2_matvec(h2, x)
            assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)
        assert np.linalg.norm(exact - g) <= 0.1 * np.linalg.norm(g)

    def test_identity_coupling(self):
        h2 = identity_coupling_matrix(4)
        x = np.array([1.0, -2.0, 3.0, 0.5])
        assert np.allclose(h2.matvec(x), x, atol=1e-15)

    def test_dimension_mismatch(self, problem128):
        with pytest.raises(ValueError):
            h2_matvec(problem128.matrix, np.zeros(problem128.n + 1))

    def test_linearity(self, problem128):
        rng = np.random.default_rng(2)
        h2 = problem128.matrix
        x, y = rng.standard_normal((2, problem128.n))
        combined = h2_matvec(h2, 2.0 * x - 3.0 * y)
        parts = 2.0 * h2_matvec(h2, x) - 3.0 * h2_matvec(h2, y)
        assert np.linalg.norm(combined - parts) <= 1e-12 * np.linalg.norm(parts)

    def test_matrix_argument(self, problem128):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((problem128.n, 3))
        got = h2_matvec(problem128.matrix, x)
        for j in range(3):
            assert np.allclose(got[:, j], h2_matvec(problem128.matrix, x[:, j]), atol=1e-14)


class TestMatvecAdjoint:
    def test_zero_vector(self, problem128):
        out = h2_matvec_adjoint(problem128.matrix, np.zeros(problem128.n))
        assert not out.any()

    def test_against_dense_transpose(self, problem128):
        rng = np.random.default_rng(4)
        exact = to_dense(problem128.matrix).T
        for _ in range(5):
            x = rng.standard_normal(problem128.n)
            want = exact @ x
            got = h2_matvec_adjoint(problem128.matrix, x)
            assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)

    def test_symmetric_matrix_self_adjoint(self, problem128):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(problem128.n)
        forward = h2_matvec(problem128.matrix, x)
        adjoint = h2_matvec_adjoint(problem128.matrix, x)
        assert np.linalg.norm(forward - adjoint) <= 1e-12 * np.linalg.norm(forward)

    def test_inner_product_consistency(self, problem128):
        rng = np.random.default_rng(6)
        x, y = rng.standard_normal((2, problem128.n))
        left = h2_matvec(problem128.matrix, x) @ y
        right = x @ h2_matvec_adjoint(problem128.matrix, y)
        assert np.isclose(left, right, rtol=1e-12, atol=0)


class TestBasisProducts:
    def test_orthonormal_single_node(self):
        tree = single_cluster_tree(6)
        q, _ = np.linalg.qr(np.random.default_rng(7).standard_normal((6, 3)))
        basis = ClusterBasis(tree, [3], {0: q}, {})
        pmap = basis_products(basis, basis)
        assert np.allclose(pmap[tree.root], np.eye(3), atol=1e-14)

    def test_matches_dense_expansion(self, problem128):
        rng = np.random.default_rng(8)
        tree = problem128.tree
        a = random_basis(tree, rng, max_rank=6)
        b = random_basis(tree, rng, max_rank=5)
        pmap = basis_products(a, b)
        for cluster in tree.clusters:
            want = expand_basis(a, cluster).T @ expand_basis(b, cluster)
            assert np.allclose(pmap[cluster], want, atol=1e-10)

    def test_zero_basis(self):
        tree = single_cluster_tree(4)
        zero = ClusterBasis(tree, [2], {0: np.zeros((4, 2))}, {})
        other = ClusterBasis(tree, [3], {0: np.ones((4, 3))}, {})
        assert not basis_products(zero, other)[tree.root].any()

    def test_tree_mismatch(self):
        a = ClusterBasis(single_cluster_tree(4), [2], {0: np.zeros((4, 2))}, {})
        b = ClusterBasis(single_cluster_tree(4), [2], {0: np.zeros((4, 2))}, {})
        with pytest.raises(ValueError):
            basis_products(a, b)


class TestToDense:
    def test_single_nearfield_leaf(self):
        from h2mul import DENSE

        tree = single_cluster_tree(3)
        block = Block(0, tree.root, tree.root, DENSE)
        structure = BlockTree(block, [block], tree, tree, eta=1.0)
        payload = np.arange(9.0).reshape(3, 3)
        empty = ClusterBasis(tree, [0], {0: np.zeros((3, 0))}, {})
        h2 = H2Matrix(structure, empty, empty, {}, {0: payload})
        assert np.array_equal(to_dense(h2), payload)

    def test_cross_check_with_matvec(self, problem128):
        rng = np.random.default_rng(9)
        dense = to_dense(problem128.matrix)
        x = rng.standard_normal(problem128.n)
        want = dense @ x
        got = h2_matvec(problem128.matrix, x)
        assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)

    def test_limit_guard(self, problem128):
        with pytest.raises(ValueError):
            to_dense(problem128.matrix, limit=64)


class TestValidate:
    def test_assembled_matrix_validates(self, problem128):
        problem128.matrix.validate()

    def test_detects_bad_transfer(self, problem128):
        m = problem128.matrix
        child = m.block_tree.row_tree.root.children[0]
        good = m.row_basis.transfer[child.index]
        m.row_basis.transfer[child.index] = good[:, :-1]
        try:
            with pytest.raises(ValueError):
                m.validate()
        finally:
            m.row_basis.transfer[child.index] = good

    def test_detects_bad_coupling(self, problem256):
        m = problem256.matrix
        block = m.block_tree.admissible_leaves()[0]
        good = m.coupling[block.index]
        m.coupling[block.index] = good[:-1]
        try:
            with pytest.raises(ValueError):
                m.validate()
        finally:
            m.coupling[block.index] = good


class TestSerialization:
    def test_round_trip_bit_exact(self, problem128, tmp_path):
        path = tmp_path / "matrix.h2"
        save_h2matrix(problem128.matrix, path)
        again = load_h2matrix(path)
        again.validate()
        assert again.block_tree.eta == problem128.structure.eta
        assert np.array_equal(to_dense(again), to_dense(problem128.matrix))
        x = np.random.default_rng(10).standard_normal(problem128.n)
        assert np.array_equal(h2_matvec(again, x), h2_matvec(problem128.matrix, x))

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.h2"
        path.write_bytes(b"not a matrix at all")
        with pytest.raises(ValueError):
            load_h2matrix(path)

    def test_rejects_truncated_file(self, problem128, tmp_path):
        path = tmp_path / "matrix.h2"
        save_h2matrix(problem128.matrix, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ValueError):
            load_h2matrix(path)

    def test_storage_reals_counts_entries(self, problem128):
        basis = problem128.matrix.row_basis
        total = sum(m.size for m in basis.leaf.values())
        total += sum(m.size for m in basis.transfer.values())
        assert basis.storage_reals() == total
