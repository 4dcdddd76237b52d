"""Shared fixtures and builders for the test suite.

Expensive objects (meshes, assembled matrices, dense oracles) are
session scoped; the synthetic tree/basis builders are plain functions
so property tests can drive them with their own RNGs.
"""

import numpy as np
import pytest

from h2mul import (
    BoundingBox,
    Cluster,
    ClusterBasis,
    ClusterTree,
    InterpolationScheme,
    SingleLayerLaplace,
    TriangleMesh,
    assemble_dense,
    assemble_h2,
    build_block_tree,
    build_cluster_tree,
    build_sphere_mesh,
)

KERNEL = SingleLayerLaplace()


def bisect_mesh(mesh):
    """Split every triangle in two along its first edge.

    The new midpoint is reprojected onto the unit sphere, so refining a
    sphere mesh stays a sphere mesh.  Doubles the triangle count, which
    reaches sizes the quadrupling refinement skips (256, 1024, ...).
    """
    vertices = [tuple(v) for v in np.asarray(mesh.vertices)]
    cache = {}

    def midpoint(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            v = mesh.vertices[i] + mesh.vertices[j]
            v = v / np.linalg.norm(v)
            vertices.append(tuple(v))
            cache[key] = len(vertices) - 1
        return cache[key]

    triangles = []
    for a, b, c in mesh.triangles:
        ab = midpoint(int(a), int(b))
        triangles.append((int(a), ab, int(c)))
        triangles.append((ab, int(b), int(c)))
    return TriangleMesh(np.array(vertices), np.array(triangles))


class Problem:
    """A mesh with its trees, H^2 matrix and (optionally) dense oracle."""

    def __init__(self, mesh, tree, structure, matrix, dense):
        self.mesh = mesh
        self.tree = tree
        self.structure = structure
        self.matrix = matrix
        self.dense = dense

    @property
    def n(self):
        return len(self.mesh)


def make_problem(mesh, order=3, leaf_size=16, eta=1.0, dense=True):
    tree = build_cluster_tree(mesh, leaf_size=leaf_size)
    structure = build_block_tree(tree, tree, eta=eta)
    matrix = assemble_h2(mesh, structure, KERNEL, InterpolationScheme(order))
    oracle = assemble_dense(mesh, KERNEL, tree, tree) if dense else None
    return Problem(mesh, tree, structure, matrix, oracle)


@pytest.fixture(scope="session")
def mesh128():
    return build_sphere_mesh(2)


@pytest.fixture(scope="session")
def mesh256(mesh128):
    return bisect_mesh(mesh128)


@pytest.fixture(scope="session")
def mesh512():
    return build_sphere_mesh(3)


@pytest.fixture(scope="session")
def problem128(mesh128):
    return make_problem(mesh128)


@pytest.fixture(scope="session")
def problem256(mesh256):
    return make_problem(mesh256)


@pytest.fixture(scope="session")
def problem512(mesh512):
    return make_problem(mesh512, order=2)


def synthetic_cluster_tree(rng, depth=3, leaf_size=4):
    """Random binary cluster tree over a line of unit-spaced points.

    Leaf sizes are drawn in [1, leaf_size]; interior splits are random
    but never empty, so any shape up to ``depth`` levels can appear.
    """
    clusters = []

    def build(start, stop, level):
        box = BoundingBox((float(start), 0.0, 0.0), (float(stop), 0.0, 0.0))
        cluster = Cluster(len(clusters), start, stop, level, box)
        clusters.append(cluster)
        size = stop - start
        if level < depth and size > int(rng.integers(1, leaf_size + 1)):
            mid = start + int(rng.integers(1, size))
            cluster.children = (build(start, mid, level + 1), build(mid, stop, level + 1))
        return cluster

    n = int(rng.integers(4, 4 * leaf_size * 2**depth))
    root = build(0, n, 0)
    return ClusterTree(root, clusters, np.arange(n, dtype=np.int64), leaf_size)


def random_basis(tree, rng, max_rank=8):
    """Cluster basis with independent random ranks and entries."""
    ranks = [int(rng.integers(1, max_rank + 1)) for _ in tree.clusters]
    leaf = {}
    transfer = {}
    for cluster in tree.clusters:
        if cluster.is_leaf:
            leaf[cluster.index] = rng.standard_normal((cluster.size, ranks[cluster.index]))
        for child in cluster.children:
            transfer[child.index] = rng.standard_normal(
                (ranks[child.index], ranks[cluster.index])
            )
    return ClusterBasis(tree, ranks, leaf, transfer)
