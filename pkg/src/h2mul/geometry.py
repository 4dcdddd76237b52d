"""Meshes, cluster trees and block trees.

The geometric layer underneath the matrix machinery: triangle surface
meshes (with a refined-octahedron sphere generator for benchmarks),
axis-aligned bounding boxes, binary cluster trees obtained by median
bisection of triangle midpoints, and block trees built from the standard
admissibility condition

    max{diam(box_t), diam(box_s)} <= 2 * eta * dist(box_t, box_s).

Cluster index sets are contiguous ranges of a per-tree permutation, so
every restriction later in the pipeline is a slice.
"""

from __future__ import annotations

import math

import numpy as np

ADMISSIBLE = "admissible"
DENSE = "dense"
SPLIT = "split"


class TriangleMesh:
    """Triangle surface mesh with precomputed areas and midpoints."""

    __slots__ = ("vertices", "triangles", "areas", "midpoints")

    def __init__(self, vertices, triangles):
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError("vertices must be an (nv, 3) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must be an (nt, 3) array")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle vertex index out of range")
        self.vertices = vertices
        self.triangles = triangles
        a = vertices[triangles[:, 0]]
        b = vertices[triangles[:, 1]]
        c = vertices[triangles[:, 2]]
        cross = np.cross(b - a, c - a)
        self.areas = 0.5 * np.linalg.norm(cross, axis=1)
        if np.any(self.areas <= 0.0):
            raise ValueError("mesh contains a degenerate triangle")
        self.midpoints = (a + b + c) / 3.0

    def __len__(self):
        return len(self.triangles)


def build_sphere_mesh(level: int) -> TriangleMesh:
    """Unit sphere mesh: octahedron refined ``level`` times (8 * 4**level triangles).

    Each refinement step splits every triangle into four via edge midpoints
    and projects the new vertices back onto the sphere.
    """
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    vertices = [
        (1.0, 0.0, 0.0),
        (-1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0),
        (0.0, 0.0, -1.0),
    ]
    triangles = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    for _ in range(level):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            known = midpoint_cache.get(key)
            if known is not None:
                return known
            vi, vj = vertices[i], vertices[j]
            x = vi[0] + vj[0]
            y = vi[1] + vj[1]
            z = vi[2] + vj[2]
            norm = math.sqrt(x * x + y * y + z * z)
            vertices.append((x / norm, y / norm, z / norm))
            midpoint_cache[key] = len(vertices) - 1
            return midpoint_cache[key]

        refined = []
        for a, b, c in triangles:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            refined += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        triangles = refined
    return TriangleMesh(np.array(vertices), np.array(triangles))


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write a mesh as plain text: counts, vertex lines, triangle lines."""
    with open(path, "w") as handle:
        handle.write(f"{len(mesh.vertices)} {len(mesh.triangles)}\n")
        for x, y, z in mesh.vertices:
            handle.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
        for i, j, k in mesh.triangles:
            handle.write(f"{i} {j} {k}\n")


def load_mesh(path) -> TriangleMesh:
    """Read a mesh written by :func:`save_mesh`."""
    with open(path) as handle:
        nv, nt = (int(tok) for tok in handle.readline().split())
        vertices = [[float(tok) for tok in handle.readline().split()] for _ in range(nv)]
        triangles = [[int(tok) for tok in handle.readline().split()] for _ in range(nt)]
    return TriangleMesh(np.array(vertices), np.array(triangles))


class BoundingBox:
    """Axis-aligned box given by componentwise lower and upper corners."""

    __slots__ = ("lower", "upper", "diameter")

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if np.any(self.upper < self.lower):
            raise ValueError("upper corner must dominate lower corner")
        self.diameter = float(np.linalg.norm(self.upper - self.lower))

    def distance(self, other: "BoundingBox") -> float:
        """Euclidean distance between the two boxes (0 if they intersect)."""
        total = 0.0
        for i in range(3):
            gap = max(0.0, self.lower[i] - other.upper[i], other.lower[i] - self.upper[i])
            total += gap * gap
        return math.sqrt(total)

    def contains(self, other: "BoundingBox", slack: float = 0.0) -> bool:
        return bool(
            np.all(self.lower - slack <= other.lower)
            and np.all(other.upper <= self.upper + slack)
        )


def admissible(box_t: BoundingBox, box_s: BoundingBox, eta: float) -> bool:
    """Standard admissibility: max of the diameters bounded by 2*eta*distance."""
    return max(box_t.diameter, box_s.diameter) <= 2.0 * eta * box_t.distance(box_s)


class Cluster:
    """Node of a cluster tree; owns the permuted index range [start, stop)."""

    __slots__ = ("index", "start", "stop", "level", "box", "children")

    def __init__(self, index, start, stop, level, box):
        self.index = index
        self.start = start
        self.stop = stop
        self.level = level
        self.box = box
        self.children: tuple[Cluster, ...] = ()

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self):
        return f"Cluster({self.index}, [{self.start}:{self.stop}), level={self.level})"


class ClusterTree:
    """Binary cluster tree over the triangles of a mesh.

    ``order`` maps tree position -> original triangle index and
    ``permutation`` is its inverse, so ``original[order]`` lists mesh data
    in tree order and cluster labels are contiguous slices of it.
    """

    __slots__ = ("root", "clusters", "order", "permutation", "leaf_size")

    def __init__(self, root, clusters, order, leaf_size):
        self.root = root
        self.clusters = clusters
        self.order = order
        self.permutation = np.empty_like(order)
        self.permutation[order] = np.arange(len(order))
        self.leaf_size = leaf_size

    def __len__(self):
        return self.root.size

    def leaves(self):
        return [c for c in self.clusters if c.is_leaf]

    def depth(self) -> int:
        return max(c.level for c in self.clusters)


def build_cluster_tree(mesh: TriangleMesh, leaf_size: int = 16) -> ClusterTree:
    """Median bisection along the longest box axis until clusters fit ``leaf_size``."""
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")
    if len(mesh) == 0:
        raise ValueError("mesh must be nonempty")
    midpoints = mesh.midpoints
    order = np.arange(len(mesh), dtype=np.int64)
    clusters: list[Cluster] = []

    def build(start: int, stop: int, level: int) -> Cluster:
        idx = order[start:stop]
        points = midpoints[idx]
        box = BoundingBox(points.min(axis=0), points.max(axis=0))
        cluster = Cluster(len(clusters), start, stop, level, box)
        clusters.append(cluster)
        if stop - start > leaf_size:
            axis = int(np.argmax(box.upper - box.lower))
            order[start:stop] = idx[np.argsort(points[:, axis], kind="stable")]
            mid = start + (stop - start) // 2
            cluster.children = (build(start, mid, level + 1), build(mid, stop, level + 1))
        return cluster

    root = build(0, len(mesh), 0)
    return ClusterTree(root, clusters, order, leaf_size)


class Block:
    """Node of a block tree: a pair of clusters plus its classification."""

    __slots__ = ("index", "row", "col", "kind", "children")

    def __init__(self, index, row, col, kind):
        self.index = index
        self.row = row
        self.col = col
        self.kind = kind
        self.children: tuple[Block, ...] = ()

    @property
    def is_admissible_leaf(self) -> bool:
        return self.kind is ADMISSIBLE

    @property
    def is_dense_leaf(self) -> bool:
        return self.kind is DENSE

    @property
    def is_leaf(self) -> bool:
        return self.kind is not SPLIT

    def __repr__(self):
        return f"Block({self.row.index}, {self.col.index}, {self.kind})"


class BlockTree:
    """Block tree over a pair of cluster trees."""

    __slots__ = ("root", "blocks", "row_tree", "col_tree", "eta")

    def __init__(self, root, blocks, row_tree, col_tree, eta):
        self.root = root
        self.blocks = blocks
        self.row_tree = row_tree
        self.col_tree = col_tree
        self.eta = eta

    def leaves(self):
        return [b for b in self.blocks if b.is_leaf]

    def admissible_leaves(self):
        return [b for b in self.blocks if b.is_admissible_leaf]

    def dense_leaves(self):
        return [b for b in self.blocks if b.is_dense_leaf]


def build_block_tree(row_tree: ClusterTree, col_tree: ClusterTree, eta: float = 1.0) -> BlockTree:
    """Descend both trees simultaneously; stop at admissible or leaf-leaf pairs.

    A subdivided block pairs the children of both clusters, or keeps a leaf
    cluster fixed while the other side is refined.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    blocks: list[Block] = []

    def build(t: Cluster, s: Cluster) -> Block:
        if admissible(t.box, s.box, eta):
            kind = ADMISSIBLE
        elif t.is_leaf and s.is_leaf:
            kind = DENSE
        else:
            kind = SPLIT
        block = Block(len(blocks), t, s, kind)
        blocks.append(block)
        if kind is SPLIT:
            row_children = t.children if t.children else (t,)
            col_children = s.children if s.children else (s,)
            block.children = tuple(
                build(tc, sc) for tc in row_children for sc in col_children
            )
        return block

    root = build(row_tree.root, col_tree.root)
    return BlockTree(root, blocks, row_tree, col_tree, eta)
