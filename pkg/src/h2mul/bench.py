"""Benchmark: squaring the single layer operator on refined sphere meshes.

Assembles the one-point quadrature single layer matrix on octahedron
refinements (n = 8 * 4^level triangles), squares it through the exact
product with streamed coarsening and recompression, and reports one CSV
row per level.  The row phase covers the product sweep, coarsening and
the adaptive row basis; the column phase covers the column basis,
coupling projection and assembly.  The relative error column compares
the compressed square against applying the assembled operator twice,
both measured with the same power iteration, and is not timed.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .compression import (
    TruncationControl,
    adaptive_col_basis,
    adaptive_row_basis,
    assemble_recompressed,
    block_norms,
    coarsen_product,
    spectral_norm_lower_bound,
)
from .geometry import build_block_tree, build_cluster_tree, build_sphere_mesh
from .h2core import H2Matrix
from .interpolation import InterpolationScheme, SingleLayerLaplace, assemble_h2

CSV_HEADER = "n,row_s,col_s,mem_mb,rel_error"
DENSE_CHECK_LIMIT = 4096


class BenchConfig:
    """Settings for one benchmark run."""

    __slots__ = (
        "levels",
        "eps",
        "eta",
        "order",
        "leaf_size",
        "theta",
        "seed",
        "power_steps",
        "verify_dense",
    )

    def __init__(
        self,
        levels,
        eps=1e-4,
        eta=1.0,
        order=3,
        leaf_size=16,
        theta=0.25,
        seed=0,
        power_steps=10,
        verify_dense=False,
    ):
        self.levels = tuple(levels)
        self.eps = float(eps)
        self.eta = float(eta)
        self.order = int(order)
        self.leaf_size = int(leaf_size)
        self.theta = float(theta)
        self.seed = int(seed)
        self.power_steps = int(power_steps)
        self.verify_dense = bool(verify_dense)


class BenchRow:
    """One measured level of the benchmark."""

    __slots__ = ("n", "row_s", "col_s", "mem_mb", "rel_error")

    def __init__(self, n, row_s, col_s, mem_mb, rel_error):
        self.n = n
        self.row_s = row_s
        self.col_s = col_s
        self.mem_mb = mem_mb
        self.rel_error = rel_error


def memory_footprint(matrix: H2Matrix) -> float:
    """Megabytes of matrix storage at eight bytes per real."""
    reals = matrix.row_basis.storage_reals() + matrix.col_basis.storage_reals()
    reals += sum(m.size for m in matrix.coupling.values())
    reals += sum(m.size for m in matrix.nearfield.values())
    return reals * 8.0 / (1024.0 * 1024.0)


def _relative_error(X: H2Matrix, Z: H2Matrix, steps: int, seed: int) -> float:
    """Power iteration estimate of |X @ X - Z| / |X @ X| as operators."""
    n = X.shape[1]

    def ref(v):
        return X.matvec(X.matvec(v))

    def ref_adj(v):
        return X.matvec_adjoint(X.matvec_adjoint(v))

    def err(v):
        return ref(v) - Z.matvec(v)

    def err_adj(v):
        return ref_adj(v) - Z.matvec_adjoint(v)

    num = spectral_norm_lower_bound(err, err_adj, n, iterations=steps, seed=seed)
    den = spectral_norm_lower_bound(ref, ref_adj, n, iterations=steps, seed=seed + 1)
    return num / den if den > 0.0 else 0.0


def _dense_error(X: H2Matrix, Z: H2Matrix, steps: int, seed: int) -> float:
    """Fully dense reference check; only sensible at small sizes."""
    g = X.to_dense(DENSE_CHECK_LIMIT)
    square = g @ g
    diff = square - Z.to_dense(DENSE_CHECK_LIMIT)
    num = spectral_norm_lower_bound(
        lambda v: diff @ v, lambda v: diff.T @ v, diff.shape[1], steps, seed
    )
    den = spectral_norm_lower_bound(
        lambda v: square @ v, lambda v: square.T @ v, square.shape[1], steps, seed + 1
    )
    return num / den if den > 0.0 else 0.0


def run_benchmark(config: BenchConfig, log=None):
    """Run every level and return the measured rows.

    log, when given, receives one diagnostic line per level with the
    product overlap counter and the largest adaptive rank.
    """
    rows = []
    kernel = SingleLayerLaplace()
    scheme = InterpolationScheme(config.order)
    for level in config.levels:
        mesh = build_sphere_mesh(level)
        tree = build_cluster_tree(mesh, leaf_size=config.leaf_size)
        structure = build_block_tree(tree, tree, eta=config.eta)
        X = assemble_h2(mesh, structure, kernel, scheme)
        control = TruncationControl(
            config.eps,
            theta=config.theta,
            power_steps=config.power_steps,
            seed=config.seed,
        )

        start = time.perf_counter()
        blr, stats = coarsen_product(X, X, structure, control)
        norms = block_norms(blr, control)
        row_basis = adaptive_row_basis(blr, control, norms)
        row_s = time.perf_counter() - start

        start = time.perf_counter()
        col_basis = adaptive_col_basis(blr, control, norms)
        Z = assemble_recompressed(blr, row_basis, col_basis)
        col_s = time.perf_counter() - start

        rel_error = _relative_error(X, Z, config.power_steps, config.seed + len(mesh))
        if config.verify_dense:
            dense_rel = _dense_error(X, Z, config.power_steps, config.seed + 1 + len(mesh))
            rel_error = max(rel_error, dense_rel)
            if log is not None:
                log(f"level {level}: dense check rel_error={dense_rel:.6g}")
        if log is not None:
            log(
                f"level {level}: n={len(mesh)} overlap={stats.max_row_overlap} "
                f"pending={stats.max_pending} max_rank="
                f"{max(max(row_basis.ranks), max(col_basis.ranks))}"
            )
        rows.append(
            BenchRow(len(mesh), row_s, col_s, memory_footprint(Z), rel_error)
        )
    return rows


def emit_csv(rows, stream) -> None:
    """Write the pinned benchmark CSV with six significant digits."""
    stream.write(CSV_HEADER + "\n")
    for row in rows:
        stream.write(
            f"{row.n},{row.row_s:.6g},{row.col_s:.6g},"
            f"{row.mem_mb:.6g},{row.rel_error:.6g}\n"
        )


def _parse_levels(text: str):
    """Accept a single level, a comma list, or an inclusive a-b range."""
    text = text.strip()
    if "-" in text:
        lo, hi = text.split("-", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError("empty level range")
        return tuple(range(lo, hi + 1))
    if "," in text:
        return tuple(int(part) for part in text.split(","))
    return (int(text),)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="square the single layer operator on sphere meshes "
        "and report timings, storage, and accuracy as CSV",
    )
    parser.add_argument(
        "--levels",
        default="3-6",
        help="refinement levels: single (4), list (3,5), or range (3-6); "
        "level L means n = 8*4^L triangles (default 3-6)",
    )
    parser.add_argument("--eps", type=float, default=1e-4, help="blockwise relative tolerance (default 1e-4)")
    parser.add_argument("--eta", type=float, default=1.0, help="admissibility parameter (default 1.0)")
    parser.add_argument("--order", type=int, default=3, help="interpolation order per axis (default 3)")
    parser.add_argument("--leaf-size", type=int, default=16, help="cluster tree leaf size (default 16)")
    parser.add_argument("--theta", type=float, default=0.25, help="level weight decay for recompression (default 0.25)")
    parser.add_argument("--seed", type=int, default=0, help="seed for norm estimation (default 0)")
    parser.add_argument("--power-steps", type=int, default=10, help="power iteration steps for norms (default 10)")
    parser.add_argument(
        "--verify-dense",
        action="store_true",
        help=f"also compare against a dense product (n <= {DENSE_CHECK_LIMIT} only)",
    )
    parser.add_argument(
        "--parallel",
        action="store_true",
        help="accepted for compatibility; runs single-threaded",
    )
    parser.add_argument("--out", default="-", help="CSV destination path, - for stdout (default -)")
    args = parser.parse_args(argv)

    try:
        levels = _parse_levels(args.levels)
    except ValueError as exc:
        print(f"bench: invalid --levels: {exc}", file=sys.stderr)
        return 2
    if args.order < 1:
        print("bench: --order must be at least 1", file=sys.stderr)
        return 2
    if args.eps <= 0.0:
        print("bench: --eps must be positive", file=sys.stderr)
        return 2
    if args.parallel:
        print("bench: parallel execution not implemented; running single-threaded", file=sys.stderr)
    if args.verify_dense and max(8 * 4**level for level in levels) > DENSE_CHECK_LIMIT:
        print(
            f"bench: --verify-dense only supports n <= {DENSE_CHECK_LIMIT}",
            file=sys.stderr,
        )
        return 2

    config = BenchConfig(
        levels,
        eps=args.eps,
        eta=args.eta,
        order=args.order,
        leaf_size=args.leaf_size,
        theta=args.theta,
        seed=args.seed,
        power_steps=args.power_steps,
        verify_dense=args.verify_dense,
    )
    rows = run_benchmark(config, log=lambda line: print(line, file=sys.stderr))
    if args.out == "-":
        emit_csv(rows, sys.stdout)
    else:
        with open(args.out, "w") as handle:
            emit_csv(rows, handle)
        print(f"bench: wrote {args.out}", file=sys.stderr)

    bound = 2.0 * config.eps
    if any(row.rel_error > bound for row in rows):
        print(f"bench: relative error exceeded {bound:.6g}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
