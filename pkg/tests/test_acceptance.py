"""Acceptance checks for the product and recompression pipeline.

Each test prints one PASS or FAIL line carrying the measured quantities
and the pinned tolerance, then asserts.  The scaling benchmark is shared
by the timing and memory checks and runs once per session.
"""

import time

import numpy as np
import pytest

from conftest import make_problem
from test_compression import (
    decomposition_gaps,
    isometry_defect,
    run_agglomeration_bound_cases,
    spectral,
)
from test_product import run_algebra_cases

from h2mul import (
    InterpolationScheme,
    SingleLayerLaplace,
    TruncationControl,
    assemble_h2,
    build_block_tree,
    build_cluster_tree,
    build_sphere_mesh,
    coarsen_product,
    exact_product,
    multiply,
    recompress,
    spectral_norm_lower_bound,
    to_dense,
    verify_product_admissibility,
)
from h2mul.bench import BenchConfig, run_benchmark

EPS_HAT = 1e-4


def report(capsys, ok, text):
    """Print one always-visible verdict line, then assert it."""
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'}: {text}", flush=True)
    assert ok, text


def operator_relative_error(X, Z, steps, seed):
    """10-step power estimate of |X@X - Z| / |X@X| as operators."""
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
    return num / den


@pytest.fixture(scope="session")
def bench_rows():
    """One scaling run shared by the timing and memory criteria.

    Order 2 with leaf size 8 keeps the sweep inside the session budget
    on one core; the leaf size matches the order-2 basis rank.
    """
    config = BenchConfig((3, 4, 5, 6), eps=EPS_HAT, order=2, leaf_size=8, seed=0)
    start = time.perf_counter()
    rows = run_benchmark(config)
    return rows, time.perf_counter() - start


class TestAcceptance:
    def test_criterion_1_exact_product(self, capsys, problem128, problem256, problem512):
        worst_err = 0.0
        worst_time = 0.0
        for problem in (problem128, problem256, problem512):
            entries = to_dense(problem.matrix)
            oracle = entries @ entries
            start = time.perf_counter()
            result = exact_product(problem.matrix, problem.matrix)
            square = result.to_dense()
            elapsed = time.perf_counter() - start
            err = np.linalg.norm(square - oracle) / np.linalg.norm(oracle)
            worst_err = max(worst_err, err)
            worst_time = max(worst_time, elapsed)
        ok = worst_err <= 1e-11 and worst_time < 30.0
        report(
            capsys,
            ok,
            "criterion 1: exact product vs dense square at n in {128,256,512}: "
            f"worst relative Frobenius error {worst_err:.3g} (tol 1e-11), "
            f"slowest size {worst_time:.2f}s (limit 30s)",
        )

    def test_criterion_2_block_relative_error(self, capsys, problem512):
        start = time.perf_counter()
        control = TruncationControl(EPS_HAT)

        problem2048 = make_problem(build_sphere_mesh(4), order=3, dense=False)
        X = problem2048.matrix
        Z = multiply(X, X, problem2048.structure, control)
        global_rel = operator_relative_error(X, Z, steps=10, seed=1)

        matrix = problem512.matrix
        z512 = multiply(matrix, matrix, problem512.structure, control)
        entries = to_dense(matrix)
        oracle = entries @ entries
        dense512 = to_dense(z512)
        worst_block = 0.0
        for block in problem512.structure.admissible_leaves():
            t, s = block.row, block.col
            piece = oracle[t.start : t.stop, s.start : s.stop]
            err = spectral(dense512[t.start : t.stop, s.start : s.stop] - piece)
            worst_block = max(worst_block, err / spectral(piece))
        elapsed = time.perf_counter() - start
        ok = global_rel <= 1e-4 and worst_block <= 2e-4 and elapsed < 300.0
        report(
            capsys,
            ok,
            "criterion 2: blockwise error control at eps 1e-4: power estimate "
            f"{global_rel:.3g} at n=2048 (tol 1e-4), worst admissible block "
            f"{worst_block:.3g} at n=512 (tol 2e-4), {elapsed:.1f}s (limit 300s)",
        )

    def test_criterion_3_agglomeration_bound(self, capsys):
        cases, worst = run_agglomeration_bound_cases(120, seed=20240503)
        ok = cases >= 100 and worst <= 1.0
        report(
            capsys,
            ok,
            f"criterion 3: {cases} random block arrangements (m,n <= 3, ranks <= 5, "
            f"dims <= 60): worst error over eps*(mn + eps*m*n^2) bound ratio "
            f"{worst:.3f} (must stay <= 1)",
        )

    def test_criterion_4_basis_tree_algebra(self, capsys):
        cases, worst = run_algebra_cases(500, seed=20240504)
        ok = cases >= 500 and worst <= 1e-12
        report(
            capsys,
            ok,
            f"criterion 4: {cases} randomized yield/mul/finish/add/split/restrict "
            f"cases (depth <= 4, rank <= 8): worst relative error {worst:.3g} "
            f"(tol 1e-12)",
        )

    def test_criterion_5_product_admissibility(self, capsys):
        total = 0
        violations = 0
        worst = 0.0
        for level in (3, 4):
            mesh = build_sphere_mesh(level)
            tree = build_cluster_tree(mesh, leaf_size=16)
            for eta in (0.5, 1.0, 2.0):
                structure = build_block_tree(tree, tree, eta=eta)
                checked, bad, ratio = verify_product_admissibility(
                    structure, structure, eta
                )
                total += checked
                violations += bad
                worst = max(worst, ratio)
        ok = total > 0 and violations == 0
        report(
            capsys,
            ok,
            "criterion 5: subdivided product nodes keep inadmissible factors at "
            f"n in {{512, 2048}}, eta in {{0.5, 1, 2}}: {total} nodes checked, "
            f"{violations} violations (worst ratio {worst:.3f})",
        )

    def test_criterion_6_scaling_ratios(self, capsys, bench_rows):
        rows, elapsed = bench_rows
        assert [row.n for row in rows] == [512, 2048, 8192, 32768]
        row_ratios = [b.row_s / (4.0 * a.row_s) for a, b in zip(rows, rows[1:])]
        col_ratios = [b.col_s / (4.0 * a.col_s) for a, b in zip(rows, rows[1:])]
        ok = (
            all(r <= 1.8 for r in row_ratios + col_ratios)
            and elapsed < 1800.0
        )
        fmt = lambda seq: "/".join(f"{r:.2f}" for r in seq)
        report(
            capsys,
            ok,
            "criterion 6: time(4n)/(4 time(n)) for n in {512,...,32768}: row phase "
            f"{fmt(row_ratios)}, column phase {fmt(col_ratios)} (each must be "
            f"<= 1.8), full sweep {elapsed:.0f}s (limit 1800s)",
        )

    def test_criterion_7_recompression_decomposition(self, capsys, problem512):
        control = TruncationControl(EPS_HAT)
        matrix = problem512.matrix
        blr, _ = coarsen_product(matrix, matrix, problem512.structure, control)
        compressed = recompress(blr, control)
        defect = max(
            isometry_defect(compressed.row_basis),
            isometry_defect(compressed.col_basis),
        )
        gap, excess = decomposition_gaps(blr, compressed)
        ok = defect <= 1e-12 and gap <= 1e-10 and excess <= 1e-12
        report(
            capsys,
            ok,
            f"criterion 7: recompression at n=512: worst basis isometry defect "
            f"{defect:.3g} (tol 1e-12), error split off by {gap:.3g} on squared "
            f"norms (tol 1e-10), spectral excess {excess:.3g} (tol 1e-12)",
        )

    def test_criterion_8_memory_per_dof(self, capsys, bench_rows):
        rows, _ = bench_rows
        per_dof = {
            row.n: row.mem_mb * 1024.0 / row.n for row in rows if row.n >= 2048
        }
        values = list(per_dof.values())
        spread = max(values) / min(values)
        reference = 2.3
        near_paper = all(reference / 4.0 <= v <= reference * 4.0 for v in values)
        ok = len(values) == 3 and spread <= 2.0 and near_paper
        detail = ", ".join(f"n={n}: {v:.2f}" for n, v in sorted(per_dof.items()))
        report(
            capsys,
            ok,
            f"criterion 8: memory per dof in KB ({detail}): spread factor "
            f"{spread:.3f} (limit 2), all within 4x of the 2.3 KB/dof reference",
        )
