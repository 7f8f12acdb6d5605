"""Acceptance suite: each test checks one criterion at its stated tolerance
and reports a PASS/FAIL line in the terminal summary."""

import subprocess
import sys
import time

import numpy as np
import pytest

from jointlca.data import cross_covariances
from jointlca.metrics import BenchmarkSettings, rank_accuracy, run_benchmark, subspace_error
from jointlca.model import fidelity
from jointlca.oracles import check_diag_cca, check_prox, check_stationarity, tight_solver_options
from jointlca.simulation import SimConfig, generate
from jointlca.solver import SolverOptions, fit_penalized, initialize, lambda_max, orthogonal_procrustes, refit

from conftest import ACCEPTANCE_LINES, random_ccset, random_orthonormal

TIGHT = tight_solver_options()

# desk scale: every simulated view has 50 features
P = 50
CELLS = {
    "table1": SimConfig(dims=(P,) * 3, n=100, r0=2, case="I"),
    "table2": SimConfig(dims=(P,) * 3, n=200, r0=5, case="I"),
    "table3": SimConfig(dims=(P,) * 4, n=100, r0=2, case="I"),
    "II_n100_I3": SimConfig(dims=(P,) * 3, n=100, r0=2, case="II"),
    "II_n200_I3": SimConfig(dims=(P,) * 3, n=200, r0=2, case="II"),
    "II_n100_I4": SimConfig(dims=(P,) * 4, n=100, r0=2, case="II"),
}
REPS = 20


def report(number, passed, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def simulation_records():
    """One benchmark run shared by criteria 5-8, keyed by cell name."""
    names = list(CELLS)
    records, _ = run_benchmark([CELLS[k] for k in names], REPS, master_seed=2024, settings=BenchmarkSettings())
    return {name: [r for r in records if r.cell == c] for c, name in enumerate(names)}


def test_criterion_1_noiseless_recovery():
    start = time.perf_counter()
    worst_err = worst_fid = 0.0
    combos = [(I, r0) for I in (2, 3, 4) for r0 in (1, 2, 5)]
    for t in range(20):
        n_views, r0 = combos[t % len(combos)]
        rng = np.random.default_rng(t)
        dims = tuple(int(p) for p in rng.integers(8, 21, size=n_views))
        config = SimConfig(dims=dims, n=60, r0=r0, case=("I", "II")[t % 2], seed=100 + t)
        dataset, truth = generate(config, noiseless=True, orthogonal_individual=True)
        cc = cross_covariances(dataset.centered(), "by_n")
        model, _ = refit(cc, r0, initialize(cc), TIGHT)
        worst_err = max(worst_err, subspace_error(model.loadings, truth.V))
        worst_fid = max(worst_fid, fidelity(model, cc))
    elapsed = time.perf_counter() - start
    report(1, worst_err <= 1e-6 and worst_fid <= 1e-8 and elapsed < 30,
           f"max subspace_error {worst_err:.2e} (<= 1e-6), max fidelity {worst_fid:.2e} (<= 1e-8), "
           f"{elapsed:.1f}s (< 30s)")


def test_criterion_2_monotone_descent():
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(100):
        n_views = int(rng.integers(2, 5))
        cc = random_ccset(tuple(int(p) for p in rng.integers(3, 9, size=n_views)), rng)
        init = initialize(cc)
        lam = float(rng.uniform(0.0, 0.8)) * lambda_max(cc, init)
        _, trace = fit_penalized(cc, lam, init=init, opts=SolverOptions(max_iters=200, rel_tol=1e-12))
        worst = max(worst, float(np.max(np.diff(trace.objective), initial=-np.inf)))
    report(2, worst <= 1e-10, f"largest objective increase {worst:.2e} over 100 fits (<= 1e-10)")


def test_criterion_3_prox():
    reports = check_prox(50, seed=11, tol=1e-8)
    worst = max(r.discrepancy for r in reports)
    boundary = sum("lam/||Y||=1.0000" in r.instance for r in reports)
    report(3, all(r.passed for r in reports) and boundary > 0,
           f"max |prox - oracle| {worst:.2e} (<= 1e-8), {boundary} boundary cases")


def test_criterion_4_procrustes():
    rng = np.random.default_rng(13)
    margin = np.inf
    for _ in range(20):
        p, m = int(rng.integers(3, 9)), int(rng.integers(2, 7))
        r = int(rng.integers(1, p + 1))
        a, b = rng.normal(size=(p, m)), rng.normal(size=(r, m))
        best = np.linalg.norm(a - orthogonal_procrustes(a, b) @ b)
        candidates = min(np.linalg.norm(a - random_orthonormal(p, r, rng) @ b) for _ in range(10_000))
        margin = min(margin, candidates - best)
    report(4, margin >= 0, f"smallest margin over random candidates {margin:.3e} (>= 0)")


def _accuracy_line(records):
    ranks = [r.estimated_rank for r in records]
    failures = sum(not r.ok for r in records)
    return rank_accuracy(records), f"ranks {ranks}, failures {failures}"


def test_criterion_5_table1(simulation_records):
    records = simulation_records["table1"]
    acc, detail = _accuracy_line(records)
    runtime = sum(r.wall_time for r in records)
    report(5, acc >= 0.75 and runtime < 600,
           f"accuracy {acc:.2f} (>= 0.75), runtime {runtime:.0f}s (< 600s), p_i={P}; {detail}")


def test_criterion_6_table2(simulation_records):
    acc, detail = _accuracy_line(simulation_records["table2"])
    report(6, acc >= 0.6, f"accuracy {acc:.2f} (>= 0.6), p_i={P}; {detail}")


def test_criterion_7_table3(simulation_records):
    acc, detail = _accuracy_line(simulation_records["table3"])
    report(7, acc >= 0.85, f"accuracy {acc:.2f} (>= 0.85), p_i={P}; {detail}")


def test_criterion_8_error_trends(simulation_records):
    def median(name):
        return float(np.median([r.subspace_error for r in simulation_records[name]]))

    n100, n200, four = median("II_n100_I3"), median("II_n200_I3"), median("II_n100_I4")
    report(8, n200 <= n100 and four <= n100,
           f"case II medians: n=100 {n100:.4f}, n=200 {n200:.4f}, I=4 {four:.4f}")


def test_criterion_9_equivalences():
    cca = check_diag_cca(10, seed=17, opts=TIGHT)
    stat = check_stationarity(5, seed=19, opts=TIGHT)
    value = max(r.discrepancy for r in cca if r.name.endswith("value"))
    angle = max(r.discrepancy for r in cca if r.name.endswith("angle"))
    ident = max(r.discrepancy for r in stat)
    report(9, all(r.passed for r in cca + stat),
           f"two-view |d1 d2 - sigma_max| {value:.2e} (<= 1e-5), angle {angle:.2e} (<= 1e-2); "
           f"three-view stationarity {ident:.2e} (<= 1e-6)")


def test_criterion_10_determinism(tmp_path):
    config = tmp_path / "bench.json"
    config.write_text(
        '{"grid": [{"dims": [12, 14, 10], "n": 40, "r0": 2, "case": "II"},'
        ' {"dims": [10, 10], "n": 30, "r0": 1, "case": "I"}],'
        ' "replications": 3, "grid_size": 8, "K": 3}'
    )
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        subprocess.run(
            [sys.executable, "-c", "import sys; from jointlca.cli import main; sys.exit(main())",
             "benchmark", "--config", str(config), "--seed", "99", "--out-dir", str(out)],
            check=True, capture_output=True,
        )
        outputs.append((out / "benchmark_results.csv").read_bytes())
    report(10, outputs[0] == outputs[1] and len(outputs[0]) > 0,
           f"benchmark_results.csv identical across runs ({len(outputs[0])} bytes)")
