"""Time the numba and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Reports per-call kernel timings on random inputs and the wall time of a
penalized fit on a simulated dataset under each backend. The first numba
call (compilation) is excluded by a warm-up.
"""

import argparse
import time

import numpy as np

from jointlca import _kernels
from jointlca.data import cross_covariances
from jointlca.simulation import SimConfig, generate
from jointlca.solver import fit_penalized, initialize, lambda_max


def kernel_inputs(n_views, r, rng):
    pairs = [(i, j) for i in range(n_views) for j in range(i + 1, n_views)]
    pi = np.array([p[0] for p in pairs], dtype=np.int64)
    pj = np.array([p[1] for p in pairs], dtype=np.int64)
    return dict(
        d=rng.uniform(0.5, 2.0, size=(n_views, r)),
        target=rng.normal(size=(len(pairs), r)),
        pi=pi,
        pj=pj,
        w=rng.uniform(0.5, 2.0, size=len(pairs)),
    )


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for n_views, r in ((3, 5), (4, 20), (8, 50)):
        x = kernel_inputs(n_views, r, rng)
        calls = {
            "shrink_factors": lambda: _kernels.shrink_factors(x["target"], 0.5),
            "d_sweep": lambda: _kernels.d_sweep(x["d"], x["target"], x["pi"], x["pj"], x["w"], 50, 0.0),
            "component_losses": lambda: _kernels.component_losses(
                x["d"], x["target"], x["pi"], x["pj"], x["w"], 0.5),
        }
        for name, call in calls.items():
            timing = {}
            for backend in ("numpy", "numba"):
                _kernels.set_backend(backend)
                call()
                timing[backend] = best_of(call, repeats)
            rows.append((f"{name} I={n_views} r={r}", timing["numpy"], timing["numba"]))
    return rows


def bench_fit(repeats):
    config = SimConfig(dims=(50, 50, 50), n=100, r0=2, case="I", seed=1)
    dataset, _ = generate(config)
    cc = cross_covariances(dataset.centered(), "by_n")
    init = initialize(cc)
    lam = 0.3 * lambda_max(cc, init)
    timing = {}
    for backend in ("numpy", "numba"):
        _kernels.set_backend(backend)
        fit_penalized(cc, lam, init=init)
        timing[backend] = best_of(lambda: fit_penalized(cc, lam, init=init), repeats)
    return [("fit_penalized 3x50, n=100", timing["numpy"], timing["numba"])]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    previous = _kernels.BACKEND
    try:
        rows = bench_kernels(args.repeats) + bench_fit(max(1, args.repeats // 4))
    finally:
        _kernels.set_backend(previous)
    print(f"{'case':<36}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}")
    for label, t_np, t_nb in rows:
        print(f"{label:<36}{1e3 * t_np:>12.4f}{1e3 * t_nb:>12.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
