"""The numba and numpy kernels must agree, and the env flag must select numpy."""

import os
import subprocess
import sys

import numpy as np
import pytest

from jointlca import _kernels
from jointlca.solver import fit_penalized

from conftest import random_ccset

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def inputs(rng, n_views=4, r=5):
    pairs = [(i, j) for i in range(n_views) for j in range(i + 1, n_views)]
    pi = np.array([p[0] for p in pairs], dtype=np.int64)
    pj = np.array([p[1] for p in pairs], dtype=np.int64)
    d = rng.uniform(0, 2, size=(n_views, r))
    d[:, 0] = 0.0
    target = rng.normal(size=(len(pairs), r))
    w = rng.uniform(0.1, 3, size=len(pairs))
    return d, target, pi, pj, w


@needs_numba
def test_shrink_factors_agree(rng):
    y = rng.normal(size=(6, 8))
    norms = np.linalg.norm(y, axis=0)
    lam = float(np.median(norms))
    a = _kernels.shrink_factors_numpy(y, lam)
    b = _kernels.shrink_factors_numba(y, lam)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)
    assert np.all(a[norms <= lam] == 0.0)


@needs_numba
@pytest.mark.parametrize("passes", [1, 3, 50])
def test_d_sweep_agrees(rng, passes):
    d, target, pi, pj, w = inputs(rng)
    a, used_a = _kernels.d_sweep_numpy(d, target, pi, pj, w, passes, 1e-12)
    b, used_b = _kernels.d_sweep_numba(d, target, pi, pj, w, passes, 1e-12)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    assert used_a == used_b
    assert np.all(a >= 0)


@needs_numba
def test_component_losses_agree(rng):
    d, target, pi, pj, w = inputs(rng)
    np.testing.assert_allclose(
        _kernels.component_losses_numpy(d, target, pi, pj, w, 0.7),
        _kernels.component_losses_numba(d, target, pi, pj, w, 0.7),
        rtol=1e-13,
    )


def test_d_sweep_does_not_mutate_input(rng):
    d, target, pi, pj, w = inputs(rng)
    keep = d.copy()
    _kernels.d_sweep(d, target, pi, pj, w, 5, 1e-12)
    np.testing.assert_array_equal(d, keep)


@needs_numba
def test_backends_give_same_fit(rng):
    cc = random_ccset((5, 6, 7), rng)
    previous = _kernels.set_backend("numpy")
    try:
        a, ta = fit_penalized(cc, 0.05)
        _kernels.set_backend("numba")
        b, tb = fit_penalized(cc, 0.05)
    finally:
        _kernels.set_backend(previous)
    np.testing.assert_allclose(a.scales, b.scales, rtol=1e-9, atol=1e-12)
    assert ta.iterations_used == tb.iterations_used


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_env_flag_selects_numpy():
    env = dict(os.environ, JOINTLCA_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from jointlca import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
