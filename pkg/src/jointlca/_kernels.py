"""Inner-loop kernels for the diagonal updates.

Each kernel has a numba ``@njit`` version and a pure-numpy version with
identical arithmetic. The numba path is used when numba imports cleanly,
unless ``JOINTLCA_DISABLE_NUMBA`` is set to a truthy value in the
environment. ``set_backend`` switches at runtime (used by the benchmark).
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("JOINTLCA_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


# --- numpy reference path -------------------------------------------------


def shrink_factors_numpy(y, lam):
    """Group shrink factors ``(1 - lam/||y_k||)_+`` for each column of a (pairs x r) array.

    Columns with ``||y_k|| <= lam`` get exactly 0.
    """
    norms = np.sqrt(np.sum(y * y, axis=0))
    factor = np.zeros_like(norms)
    live = norms > lam
    factor[live] = 1.0 - lam / norms[live]
    return factor


def d_sweep_numpy(d, target, pi, pj, w, passes, tol):
    """Cyclic nonnegative coordinate updates of ``d`` (I x r) towards ``d_i d_j ~ target``.

    For view i and component k the update is
    ``sum_j w_ij d_jk t_ijk / sum_j w_ij d_jk^2`` when the numerator and
    denominator are positive, else 0. Components are independent, so each
    view update is vectorized over k. Stops early once the largest change in
    a pass is below ``tol``. Returns (d, passes_used).
    """
    d = d.copy()
    n_views, r = d.shape
    n_pairs = pi.shape[0]
    used = 0
    for _ in range(passes):
        used += 1
        max_change = 0.0
        for i in range(n_views):
            num = np.zeros(r)
            den = np.zeros(r)
            for p in range(n_pairs):
                if pi[p] == i:
                    o = pj[p]
                elif pj[p] == i:
                    o = pi[p]
                else:
                    continue
                num += w[p] * d[o] * target[p]
                den += w[p] * d[o] * d[o]
            new = np.zeros(r)
            ok = (num > 0.0) & (den > 0.0)
            new[ok] = num[ok] / den[ok]
            change = np.max(np.abs(new - d[i])) if r else 0.0
            max_change = max(max_change, change)
            d[i] = new
        if max_change < tol:
            break
    return d, used


def component_losses_numpy(d, target, pi, pj, w, lam):
    """Per-component ``sum_p w_p (t_pk - d_ik d_jk)^2 + lam sqrt(sum_p w_p (d_ik d_jk)^2)``."""
    prod = d[pi] * d[pj]
    resid = target - prod
    wcol = w[:, None]
    return np.sum(wcol * resid * resid, axis=0) + lam * np.sqrt(np.sum(wcol * prod * prod, axis=0))


# --- numba path -------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def shrink_factors_numba(y, lam):
        n_pairs, r = y.shape
        out = np.zeros(r)
        for k in range(r):
            sq = 0.0
            for p in range(n_pairs):
                sq += y[p, k] * y[p, k]
            norm = np.sqrt(sq)
            if norm > lam:
                out[k] = 1.0 - lam / norm
        return out

    @njit(cache=True)
    def d_sweep_numba(d, target, pi, pj, w, passes, tol):
        d = d.copy()
        n_views, r = d.shape
        n_pairs = pi.shape[0]
        used = 0
        for _ in range(passes):
            used += 1
            max_change = 0.0
            for i in range(n_views):
                for k in range(r):
                    num = 0.0
                    den = 0.0
                    for p in range(n_pairs):
                        if pi[p] == i:
                            o = pj[p]
                        elif pj[p] == i:
                            o = pi[p]
                        else:
                            continue
                        num += w[p] * d[o, k] * target[p, k]
                        den += w[p] * d[o, k] * d[o, k]
                    new = num / den if (num > 0.0 and den > 0.0) else 0.0
                    change = abs(new - d[i, k])
                    if change > max_change:
                        max_change = change
                    d[i, k] = new
            if max_change < tol:
                break
        return d, used

    @njit(cache=True)
    def component_losses_numba(d, target, pi, pj, w, lam):
        n_pairs, r = target.shape
        out = np.zeros(r)
        for k in range(r):
            loss = 0.0
            pen = 0.0
            for p in range(n_pairs):
                prod = d[pi[p], k] * d[pj[p], k]
                resid = target[p, k] - prod
                loss += w[p] * resid * resid
                pen += w[p] * prod * prod
            out[k] = loss + lam * np.sqrt(pen)
        return out


_NUMPY = {
    "shrink_factors": shrink_factors_numpy,
    "d_sweep": d_sweep_numpy,
    "component_losses": component_losses_numpy,
}
_NUMBA = (
    {
        "shrink_factors": shrink_factors_numba,
        "d_sweep": d_sweep_numba,
        "component_losses": component_losses_numba,
    }
    if HAVE_NUMBA
    else None
)

BACKEND = ""
shrink_factors = shrink_factors_numpy
d_sweep = d_sweep_numpy
component_losses = component_losses_numpy


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous backend name."""
    global BACKEND, shrink_factors, d_sweep, component_losses
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    table = _NUMBA if name == "numba" else _NUMPY
    previous = BACKEND
    BACKEND = name
    shrink_factors = table["shrink_factors"]
    d_sweep = table["d_sweep"]
    component_losses = table["component_losses"]
    return previous


set_backend("numba" if HAVE_NUMBA and not _env_disabled() else "numpy")
