"""Alternating minimization for the group-penalized cross-covariance fit.

State during a fit is a list of loading matrices ``V_i`` (p_i x r) and a
scale array ``d`` (I x r). One sweep updates all diagonals (group
threshold of the rotated cross-covariance diagonals, then nonnegative
coordinate updates of ``d``), then every loading by orthogonal Procrustes.

The group threshold ``(1 - lam/||Y_k||)_+ Y_k`` is the exact minimizer of
``||Y_k - s||^2 + 2 lam ||s||``, so the penalized fit descends
``fidelity + 2 lam * penalty``; that is the value recorded in the trace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .data import CrossCovarianceSet, Pair
from .model import JointLCAModel, SigmaGroup

log = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 500
    rel_tol: float = 1e-6
    d_inner_iters: int = 10
    d_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.d_inner_iters < 1:
            raise ValueError("d_inner_iters must be >= 1")


@dataclass
class FitTrace:
    objective: list[float] = field(default_factory=list)
    rel_change: list[float] = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "objective": list(self.objective),
            "rel_change": list(self.rel_change),
            "iterations_used": self.iterations_used,
            "converged": self.converged,
        }


# --- linear algebra helpers -------------------------------------------------


def _sign_fixed_svd(a: np.ndarray):
    """Thin SVD with each left singular vector's largest-|.| entry made positive."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if u.size:
        idx = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[idx, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        u = u * signs
        vt = vt * signs[:, None]
    return u, s, vt


def _polar(c: np.ndarray, current: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal-column maximizer of ``tr(V^T c)``.

    When ``c`` is rank deficient the maximizer is not unique; directions in
    its null space are filled from ``current`` (projected off the determined
    part and re-orthonormalized) so a converged loading does not drift.
    """
    p, r = c.shape
    if r == 0:
        return np.zeros((p, 0))
    u, s, vt = np.linalg.svd(c, full_matrices=False)
    if s[0] == 0.0:
        return u @ vt if current is None else current.copy()
    live = s > max(p, r) * _EPS * s[0]
    if live.all() or current is None:
        return u @ vt
    u_live, q_live = u[:, live], vt[live].T
    q_null = vt[~live].T
    proj = current @ q_null
    proj -= u_live @ (u_live.T @ proj)
    a, sp, bt = np.linalg.svd(proj, full_matrices=False)
    if sp.size and sp[-1] > 1e-8:
        fill = a @ bt
    else:
        fill = u[:, ~live]
    return u_live @ q_live.T + fill @ q_null.T


def orthogonal_procrustes(a: np.ndarray, b: np.ndarray, current: np.ndarray | None = None) -> np.ndarray:
    """Solve ``min ||a - V b||_F`` over V with orthonormal columns.

    Parameters
    ----------
    a : (p, m) array
    b : (r, m) array, r <= p
    current : (p, r) array, optional
        Used to complete the solution along null directions of ``a b^T``.

    Returns
    -------
    (p, r) array ``R Q^T`` from the SVD ``a b^T = R S Q^T``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    if b.shape[0] > a.shape[0]:
        raise ValueError(f"need r <= p, got r={b.shape[0]}, p={a.shape[0]}")
    if a.shape[1] < 1:
        raise ValueError("need at least one column")
    return _polar(a @ b.T, current)


def _pair_index(ccset: CrossCovarianceSet):
    pl = ccset.pair_list
    pi = np.array([i for i, _ in pl], dtype=np.int64)
    pj = np.array([j for _, j in pl], dtype=np.int64)
    return pi, pj


def _loading_target(ccset: CrossCovarianceSet, loadings, d: np.ndarray, i: int) -> np.ndarray:
    """``S_{i,-i} M_{i,-i}^T = sum_{j != i} w_ij S_ij V_j D_j D_i``."""
    c = np.zeros_like(loadings[i])
    for j in range(ccset.n_views):
        if j == i:
            continue
        c += ccset.weight(i, j) * (ccset.block(i, j) @ (loadings[j] * (d[i] * d[j])))
    return c


def _rotated_diag(ccset: CrossCovarianceSet, loadings) -> np.ndarray:
    out = np.empty((len(ccset.pair_list), loadings[0].shape[1]))
    for p, (i, j) in enumerate(ccset.pair_list):
        out[p] = np.einsum("ak,ak->k", loadings[i], ccset.pairs[(i, j)] @ loadings[j])
    return out


def _model(loadings, d, lam: float) -> JointLCAModel:
    return JointLCAModel(tuple(loadings), d, lam)


# --- public single-step operations --------------------------------------------


def update_loading(i: int, ccset: CrossCovarianceSet, model: JointLCAModel) -> np.ndarray:
    """Procrustes update of ``V_i`` with every other parameter held fixed."""
    if model.dims != ccset.dims:
        raise ValueError(f"model dims {model.dims} do not match {ccset.dims}")
    if model.n_views < 2:
        raise ValueError("need at least two views")
    c = _loading_target(ccset, model.loadings, model.scales, i)
    return _polar(c, model.loadings[i])


def rotated_diag(ccset: CrossCovarianceSet, model: JointLCAModel) -> dict[Pair, np.ndarray]:
    """Diagonals of ``V_i^T S_ij V_j`` per pair."""
    rows = _rotated_diag(ccset, model.loadings)
    return {pair: rows[p] for p, pair in enumerate(ccset.pair_list)}


def update_sigma_group(
    k: int,
    y: dict[Pair, float],
    weights: dict[Pair, float],
    lam: float,
) -> SigmaGroup:
    """Group-threshold step for component ``k``.

    ``y`` holds the rotated diagonals ``(S~_ij)_kk``. With
    ``Y = (sqrt(w_ij) y_ij)`` the shrunk vector is ``(1 - lam/||Y||)_+ Y``;
    the returned values are mapped back by ``1/sqrt(w_ij)``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    pairs = sorted(y)
    raw = np.array([y[p] for p in pairs], dtype=np.float64)
    scaled = np.sqrt([weights[p] for p in pairs]) * raw
    factor = _kernels.shrink_factors(scaled[:, None], float(lam))[0]
    return SigmaGroup(k, {p: float(factor * v) for p, v in zip(pairs, raw)})


def update_d_coordinate(
    i: int,
    k: int,
    sigma_hat: dict[Pair, float],
    d_current: np.ndarray,
    weights: dict[Pair, float] | None = None,
    weighted: bool = False,
) -> float:
    """Nonnegative least-squares value of ``d_ik`` given ``d_jk`` for j != i.

    ``d_current`` is the length-I vector of current ``d_{.k}``; ``k`` only
    labels the component. With ``weighted`` the pair weights enter both
    sums (refit form).
    """
    num = 0.0
    den = 0.0
    for j in range(len(d_current)):
        if j == i:
            continue
        pair = (min(i, j), max(i, j))
        w = weights[pair] if weighted else 1.0
        num += w * d_current[j] * sigma_hat[pair]
        den += w * d_current[j] * d_current[j]
    if num > 0.0 and den > 0.0:
        return num / den
    return 0.0


# --- initialization -------------------------------------------------------------


def _init_loadings(ccset: CrossCovarianceSet, p0: int, align: bool) -> list[np.ndarray]:
    loadings = []
    for i in range(ccset.n_views):
        stacked = np.hstack(
            [np.sqrt(ccset.weight(i, j)) * ccset.block(i, j) for j in range(ccset.n_views) if j != i]
        )
        u, _, _ = _sign_fixed_svd(stacked)
        loadings.append(u[:, :p0].copy())
    if align:
        # singular vectors of different views carry independent order and sign;
        # match each view's columns to view 0 so that paired diagonals line up
        ref = loadings[0]
        for i in range(1, ccset.n_views):
            m = ref.T @ ccset.block(0, i) @ loadings[i]
            _, cols = linear_sum_assignment(-np.abs(m))
            signs = np.sign(m[np.arange(p0), cols])
            signs[signs == 0] = 1.0
            loadings[i] = loadings[i][:, cols] * signs
    return loadings


def _init_scales(ccset: CrossCovarianceSet, loadings) -> np.ndarray:
    st = _rotated_diag(ccset, loadings)
    n_pairs = len(ccset.pair_list)
    common = np.sqrt(np.sum(np.maximum(st, 0.0), axis=0) / n_pairs)
    return np.tile(common, (ccset.n_views, 1))


def initialize(ccset: CrossCovarianceSet, p0: int | None = None, align: bool = True) -> JointLCAModel:
    """Starting point assuming every component is joint.

    ``V_i`` are the leading ``p0`` left singular vectors of the weighted
    concatenation ``[sqrt(w_ij) S_ij]_{j != i}``; all views share
    ``d_k = sqrt(mean_{i<j} max((V_i^T S_ij V_j)_kk, 0))``.
    """
    max_p0 = min(ccset.dims)
    if p0 is None:
        p0 = max_p0
    if not 1 <= p0 <= max_p0:
        raise ValueError(f"p0 must be in [1, {max_p0}], got {p0}")
    loadings = _init_loadings(ccset, p0, align)
    d = _init_scales(ccset, loadings)
    return _model(loadings, d, 0.0).sorted(ccset.weights)


def lambda_max(ccset: CrossCovarianceSet, init: JointLCAModel) -> float:
    """Largest group norm ``||Y_k||`` at ``init``: every group is zeroed at or above it."""
    st = _rotated_diag(ccset, init.loadings)
    y = np.sqrt(ccset.weight_vector())[:, None] * st
    return float(np.max(np.sqrt(np.sum(y * y, axis=0)), initial=0.0))


# --- main loop ----------------------------------------------------------------


def _recon_change(ccset, old_v, old_d, new_v, new_d) -> tuple[float, float]:
    """Weighted squared change of all pairwise reconstructions, and new total."""
    diff = 0.0
    total = 0.0
    for i, j in ccset.pair_list:
        w = ccset.weights[(i, j)]
        s_new = new_d[i] * new_d[j]
        s_old = old_d[i] * old_d[j]
        delta = (new_v[i] * s_new) @ new_v[j].T - (old_v[i] * s_old) @ old_v[j].T
        diff += w * float(np.sum(delta * delta))
        total += w * float(np.sum(s_new * s_new))
    return diff, total


def _surrogate(sq_norms, st, d, pi, pj, w, lam) -> float:
    """Objective from rotated diagonals, valid for orthonormal loadings.

    ``||S - V_i diag(s) V_j^T||^2 = ||S||^2 - 2 s.diag(S~) + ||s||^2``.
    """
    prod = d[pi] * d[pj]
    fid = np.sum(w * (sq_norms - 2.0 * np.sum(prod * st, axis=1) + np.sum(prod * prod, axis=1)))
    if lam > 0:
        fid += lam * np.sum(np.sqrt(np.sum(w[:, None] * prod * prod, axis=0)))
    return float(fid)


def _d_step_penalized(st, d, lam, opts, pi, pj, w):
    y = np.sqrt(w)[:, None] * st
    factor = _kernels.shrink_factors(y, float(lam))
    sigma_hat = st * factor
    cand, _ = _kernels.d_sweep(d, sigma_hat, pi, pj, np.ones_like(w), opts.d_inner_iters, opts.d_tol)
    # the product-form projection of sigma_hat is not a minimizer of the
    # surrogate in d, so keep a component's old scales if it would increase
    old = _kernels.component_losses(d, st, pi, pj, w, 2.0 * lam)
    new = _kernels.component_losses(cand, st, pi, pj, w, 2.0 * lam)
    accept = new <= old
    out = d.copy()
    out[:, accept] = cand[:, accept]
    return out


def _d_step_refit(st, d, opts, pi, pj, w):
    out, _ = _kernels.d_sweep(d, st, pi, pj, w, opts.d_inner_iters, opts.d_tol)
    return out


def _alternate(ccset, model, lam, opts, penalized):
    """Run sweeps until the reconstructions settle.

    Components whose scales are all zero can never revive (their coordinate
    updates have a zero numerator), so they leave the working set; their
    columns are re-orthogonalized against the live ones once at the end.
    """
    opts = opts or SolverOptions()
    pi, pj = _pair_index(ccset)
    w = ccset.weight_vector()
    sq_norms = np.array([float(np.sum(ccset.pairs[p] ** 2)) for p in ccset.pair_list])
    penalty = 2.0 * lam if penalized else 0.0

    index = np.arange(model.r)
    loadings = [np.array(v) for v in model.loadings]
    d = np.array(model.scales)
    retired: dict[int, list[np.ndarray]] = {}

    trace = FitTrace()
    st = _rotated_diag(ccset, loadings)
    trace.objective.append(_surrogate(sq_norms, st, d, pi, pj, w, penalty))
    rel = np.inf
    for it in range(1, opts.max_iters + 1):
        old_v = loadings
        old_d = d
        if penalized:
            d = _d_step_penalized(st, d, lam, opts, pi, pj, w)
        else:
            d = _d_step_refit(st, d, opts, pi, pj, w)
        live = np.any(d > 0, axis=0)
        if not live.all():
            for pos in np.flatnonzero(~live):
                retired[int(index[pos])] = [v[:, pos].copy() for v in loadings]
            index = index[live]
            loadings = [v[:, live] for v in loadings]
            d = d[:, live]
        loadings = list(loadings)
        for i in range(ccset.n_views):
            loadings[i] = _polar(_loading_target(ccset, loadings, d, i), loadings[i])
        st = _rotated_diag(ccset, loadings)
        trace.objective.append(_surrogate(sq_norms, st, d, pi, pj, w, penalty))
        diff, total = _recon_change(ccset, old_v, old_d, loadings, d)
        rel = diff / (total + 1e-12)
        trace.rel_change.append(rel)
        trace.iterations_used = it
        if rel < opts.rel_tol:
            trace.converged = True
            break
    if not trace.converged:
        log.debug("no convergence after %d sweeps (last rel change %.3g)", opts.max_iters, rel)

    full_v, full_d = _reassemble(model.r, index, loadings, d, retired)
    fitted = _model(full_v, full_d, lam).sorted(ccset.weights)
    return fitted, trace


def _reassemble(r, index, loadings, d, retired):
    n_views = len(loadings)
    full_d = np.zeros((n_views, r))
    full_d[:, index] = d
    full_v = []
    dead = sorted(retired)
    for i in range(n_views):
        v = np.zeros((loadings[i].shape[0], r))
        v[:, index] = loadings[i]
        if dead:
            last = np.column_stack([retired[k][i] for k in dead])
            v[:, dead] = _orthonormal_complement_fill(loadings[i], last)
        full_v.append(v)
    return full_v, full_d


def _orthonormal_complement_fill(live: np.ndarray, stale: np.ndarray) -> np.ndarray:
    """Columns closest to ``stale`` that are orthonormal and orthogonal to ``live``."""
    rest = stale - live @ (live.T @ stale)
    a, s, bt = np.linalg.svd(rest, full_matrices=False)
    if s.size and s[-1] > 1e-8:
        return a @ bt
    return _extend_basis(live, rest, stale.shape[1])


def _extend_basis(v: np.ndarray, candidates: np.ndarray, count: int) -> np.ndarray:
    """``count`` orthonormal columns orthogonal to ``v``, taken greedily from ``candidates``.

    Gram-Schmidt (applied twice per column) in candidate order; coordinate
    axes fill in if the candidates run out.
    """
    p = v.shape[0]
    basis = [v[:, k] for k in range(v.shape[1])]
    picked = []
    pool = np.hstack([candidates, np.eye(p)])
    for col in pool.T:
        x = col.copy()
        for _ in range(2):
            for b in basis:
                x -= (b @ x) * b
        norm = np.linalg.norm(x)
        if norm > 1e-8:
            x /= norm
            basis.append(x)
            picked.append(x)
            if len(picked) == count:
                break
    return np.column_stack(picked) if picked else np.zeros((p, 0))


def fit_penalized(
    ccset: CrossCovarianceSet,
    lam: float,
    p0: int | None = None,
    opts: SolverOptions | None = None,
    init: JointLCAModel | None = None,
) -> tuple[JointLCAModel, FitTrace]:
    """Fit the group-penalized model at ``lam`` from the standard initialization.

    ``init`` may be passed to reuse a precomputed :func:`initialize` result.
    Components of the result are sorted by descending weighted group norm;
    the number with nonzero scales is the rank estimate.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if init is None:
        init = initialize(ccset, p0)
    return _alternate(ccset, init, float(lam), opts, penalized=True)


def refit(
    ccset: CrossCovarianceSet,
    r: int,
    init: JointLCAModel,
    opts: SolverOptions | None = None,
) -> tuple[JointLCAModel, FitTrace]:
    """Unpenalized fit at rank ``r`` starting from the top ``r`` components of ``init``.

    If ``init`` has fewer than ``r`` components with nonzero scales, the
    missing columns come from a fresh :func:`initialize`, projected off the
    retained ones.
    """
    if r < 1:
        raise ValueError("refit rank must be >= 1")
    if r > min(ccset.dims):
        raise ValueError(f"refit rank {r} exceeds min view dimension {min(ccset.dims)}")
    start = init.sorted(ccset.weights)
    n_live = int(np.count_nonzero(start.group_norms() > 0))
    keep = min(n_live, r)
    loadings = [v[:, :keep] for v in start.loadings]
    d = start.scales[:, :keep]
    if keep < r:
        fresh = initialize(ccset)
        extra = [_extend_basis(v, fresh.loadings[i], r - keep) for i, v in enumerate(loadings)]
        loadings = [np.hstack([v, e]) for v, e in zip(loadings, extra)]
        new_d = _init_scales(ccset, extra)
        d = np.hstack([d, new_d])
    model = _model(loadings, d, 0.0)
    return _alternate(ccset, model, 0.0, opts, penalized=False)
