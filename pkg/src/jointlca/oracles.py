"""Brute-force verifiers for solver sub-steps and the rank-one equivalences.

Nothing here calls solver code: the oracles use power iteration, block
eigen-ascent and arbitrary-precision golden-section search, so they can
serve as independent references in tests and diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np

ORACLE_MAX_DIM = 8


def tight_solver_options():
    """Solver settings for comparisons at converged points (identities hold to ~1e-12)."""
    from .solver import SolverOptions

    return SolverOptions(max_iters=20_000, rel_tol=1e-24, d_inner_iters=200, d_tol=1e-15)


@dataclass(frozen=True)
class OracleReport:
    name: str
    instance: str
    oracle_value: float
    solver_value: float
    discrepancy: float
    tolerance: float
    passed: bool

    def __post_init__(self):
        if self.passed != (self.discrepancy <= self.tolerance):
            raise ValueError("passed must equal discrepancy <= tolerance")

    @classmethod
    def compare(cls, name, instance, oracle_value, solver_value, discrepancy, tolerance) -> "OracleReport":
        discrepancy = float(discrepancy)
        return cls(name, instance, float(oracle_value), float(solver_value), discrepancy,
                   float(tolerance), bool(discrepancy <= tolerance))

    def to_dict(self) -> dict:
        return asdict(self)


def _sign_normalize(v: np.ndarray) -> float:
    """Sign that makes the largest-magnitude entry of ``v`` positive."""
    return 1.0 if v[np.argmax(np.abs(v))] >= 0 else -1.0


# --- two views: top singular triple -----------------------------------------


def diag_cca_r1_oracle(
    s12: np.ndarray,
    max_iter: int = 100_000,
    tol: float = 1e-15,
    certificate: int = 10_000,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Maximize ``v1^T S12 v2`` over unit vectors by alternating power iteration.

    The result is checked against ``certificate`` random unit pairs, none of
    which may exceed the returned value. ``v1`` is sign-normalized so its
    largest-magnitude entry is positive.
    """
    s = np.asarray(s12, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("S12 must be a matrix")
    if not np.any(s):
        raise ValueError("S12 is zero; the maximizer is undefined")
    rng = np.random.default_rng(seed)
    # start from the largest column plus a random kick so no direction is missed
    v2 = s.T @ s[:, np.argmax(np.sum(s * s, axis=0))] + 1e-3 * rng.standard_normal(s.shape[1])
    v2 /= np.linalg.norm(v2)
    value = 0.0
    for _ in range(max_iter):
        v1 = s @ v2
        v1 /= np.linalg.norm(v1)
        v2_new = s.T @ v1
        new_value = float(np.linalg.norm(v2_new))
        v2_new /= new_value
        step = float(np.linalg.norm(v2_new - v2))
        v2 = v2_new
        converged = abs(new_value - value) <= tol * new_value and step <= 1e-12
        value = new_value
        if converged:
            break
    v1 = s @ v2
    v1 /= np.linalg.norm(v1)
    value = float(v1 @ s @ v2)
    sign = _sign_normalize(v1)
    v1, v2 = sign * v1, sign * v2

    if certificate:
        a = rng.standard_normal((certificate, s.shape[0]))
        b = rng.standard_normal((certificate, s.shape[1]))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        best = float(np.max(np.einsum("ka,ab,kb->k", a, s, b)))
        if best > value * (1 + 1e-10):
            raise RuntimeError(f"power iteration value {value} beaten by a random pair ({best})")
    return v1, v2, value


# --- three views: sum of squared covariances ---------------------------------


def _ssq_value(blocks, v) -> float:
    return float(sum((v[i] @ s @ v[j]) ** 2 for (i, j), s in blocks.items()))


def ssqcov_r1_oracle(
    s12: np.ndarray,
    s13: np.ndarray,
    s23: np.ndarray,
    restarts: int = 100,
    max_iter: int = 5000,
    tol: float = 1e-15,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Maximize ``sum_{i<j} <S_ij, v_i v_j^T>^2`` over unit vectors.

    Block ascent: with the other two vectors fixed the objective is the
    quadratic form ``v_i^T (sum_j a_j a_j^T) v_i``, ``a_j = S_ij v_j``,
    whose maximizer is the top eigenvector. Each run is monotone; the best
    of ``restarts`` random starts is returned. ``v1`` is sign-normalized and
    ``v2``, ``v3`` are signed so that ``<S_12, v1 v2^T>`` and
    ``<S_13, v1 v3^T>`` are nonnegative.
    """
    blocks = {(0, 1): np.asarray(s12, float), (0, 2): np.asarray(s13, float), (1, 2): np.asarray(s23, float)}
    dims = (blocks[(0, 1)].shape[0], blocks[(0, 1)].shape[1], blocks[(0, 2)].shape[1])
    if blocks[(0, 2)].shape[0] != dims[0] or blocks[(1, 2)].shape != (dims[1], dims[2]):
        raise ValueError(f"inconsistent block shapes {[b.shape for b in blocks.values()]}")
    if max(dims) > ORACLE_MAX_DIM:
        raise ValueError(f"oracle dimension cap is {ORACLE_MAX_DIM}, got dims {dims}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    def partner(i, j):
        return blocks[(i, j)] if i < j else blocks[(j, i)].T

    rng = np.random.default_rng(seed)
    best_v, best_val = None, -np.inf
    for _ in range(restarts):
        v = [rng.standard_normal(p) for p in dims]
        v = [x / np.linalg.norm(x) for x in v]
        value = _ssq_value(blocks, v)
        for _ in range(max_iter):
            for i in range(3):
                a = np.column_stack([partner(i, j) @ v[j] for j in range(3) if j != i])
                m = a @ a.T
                if not np.any(m):
                    continue
                _, vecs = np.linalg.eigh(m)
                v[i] = vecs[:, -1]
            new_value = _ssq_value(blocks, v)
            done = new_value - value <= tol * max(new_value, 1.0)
            value = new_value
            if done:
                break
        if value > best_val:
            best_val, best_v = value, [x.copy() for x in v]

    v1, v2, v3 = best_v
    v1 = _sign_normalize(v1) * v1
    if v1 @ blocks[(0, 1)] @ v2 < 0:
        v2 = -v2
    if v1 @ blocks[(0, 2)] @ v3 < 0:
        v3 = -v3
    return v1, v2, v3, float(best_val)


def stationary_scales(inner: dict[tuple[int, int], float]) -> np.ndarray | None:
    """Solve ``d_i d_j = c_ij`` for three views; None unless every ``c_ij > 0``."""
    c12, c13, c23 = inner[(0, 1)], inner[(0, 2)], inner[(1, 2)]
    if min(c12, c13, c23) <= 0:
        return None
    return np.sqrt([c12 * c13 / c23, c12 * c23 / c13, c13 * c23 / c12])


# --- group prox ---------------------------------------------------------------


def prox_oracle(y: Sequence[float], lam: float, dps: int = 50) -> np.ndarray:
    """Group-lasso prox by golden-section search along the ray of ``y``.

    The minimizer of ``1/2 ||y - s||^2 + lam ||s||`` is ``s = t y/||y||``
    with ``t`` minimizing ``1/2 (||y|| - t)^2 + lam t`` on ``[0, ||y||]``;
    the 1-d search runs in ``dps``-digit arithmetic.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    with mpmath.workdps(dps):
        ym = [mpmath.mpf(float(x)) for x in y]
        norm = mpmath.sqrt(mpmath.fsum(x * x for x in ym))
        if norm == 0:
            return np.zeros_like(y)
        lam_m = mpmath.mpf(float(lam))

        def f(t):
            return (norm - t) ** 2 / 2 + lam_m * t

        ratio = (mpmath.sqrt(5) - 1) / 2
        lo, hi = mpmath.mpf(0), norm
        a = hi - ratio * (hi - lo)
        b = lo + ratio * (hi - lo)
        fa, fb = f(a), f(b)
        stop = norm * mpmath.mpf(10) ** (-(dps - 10))
        while hi - lo > stop:
            if fa <= fb:
                hi, b, fb = b, a, fa
                a = hi - ratio * (hi - lo)
                fa = f(a)
            else:
                lo, a, fa = a, b, fb
                b = lo + ratio * (hi - lo)
                fb = f(b)
        t = (lo + hi) / 2
        # compare with the endpoint: the minimum may sit exactly at t = 0
        if f(mpmath.mpf(0)) <= f(t):
            t = mpmath.mpf(0)
        return np.array([float(t * x / norm) for x in ym])


# --- batch diagnostics ----------------------------------------------------------


def _principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return float(np.arccos(min(1.0, abs(float(a @ b)))))


def check_prox(n_pairs: int = 50, seed: int = 0, tol: float = 1e-8) -> list[OracleReport]:
    """Compare ``update_sigma_group`` with :func:`prox_oracle` on random groups.

    Every fifth instance places the penalty exactly at the group norm.
    """
    from .solver import update_sigma_group

    rng = np.random.default_rng(seed)
    reports = []
    for t in range(n_pairs):
        n_views = int(rng.integers(2, 6))
        pairs = [(i, j) for i in range(n_views) for j in range(i + 1, n_views)]
        raw = rng.normal(size=len(pairs))
        w = rng.uniform(0.2, 3.0, size=len(pairs))
        big_y = np.sqrt(w) * raw
        norm = float(np.linalg.norm(big_y))
        lam = norm if t % 5 == 0 else float(rng.uniform(0, 1.5 * norm))
        group = update_sigma_group(0, dict(zip(pairs, raw)), dict(zip(pairs, w)), lam)
        solver = np.sqrt(w) * np.array([group.values[p] for p in pairs])
        oracle = prox_oracle(big_y, lam)
        reports.append(OracleReport.compare(
            "prox", f"#{t} groups={len(pairs)} lam/||Y||={lam / norm:.4f}",
            np.linalg.norm(oracle), np.linalg.norm(solver), np.linalg.norm(oracle - solver), tol,
        ))
    return reports


def check_diag_cca(n_instances: int = 10, seed: int = 0, opts=None) -> list[OracleReport]:
    """Rank-one two-view refit against the top singular triple (5 x 4 instances)."""
    from .data import CrossCovarianceSet
    from .solver import initialize, refit

    rng = np.random.default_rng(seed)
    reports = []
    for t in range(n_instances):
        s = rng.normal(size=(5, 4))
        v1, v2, value = diag_cca_r1_oracle(s, seed=t)
        cc = CrossCovarianceSet.from_blocks({(0, 1): s}, weights="unit")
        model, _ = refit(cc, 1, initialize(cc), opts)
        d1d2 = float(model.scales[0, 0] * model.scales[1, 0])
        angle = max(_principal_angle(model.loadings[0][:, 0], v1), _principal_angle(model.loadings[1][:, 0], v2))
        reports.append(OracleReport.compare("diag_cca_value", f"#{t} 5x4", value, d1d2, abs(d1d2 - value), 1e-5))
        reports.append(OracleReport.compare("diag_cca_angle", f"#{t} 5x4", 0.0, angle, angle, 1e-2))
    return reports


def check_stationarity(n_instances: int = 5, seed: int = 0, opts=None) -> list[OracleReport]:
    """Three-view rank-one refit: ``d_i d_j`` against ``<S_ij, v_i v_j^T>``."""
    from .data import CrossCovarianceSet
    from .solver import initialize, refit

    rng = np.random.default_rng(seed)
    reports = []
    for t in range(n_instances):
        dims = tuple(int(p) for p in rng.integers(3, 7, size=3))
        # a planted rank-one signal keeps the optimal inner products positive
        u = [rng.normal(size=p) for p in dims]
        u = [x / np.linalg.norm(x) for x in u]
        blocks = {
            (i, j): 3.0 * np.outer(u[i], u[j]) + 0.3 * rng.normal(size=(dims[i], dims[j]))
            for i in range(3) for j in range(i + 1, 3)
        }
        cc = CrossCovarianceSet.from_blocks(blocks, weights="unit")
        model, _ = refit(cc, 1, initialize(cc), opts)
        v = [m[:, 0] for m in model.loadings]
        d = model.scales[:, 0]
        worst = max(abs(d[i] * d[j] - float(v[i] @ s @ v[j])) for (i, j), s in blocks.items())
        reports.append(OracleReport.compare("stationarity", f"#{t} dims={dims}", 0.0, worst, worst, 1e-6))
    return reports


def run_oracle_checks(seed: int = 0, opts=None) -> list[OracleReport]:
    opts = tight_solver_options() if opts is None else opts
    return check_prox(seed=seed) + check_diag_cca(seed=seed, opts=opts) + check_stationarity(seed=seed, opts=opts)


def write_report(reports: Sequence[OracleReport], path: str | Path) -> None:
    payload = {
        "passed": all(r.passed for r in reports),
        "n_checks": len(reports),
        "n_failed": sum(not r.passed for r in reports),
        "checks": [r.to_dict() for r in reports],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
