"""Fitted model container and evaluation of fidelity, penalty and objective."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import CrossCovarianceSet, Pair

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class SigmaGroup:
    k: int
    values: dict[Pair, float]


@dataclass(frozen=True)
class JointLCAModel:
    """Per-view loadings ``V_i`` (p_i x r) and nonnegative scales ``d_ik`` (I x r)."""

    loadings: tuple[np.ndarray, ...]
    scales: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        loadings = tuple(np.array(v, dtype=np.float64, copy=True) for v in self.loadings)
        scales = np.array(self.scales, dtype=np.float64, copy=True)
        if scales.ndim == 1:
            scales = scales[:, None]
        if scales.ndim != 2 or scales.shape[0] != len(loadings):
            raise ValueError(
                f"scales must have shape (I, r) with I={len(loadings)}, got {scales.shape}"
            )
        r = scales.shape[1]
        for i, v in enumerate(loadings):
            if v.ndim != 2 or v.shape[1] != r:
                raise ValueError(f"loading {i} has shape {v.shape}, expected (p_{i}, {r})")
        if np.any(scales < 0) or not np.all(np.isfinite(scales)):
            raise ValueError("scale entries must be finite and nonnegative")
        for v in loadings:
            v.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def r(self) -> int:
        return self.scales.shape[1]

    @property
    def n_views(self) -> int:
        return len(self.loadings)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(v.shape[0] for v in self.loadings)

    @property
    def zero_rank(self) -> bool:
        """Explicit marker for the empty model returned when no component survives."""
        return self.r == 0

    def check_orthonormal(self, tol: float = ORTHO_TOL) -> bool:
        eye = np.eye(self.r)
        return all(np.max(np.abs(v.T @ v - eye), initial=0.0) <= tol for v in self.loadings)

    def sigma(self) -> dict[Pair, np.ndarray]:
        """``sigma_ijk = d_ik d_jk`` for every pair, as length-r vectors."""
        d = self.scales
        return {(i, j): d[i] * d[j] for i in range(self.n_views) for j in range(i + 1, self.n_views)}

    def sigma_group(self, k: int) -> SigmaGroup:
        return SigmaGroup(k, {pair: float(s[k]) for pair, s in self.sigma().items()})

    def group_norms(self, weights: Mapping[Pair, float] | None = None) -> np.ndarray:
        """``sqrt(sum_{i<j} w_ij sigma_ijk^2)`` per component (unit weights when omitted)."""
        total = np.zeros(self.r)
        for pair, s in self.sigma().items():
            w = 1.0 if weights is None else weights[pair]
            total += w * s * s
        return np.sqrt(total)

    def truncate(self, r: int) -> "JointLCAModel":
        return JointLCAModel(tuple(v[:, :r] for v in self.loadings), self.scales[:, :r], self.lam)

    def permute(self, order: Sequence[int]) -> "JointLCAModel":
        order = np.asarray(order, dtype=int)
        return JointLCAModel(tuple(v[:, order] for v in self.loadings), self.scales[:, order], self.lam)

    def sorted(self, weights: Mapping[Pair, float] | None = None) -> "JointLCAModel":
        """Components in descending weighted group norm; ties keep their current order."""
        norms = self.group_norms(weights)
        return self.permute(np.argsort(-norms, kind="stable"))

    def with_lam(self, lam: float) -> "JointLCAModel":
        return JointLCAModel(self.loadings, self.scales, lam)

    @classmethod
    def empty(cls, dims: Sequence[int], lam: float = 0.0) -> "JointLCAModel":
        return cls(tuple(np.zeros((p, 0)) for p in dims), np.zeros((len(dims), 0)), lam)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "lambda": self.lam,
            "zero_rank": self.zero_rank,
            "dims": list(self.dims),
            "loadings": [v.tolist() for v in self.loadings],
            "scales": self.scales.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "JointLCAModel":
        dims = payload["dims"]
        r = int(payload["r"])
        loadings = tuple(
            np.array(v, dtype=np.float64).reshape(p, r) for v, p in zip(payload["loadings"], dims)
        )
        scales = np.array(payload["scales"], dtype=np.float64).reshape(len(dims), r)
        return cls(loadings, scales, payload.get("lambda", 0.0))

    def to_json(self, path: str | Path | None = None) -> str:
        # json emits floats with repr(), which round-trips binary64 exactly
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "JointLCAModel":
        text = source
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            text = Path(source).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


def _check_compatible(model: JointLCAModel, ccset: CrossCovarianceSet) -> None:
    if model.dims != ccset.dims:
        raise ValueError(f"model dims {model.dims} do not match cross-covariance dims {ccset.dims}")


def reconstruct_pair(model: JointLCAModel, i: int, j: int) -> np.ndarray:
    """``V_i D_i D_j V_j^T``."""
    n_views = model.n_views
    if not (0 <= i < n_views and 0 <= j < n_views) or i == j:
        raise IndexError(f"invalid view pair ({i}, {j}) for a {n_views}-view model")
    s = model.scales[i] * model.scales[j]
    return (model.loadings[i] * s) @ model.loadings[j].T


def fidelity(
    model: JointLCAModel,
    ccset: CrossCovarianceSet,
    weights: Mapping[Pair, float] | None = None,
) -> float:
    """Weighted squared loss ``sum_{i<j} w_ij ||S_ij - V_i D_i D_j V_j^T||_F^2``."""
    _check_compatible(model, ccset)
    weights = ccset.weights if weights is None else weights
    total = 0.0
    for i, j in ccset.pair_list:
        resid = ccset.pairs[(i, j)] - reconstruct_pair(model, i, j)
        total += weights[(i, j)] * float(np.sum(resid * resid))
    return total


def penalty_value(model: JointLCAModel, weights: Mapping[Pair, float]) -> float:
    return float(np.sum(model.group_norms(weights)))


def objective(model: JointLCAModel, ccset: CrossCovarianceSet, lam: float) -> float:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    value = fidelity(model, ccset)
    if lam > 0:
        value += lam * penalty_value(model, ccset.weights)
    return value


def estimated_rank(model: JointLCAModel, tol: float | None = None) -> int:
    """Number of components whose group norm ``sqrt(sum sigma_ijk^2)`` exceeds ``tol``.

    The default tolerance is relative: 1e-8 times the largest group norm.
    """
    if model.r == 0:
        return 0
    norms = model.group_norms()
    if tol is None:
        tol = 1e-8 * float(norms.max())
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.count_nonzero(norms > tol))
