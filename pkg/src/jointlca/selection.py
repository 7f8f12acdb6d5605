"""Penalty grid, K-fold cross-validation with the one-standard-error rule, and
the full rank-selection pipeline (select lambda, read the rank, refit)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import CrossCovarianceSet, MultiviewDataset, Pair, cross_covariances
from .model import JointLCAModel, estimated_rank, fidelity
from .solver import SolverOptions, fit_penalized, initialize, lambda_max, refit

GRID_RATIO = 1e-3


@dataclass(frozen=True)
class CvPlan:
    K: int
    fold_assignment: np.ndarray
    seed: int

    def test_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignment == k)

    def train_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignment != k)


@dataclass
class CvResult:
    lambdas: np.ndarray
    mean_score: np.ndarray
    se: np.ndarray
    fold_scores: np.ndarray
    chosen_lambda: float
    chosen_rank: int

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "mean_score": self.mean_score.tolist(),
            "se": self.se.tolist(),
            "fold_scores": self.fold_scores.tolist(),
            "chosen_lambda": self.chosen_lambda,
            "chosen_rank": self.chosen_rank,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def lambda_grid(
    ccset: CrossCovarianceSet,
    p0: int | None = None,
    grid_size: int = 50,
    init: JointLCAModel | None = None,
) -> np.ndarray:
    """Log-spaced decreasing grid from ``lambda_max`` down to ``lambda_max * 1e-3``."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    init = initialize(ccset, p0) if init is None else init
    top = lambda_max(ccset, init)
    if top <= 0:
        raise ValueError("all rotated cross-covariance groups are zero; no penalty grid")
    grid = np.geomspace(top, top * GRID_RATIO, grid_size)
    grid[0] = top
    return grid


def split_folds(n: int, K: int, seed: int = 0) -> CvPlan:
    """Random balanced assignment of n rows to K folds (sizes differ by at most 1)."""
    if K < 2:
        raise ValueError("need K >= 2 folds")
    if n < K:
        raise ValueError(f"cannot split {n} samples into {K} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % K
    return CvPlan(K, assignment, seed)


def cv_criterion(
    train_model: JointLCAModel,
    test_ccset: CrossCovarianceSet,
    weights: Mapping[Pair, float],
) -> float:
    """``sum_{i<j} w_ij ||V_i D_i D_j V_j^T - S_ij^(test)||_F^2``."""
    return fidelity(train_model, test_ccset, weights)


def one_se_select(mean_score: Sequence[float], se: Sequence[float], lambdas: Sequence[float]) -> float:
    """Largest lambda whose mean score is within one SE of the minimum."""
    mean_score = np.asarray(mean_score, dtype=float)
    se = np.asarray(se, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if mean_score.size == 0:
        raise ValueError("empty grid")
    if not (mean_score.shape == se.shape == lambdas.shape):
        raise ValueError("mean_score, se and lambdas must have equal length")
    best = int(np.argmin(mean_score))
    threshold = mean_score[best] + se[best]
    eligible = mean_score <= threshold
    return float(np.max(lambdas[eligible]))


def _fold_sets(dataset: MultiviewDataset, plan: CvPlan, k: int):
    train = dataset.subset_rows(plan.train_rows(k)).centered()
    test = dataset.subset_rows(plan.test_rows(k)).centered()
    # per-sample scaling keeps train reconstructions and test blocks comparable
    train_cc = cross_covariances(train, "by_n")
    test_cc = cross_covariances(test, "by_n", weights="unit")
    return train_cc, test_cc


def cross_validate(
    dataset: MultiviewDataset,
    lambdas: Sequence[float],
    p0: int | None = None,
    K: int = 5,
    seed: int = 0,
    opts: SolverOptions | None = None,
    weights: Mapping[Pair, float] | None = None,
    center: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fold scores for each lambda; returns (fold_scores[K, L], mean, se)."""
    lambdas = np.asarray(lambdas, dtype=float)
    if center:
        dataset = dataset.centered()
    if weights is None:
        weights = cross_covariances(dataset, "by_n").weights
    plan = split_folds(dataset.n, K, seed)
    scores = np.empty((K, lambdas.size))
    for k in range(K):
        train_cc, test_cc = _fold_sets(dataset, plan, k)
        init = initialize(train_cc, p0)
        for l, lam in enumerate(lambdas):
            model, _ = fit_penalized(train_cc, lam, p0, opts, init=init)
            scores[k, l] = cv_criterion(model, test_cc, weights)
    mean = scores.mean(axis=0)
    se = scores.std(axis=0, ddof=1) / np.sqrt(K)
    return scores, mean, se


def select_rank(
    dataset: MultiviewDataset,
    p0: int | None = None,
    K: int = 5,
    grid_size: int = 50,
    opts: SolverOptions | None = None,
    seed: int = 0,
    normalization: str = "none",
    center: bool = True,
) -> tuple[int, JointLCAModel, CvResult]:
    """Cross-validated rank selection followed by an unpenalized refit.

    Returns ``(r_hat, model, cv)``. When no component survives at the chosen
    lambda the model is empty (``model.zero_rank`` is True).
    """
    data = dataset.centered() if center else dataset
    full_cc = cross_covariances(data, normalization)
    init = initialize(full_cc, p0)
    lambdas = lambda_grid(full_cc, p0, grid_size, init=init)
    cv_weights = cross_covariances(data, "by_n").weights
    scores, mean, se = cross_validate(data, lambdas, p0, K, seed, opts, cv_weights, center=False)
    lam_star = one_se_select(mean, se, lambdas)

    penalized, _ = fit_penalized(full_cc, lam_star, p0, opts, init=init)
    r_hat = estimated_rank(penalized)
    if r_hat == 0:
        model = JointLCAModel.empty(full_cc.dims, lam_star)
    else:
        model, _ = refit(full_cc, r_hat, penalized, opts)
    cv = CvResult(lambdas, mean, se, scores, lam_star, r_hat)
    return r_hat, model, cv
