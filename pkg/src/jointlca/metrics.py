"""Evaluation metrics and the simulation benchmark harness."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .selection import select_rank
from .simulation import SimConfig, generate
from .solver import SolverOptions

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "cell",
    "config_id",
    "replication",
    "seed",
    "true_rank",
    "estimated_rank",
    "correct",
    "subspace_error",
    "lambda_chosen",
    "status",
    "error",
)


def subspace_error(estimates: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """Mean scaled projection distance ``sum_i ||P_i - P^_i||_F^2 / (I ||P_i||_F^2)``.

    Projections are formed from the given columns as is, so an estimate may
    have more or fewer columns than the truth (including none at all).
    """
    if len(estimates) != len(truths):
        raise ValueError(f"got {len(estimates)} estimates for {len(truths)} views")
    if not truths:
        raise ValueError("need at least one view")
    total = 0.0
    for i, (vh, v) in enumerate(zip(estimates, truths)):
        vh = np.asarray(vh, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if vh.ndim != 2 or v.ndim != 2:
            raise ValueError(f"view {i}: loadings must be 2-d")
        if vh.shape[0] != v.shape[0]:
            raise ValueError(f"view {i}: estimate has {vh.shape[0]} rows, truth has {v.shape[0]}")
        p_true = v @ v.T
        denom = float(np.sum(p_true * p_true))
        if denom == 0.0:
            raise ValueError(f"view {i}: true loading matrix is zero")
        diff = p_true - vh @ vh.T
        total += float(np.sum(diff * diff)) / denom
    return total / len(truths)


@dataclass(frozen=True)
class BenchmarkRecord:
    cell: int
    config_id: str
    replication: int
    seed: int
    true_rank: int
    estimated_rank: int = -1
    subspace_error: float = float("nan")
    lambda_chosen: float = float("nan")
    wall_time: float = 0.0
    error: str = ""

    def __post_init__(self):
        if self.true_rank < 0:
            raise ValueError("ranks must be nonnegative")
        if self.ok and (self.estimated_rank < 0 or not self.subspace_error >= 0):
            raise ValueError("a successful record needs a nonnegative rank and error")

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def correct(self) -> bool:
        return self.ok and self.estimated_rank == self.true_rank

    def row(self) -> dict:
        return {
            "cell": self.cell,
            "config_id": self.config_id,
            "replication": self.replication,
            "seed": self.seed,
            "true_rank": self.true_rank,
            "estimated_rank": self.estimated_rank if self.ok else "",
            "correct": int(self.correct),
            "subspace_error": repr(self.subspace_error) if self.ok else "",
            "lambda_chosen": repr(self.lambda_chosen) if self.ok else "",
            "status": "ok" if self.ok else "failed",
            "error": self.error,
        }


def rank_accuracy(records: Sequence[BenchmarkRecord]) -> float:
    """Fraction of records whose estimated rank equals the true rank.

    Failed replications count as misses.
    """
    if len(records) == 0:
        raise ValueError("no records")
    return sum(r.correct for r in records) / len(records)


@dataclass(frozen=True)
class BenchmarkSettings:
    """Per-replication pipeline settings shared by every cell.

    ``noiseless`` and ``orthogonal_individual`` are the generation test hooks.
    """

    K: int = 5
    grid_size: int = 50
    p0: int | None = None
    solver: SolverOptions = SolverOptions()
    noiseless: bool = False
    orthogonal_individual: bool = False


def replication_seed(master_seed: int, cell: int, rep: int) -> int:
    """Independent 63-bit seed for one (cell, replication) from the master seed."""
    state = np.random.SeedSequence([int(master_seed), int(cell), int(rep)]).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def _cv_seed(seed: int) -> int:
    # a separate stream for the fold split, so it is not correlated with the data draw
    return int(np.random.SeedSequence([int(seed), 1]).generate_state(1, np.uint32)[0])


def run_replication(config: SimConfig, cell: int, rep: int, seed: int, settings: BenchmarkSettings) -> BenchmarkRecord:
    """Simulate, select the rank, refit and score one replication.

    Exceptions are caught and stored on the record.
    """
    start = time.perf_counter()
    base = dict(cell=cell, config_id=config.label, replication=rep, seed=seed, true_rank=config.r0)
    try:
        dataset, truth = generate(
            replace(config, seed=seed),
            noiseless=settings.noiseless,
            orthogonal_individual=settings.orthogonal_individual,
        )
        r_hat, model, cv = select_rank(
            dataset, p0=settings.p0, K=settings.K, grid_size=settings.grid_size, opts=settings.solver,
            seed=_cv_seed(seed),
        )
        err = subspace_error(model.loadings, truth.V)
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        log.warning("cell %d rep %d failed: %s", cell, rep, exc)
        return BenchmarkRecord(**base, wall_time=time.perf_counter() - start, error=f"{type(exc).__name__}: {exc}")
    return BenchmarkRecord(
        **base,
        estimated_rank=r_hat,
        subspace_error=err,
        lambda_chosen=cv.chosen_lambda,
        wall_time=time.perf_counter() - start,
    )


def run_benchmark(
    grid: Sequence[SimConfig],
    replications: int,
    master_seed: int = 0,
    settings: BenchmarkSettings | None = None,
    threads: int = 1,
) -> tuple[list[BenchmarkRecord], dict]:
    """Run every (cell, replication) and summarize.

    Records come back ordered by cell then replication regardless of the
    thread count, and each replication's seed depends only on
    ``(master_seed, cell, rep)``, so results do not depend on scheduling.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if len(grid) == 0:
        raise ValueError("empty benchmark grid")
    settings = settings or BenchmarkSettings()
    jobs = [
        (config, c, rep, replication_seed(master_seed, c, rep))
        for c, config in enumerate(grid)
        for rep in range(replications)
    ]
    if threads == 1:
        records = [run_replication(*job, settings) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda job: run_replication(*job, settings), jobs))
    return records, summarize(grid, records, master_seed, replications)


def _quartiles(values: np.ndarray) -> dict:
    if values.size == 0:
        return {k: None for k in ("min", "q1", "median", "q3", "max")}
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return {"min": float(values.min()), "q1": float(q1), "median": float(med), "q3": float(q3), "max": float(values.max())}


def summarize(grid: Sequence[SimConfig], records: Sequence[BenchmarkRecord], master_seed: int, replications: int) -> dict:
    """Per-cell accuracy and subspace-error quartiles (timing excluded)."""
    cells = []
    for c, config in enumerate(grid):
        rows = [r for r in records if r.cell == c]
        errors = np.array([r.subspace_error for r in rows if r.ok])
        ranks = [r.estimated_rank for r in rows if r.ok]
        cells.append(
            {
                "cell": c,
                "config_id": config.label,
                "config": config.to_dict(),
                "replications": len(rows),
                "failures": sum(not r.ok for r in rows),
                "accuracy": rank_accuracy(rows) if rows else None,
                "rank_counts": {str(k): ranks.count(k) for k in sorted(set(ranks))},
                "subspace_error": _quartiles(errors),
            }
        )
    return {"master_seed": int(master_seed), "replications": int(replications), "cells": cells}


def write_results_csv(records: Sequence[BenchmarkRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())


def write_timing_csv(records: Sequence[BenchmarkRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell", "replication", "wall_time_s"])
        for rec in records:
            writer.writerow([rec.cell, rec.replication, f"{rec.wall_time:.6f}"])


def write_summary_json(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")


def paper_grid(r_indiv: int = 1) -> list[SimConfig]:
    """All 32 study cells: I in {3, 4}, r0 in {2, 5}, n in {100, 200},
    balanced or unbalanced dimensions, case I or II."""
    layouts = {
        3: ((100, 100, 100), (100, 200, 300)),
        4: ((100, 100, 100, 100), (100, 200, 300, 400)),
    }
    grid = []
    for n_views in (3, 4):
        for r0 in (2, 5):
            for case in ("I", "II"):
                for n in (100, 200):
                    for dims in layouts[n_views]:
                        grid.append(SimConfig(dims=dims, n=n, r0=r0, r_indiv=r_indiv, case=case))
    return grid
