"""Multiview data containers, CSV ingestion and pairwise cross-covariances."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NORMALIZATIONS = ("none", "by_n", "by_n_minus_1")

Pair = tuple[int, int]


class DataError(ValueError):
    """Malformed input data (file contents, shapes, non-finite values)."""


class DegeneratePairError(DataError):
    """A cross-covariance block has zero Frobenius norm, so its weight is undefined."""

    def __init__(self, pair: Pair):
        self.pair = pair
        super().__init__(
            f"cross-covariance between views {pair[0]} and {pair[1]} is identically "
            "zero; fidelity weight 1/||S||_F^2 is undefined"
        )


@dataclass(frozen=True)
class ViewMatrix:
    values: np.ndarray
    view_id: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DataError(f"view {self.view_id}: expected a 2-D matrix, got shape {values.shape}")
        n, p = values.shape
        if n < 2:
            raise DataError(f"view {self.view_id}: need at least 2 samples, got {n}")
        if p < 1:
            raise DataError(f"view {self.view_id}: need at least 1 feature")
        if not np.all(np.isfinite(values)):
            raise DataError(f"view {self.view_id}: contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MultiviewDataset:
    views: tuple[ViewMatrix, ...]

    def __post_init__(self):
        views = tuple(
            v if isinstance(v, ViewMatrix) else ViewMatrix(v, view_id=i)
            for i, v in enumerate(self.views)
        )
        if len(views) < 2:
            raise DataError(f"need at least 2 views, got {len(views)}")
        n = views[0].n
        for i, v in enumerate(views):
            if v.view_id != i:
                raise DataError(f"view ids must be 0..I-1 in order; position {i} has id {v.view_id}")
            if v.n != n:
                raise DataError(f"view {i} has {v.n} rows but view 0 has {n}")
        object.__setattr__(self, "views", views)

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray]) -> "MultiviewDataset":
        return cls(tuple(ViewMatrix(a, view_id=i) for i, a in enumerate(arrays)))

    @property
    def n(self) -> int:
        return self.views[0].n

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(v.p for v in self.views)

    def arrays(self) -> list[np.ndarray]:
        return [v.values for v in self.views]

    def subset_rows(self, rows: np.ndarray) -> "MultiviewDataset":
        return MultiviewDataset.from_arrays(v.values[rows] for v in self.views)

    def centered(self) -> "MultiviewDataset":
        return MultiviewDataset(tuple(center_columns(v) for v in self.views))


@dataclass(frozen=True)
class CrossCovarianceSet:
    """Pairwise blocks ``S_ij`` (i < j) with their fidelity weights ``w_ij``."""

    pairs: Mapping[Pair, np.ndarray]
    weights: Mapping[Pair, float]
    dims: tuple[int, ...]
    _pair_list: tuple[Pair, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(p) for p in self.dims)
        n_views = len(dims)
        expected = tuple(combinations(range(n_views), 2))
        if n_views < 2:
            raise DataError("need at least 2 views")
        if set(self.pairs) != set(expected):
            raise DataError(f"expected pairs {expected}, got {sorted(self.pairs)}")
        if set(self.weights) != set(expected):
            raise DataError("weights must cover exactly the same pairs as the blocks")
        pairs = {}
        for i, j in expected:
            block = np.array(self.pairs[(i, j)], dtype=np.float64, copy=True)
            if block.shape != (dims[i], dims[j]):
                raise DataError(
                    f"block ({i},{j}) has shape {block.shape}, expected {(dims[i], dims[j])}"
                )
            block.setflags(write=False)
            pairs[(i, j)] = block
        weights = {}
        for pair in expected:
            w = float(self.weights[pair])
            if not (np.isfinite(w) and w > 0):
                raise DataError(f"weight for pair {pair} must be positive and finite, got {w}")
            weights[pair] = w
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "_pair_list", expected)

    @classmethod
    def from_blocks(
        cls,
        blocks: Mapping[Pair, np.ndarray],
        dims: Sequence[int] | None = None,
        weights: Mapping[Pair, float] | str = "fidelity",
    ) -> "CrossCovarianceSet":
        """Build a set from raw blocks.

        ``weights`` is either an explicit mapping, ``"fidelity"`` (1/||S_ij||_F^2)
        or ``"unit"`` (all ones).
        """
        blocks = {k: np.asarray(v, dtype=np.float64) for k, v in blocks.items()}
        if dims is None:
            n_views = 1 + max(j for _, j in blocks)
            dims = [0] * n_views
            for (i, j), b in blocks.items():
                dims[i], dims[j] = b.shape
        if isinstance(weights, str):
            if weights == "fidelity":
                weights = _fidelity_weights_from_blocks(blocks)
            elif weights == "unit":
                weights = {k: 1.0 for k in blocks}
            else:
                raise ValueError(f"unknown weight scheme {weights!r}")
        return cls(pairs=blocks, weights=weights, dims=tuple(dims))

    @property
    def n_views(self) -> int:
        return len(self.dims)

    @property
    def pair_list(self) -> tuple[Pair, ...]:
        return self._pair_list

    def block(self, i: int, j: int) -> np.ndarray:
        """``S_ij`` for any ordered pair, using ``S_ji^T`` when ``i > j``."""
        if i == j:
            raise IndexError("no block on the diagonal")
        if i < j:
            return self.pairs[(i, j)]
        return self.pairs[(j, i)].T

    def weight(self, i: int, j: int) -> float:
        return self.weights[(min(i, j), max(i, j))]

    def with_weights(self, weights: Mapping[Pair, float] | str) -> "CrossCovarianceSet":
        return CrossCovarianceSet.from_blocks(self.pairs, self.dims, weights)

    def weight_vector(self) -> np.ndarray:
        return np.array([self.weights[p] for p in self._pair_list])


def load_view_csv(
    path: str | Path,
    delimiter: str = ",",
    header: bool = False,
    view_id: int = 0,
) -> ViewMatrix:
    """Read one view from a CSV file, one sample per row.

    Errors name the offending line (1-based, counting the header) and column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    rows: list[list[float]] = []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, raw in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not raw or all(not c.strip() for c in raw):
                continue
            if width is None:
                width = len(raw)
            elif len(raw) != width:
                raise DataError(
                    f"{path}: ragged row at line {lineno}: expected {width} columns, got {len(raw)}"
                )
            row = []
            for col, cell in enumerate(raw, start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at line {lineno}, column {col}"
                    ) from None
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: empty file (no data rows)")
    return ViewMatrix(np.array(rows), view_id=view_id)


def load_views(paths: Sequence[str | Path], delimiter: str = ",", header: bool = False) -> MultiviewDataset:
    views = [load_view_csv(p, delimiter, header, view_id=i) for i, p in enumerate(paths)]
    for i, v in enumerate(views[1:], start=1):
        if v.n != views[0].n:
            raise DataError(
                f"row count mismatch: {paths[0]} has {views[0].n} rows, {paths[i]} has {v.n}"
            )
    return MultiviewDataset(tuple(views))


def center_columns(view: ViewMatrix | np.ndarray) -> ViewMatrix:
    if isinstance(view, ViewMatrix):
        values, view_id = view.values, view.view_id
    else:
        values, view_id = np.asarray(view, dtype=np.float64), 0
    centered = values - values.mean(axis=0, keepdims=True)
    return ViewMatrix(centered, view_id=view_id)


def fidelity_weights(ccset: CrossCovarianceSet | Mapping[Pair, np.ndarray]) -> dict[Pair, float]:
    blocks = ccset.pairs if isinstance(ccset, CrossCovarianceSet) else ccset
    return _fidelity_weights_from_blocks(blocks)


def _fidelity_weights_from_blocks(blocks: Mapping[Pair, np.ndarray]) -> dict[Pair, float]:
    weights = {}
    for pair in sorted(blocks):
        sq = float(np.sum(np.square(blocks[pair])))
        if sq == 0.0:
            raise DegeneratePairError(pair)
        weights[pair] = 1.0 / sq
    return weights


def _normalizer(n: int, normalization: str) -> float:
    if normalization == "none":
        return 1.0
    if normalization == "by_n":
        return 1.0 / n
    if normalization == "by_n_minus_1":
        return 1.0 / (n - 1)
    raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")


def cross_covariances(
    dataset: MultiviewDataset,
    normalization: str = "none",
    weights: Mapping[Pair, float] | str = "fidelity",
) -> CrossCovarianceSet:
    """``S_ij = c * X_i^T X_j`` for all i < j. Columns are used as given (no re-centering)."""
    c = _normalizer(dataset.n, normalization)
    arrays = dataset.arrays()
    blocks = {
        (i, j): c * (arrays[i].T @ arrays[j])
        for i, j in combinations(range(dataset.n_views), 2)
    }
    return CrossCovarianceSet.from_blocks(blocks, dataset.dims, weights)
