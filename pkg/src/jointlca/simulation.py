"""Synthetic multiview data with a known joint + individual structure.

Each view is ``X_i = U (V_i D_i)^T + U_i0 (V_i0 D_i0)^T + W_i`` with
centered orthonormal score and loading matrices, uniform diagonals and
Gaussian noise calibrated so that total signal energy equals expected
noise energy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import MultiviewDataset

CASES = ("I", "II")

_JOINT_RANGE = {"I": (0.0, 1.0), "II": (0.5 * np.sqrt(5.0), np.sqrt(5.0))}
_INDIVIDUAL_RANGE = {"I": (0.0, 1.0), "II": (0.5, 1.0)}


@dataclass(frozen=True)
class SimConfig:
    dims: tuple[int, ...]
    n: int = 100
    r0: int = 2
    r_indiv: int = 1
    case: str = "I"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(p) for p in self.dims))
        object.__setattr__(self, "case", str(self.case))
        if len(self.dims) < 2:
            raise ValueError("need at least 2 views")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if min(self.dims) < 1 or self.n < 1 or self.r0 < 1 or self.r_indiv < 0:
            raise ValueError("n, dims and r0 must be positive; r_indiv nonnegative")
        if self.r0 + self.r_indiv > min(self.n, min(self.dims)):
            raise ValueError(
                f"r0 + r_indiv = {self.r0 + self.r_indiv} exceeds min(n, min p_i) = "
                f"{min(self.n, min(self.dims))}"
            )
        # centering removes one direction from every score/loading draw
        if max(self.r0, self.r_indiv) > min(self.n, min(self.dims)) - 1:
            raise ValueError("each of r0, r_indiv must be at most min(n, min p_i) - 1")

    @property
    def n_views(self) -> int:
        return len(self.dims)

    @property
    def label(self) -> str:
        dims = "-".join(str(p) for p in self.dims)
        return f"I{self.n_views}_n{self.n}_p{dims}_r{self.r0}_case{self.case}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d


@dataclass
class SimGroundTruth:
    U: np.ndarray
    V: list[np.ndarray]
    D: list[np.ndarray]
    U0: list[np.ndarray]
    V0: list[np.ndarray]
    D0: list[np.ndarray]
    noise_sd: float
    Z: list[np.ndarray] = field(repr=False)
    noise_applied: bool = True

    def to_dict(self) -> dict:
        return {
            "noise_sd": self.noise_sd,
            "noise_applied": self.noise_applied,
            "U": self.U.tolist(),
            "V": [v.tolist() for v in self.V],
            "D": [d.tolist() for d in self.D],
            "U0": [u.tolist() for u in self.U0],
            "V0": [v.tolist() for v in self.V0],
            "D0": [d.tolist() for d in self.D0],
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")


def orthonormal_centered(nrows: int, ncols: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draw, column-centered, then orthonormalized (Householder QR).

    Signs are fixed so the triangular factor has a nonnegative diagonal.
    """
    if ncols > nrows - 1:
        raise ValueError(f"ncols={ncols} exceeds nrows-1={nrows - 1} (centering costs one dimension)")
    g = rng.standard_normal((nrows, ncols))
    g -= g.mean(axis=0, keepdims=True)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_diagonals(case: str, count: int, rng: np.random.Generator, structure: str = "joint") -> np.ndarray:
    """Diagonal entries for the joint (``D_i``) or individual (``D_i0``) structure."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case!r}")
    if structure == "joint":
        lo, hi = _JOINT_RANGE[case]
    elif structure == "individual":
        lo, hi = _INDIVIDUAL_RANGE[case]
    else:
        raise ValueError("structure must be 'joint' or 'individual'")
    return rng.uniform(lo, hi, size=count)


def noise_sd(signals: Sequence[np.ndarray], n: int | None = None, dims: Sequence[int] | None = None) -> float:
    """Noise level giving ``sum ||Z_i||_F^2 / (n sum p_i sigma^2) = 1``."""
    n = signals[0].shape[0] if n is None else n
    dims = [z.shape[1] for z in signals] if dims is None else dims
    energy = float(sum(np.sum(z * z) for z in signals))
    if energy == 0.0:
        raise ValueError("all signals are zero; noise level undefined")
    return float(np.sqrt(energy / (n * sum(dims))))


def generate(
    config: SimConfig,
    *,
    noiseless: bool = False,
    orthogonal_individual: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[MultiviewDataset, SimGroundTruth]:
    """Draw one replication.

    ``noiseless`` drops the noise term (the calibrated level is still
    reported). ``orthogonal_individual`` draws the joint and all individual
    scores as one orthonormal block, which makes the noiseless
    cross-covariances exactly ``V_i D_i D_j V_j^T``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n, r0, ri = config.n, config.r0, config.r_indiv
    n_views = config.n_views
    if orthogonal_individual:
        total = r0 + n_views * ri
        if total > n - 1:
            raise ValueError(f"orthogonal scores need r0 + I*r_indiv <= n - 1, got {total}")
        block = orthonormal_centered(n, total, rng)
        u = block[:, :r0]
        u0 = [block[:, r0 + i * ri: r0 + (i + 1) * ri] for i in range(n_views)]
    else:
        u = orthonormal_centered(n, r0, rng)
        u0 = [orthonormal_centered(n, ri, rng) if ri else np.zeros((n, 0)) for _ in range(n_views)]

    v, d, v0, d0, z = [], [], [], [], []
    for i, p in enumerate(config.dims):
        vi = orthonormal_centered(p, r0, rng)
        di = sample_diagonals(config.case, r0, rng, "joint")
        vi0 = orthonormal_centered(p, ri, rng) if ri else np.zeros((p, 0))
        di0 = sample_diagonals(config.case, ri, rng, "individual")
        v.append(vi)
        d.append(di)
        v0.append(vi0)
        d0.append(di0)
        z.append(u @ (vi * di).T + u0[i] @ (vi0 * di0).T)

    sd = noise_sd(z, n, config.dims)
    views = []
    for zi in z:
        w = rng.normal(0.0, sd, size=zi.shape)
        views.append(zi if noiseless else zi + w)
    truth = SimGroundTruth(u, v, d, u0, v0, d0, sd, z, noise_applied=not noiseless)
    return MultiviewDataset.from_arrays(views), truth
