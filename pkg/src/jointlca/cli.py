"""Command-line interface: ``jointlca simulate|fit|select-rank|benchmark|scores|oracle-check``.

Every command reads an optional JSON config (``--config``); flags given on
the command line override config values. Unknown config keys are rejected.
Exit codes: 0 success, 1 computational failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .data import DataError, cross_covariances, load_views
from .metrics import (
    BenchmarkSettings,
    paper_grid,
    run_benchmark,
    write_results_csv,
    write_summary_json,
    write_timing_csv,
)
from .model import JointLCAModel, estimated_rank
from .oracles import run_oracle_checks, tight_solver_options, write_report
from .selection import select_rank
from .simulation import SimConfig, generate
from .solver import SolverOptions, fit_penalized

log = logging.getLogger("jointlca")

EXIT_OK, EXIT_COMPUTE, EXIT_INVALID = 0, 1, 2
FLOAT_FMT = "%.17g"

SOLVER_KEYS = {"max_iters": int, "rel_tol": float, "d_inner_iters": int, "d_tol": float}
COMMON_KEYS = {"seed": int, "threads": int, "out_dir": str}
DATA_KEYS = {"views": list, "delimiter": str, "header": bool, "normalization": str, "p0": int}

SCHEMAS: dict[str, dict[str, type]] = {
    "simulate": {
        **COMMON_KEYS,
        "dims": list, "n": int, "r0": int, "r_indiv": int, "case": str,
        "noiseless": bool, "orthogonal_individual": bool,
    },
    "fit": {**COMMON_KEYS, **DATA_KEYS, **SOLVER_KEYS, "lambda": float},
    "select-rank": {**COMMON_KEYS, **DATA_KEYS, **SOLVER_KEYS, "K": int, "grid_size": int},
    "benchmark": {
        **COMMON_KEYS, **SOLVER_KEYS,
        "grid": (list, str), "replications": int, "K": int, "grid_size": int, "p0": int,
    },
    "scores": {**COMMON_KEYS, "views": list, "delimiter": str, "header": bool, "model": str},
    "oracle-check": {**COMMON_KEYS, **SOLVER_KEYS},
}

DEFAULTS: dict[str, Any] = {
    "seed": 0, "threads": 1, "out_dir": ".",
    "delimiter": ",", "header": False, "normalization": "none", "p0": None,
    "n": 100, "r0": 2, "r_indiv": 1, "case": "I", "noiseless": False, "orthogonal_individual": False,
    "K": 5, "grid_size": 50, "replications": 20,
}

REQUIRED = {
    "simulate": ("dims",),
    "fit": ("views", "lambda"),
    "select-rank": ("views",),
    "benchmark": ("grid",),
    "scores": ("views", "model"),
    "oracle-check": (),
}


class ValidationError(Exception):
    """Bad input detected before any computation (exit code 2)."""


# --- config handling -------------------------------------------------------------


def _check_type(key: str, value: Any, expected) -> Any:
    expected = expected if isinstance(expected, tuple) else (expected,)
    if value is None:
        return value
    if float in expected and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, bool) and bool not in expected:
        raise ValidationError(f"config key {key!r} must be {expected[0].__name__}, got a boolean")
    if not isinstance(value, expected):
        names = " or ".join(t.__name__ for t in expected)
        raise ValidationError(f"config key {key!r} must be {names}, got {type(value).__name__}")
    return value


def resolve_config(command: str, config_path: str | None, overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge defaults, the JSON config file and command-line overrides."""
    schema = SCHEMAS[command]
    merged = {k: DEFAULTS[k] for k in schema if k in DEFAULTS}
    if config_path is not None:
        try:
            payload = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValidationError(f"config file {config_path}: no such file") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {config_path}: invalid JSON ({exc})") from None
        if not isinstance(payload, dict):
            raise ValidationError(f"config file {config_path}: top level must be an object")
        unknown = sorted(set(payload) - set(schema))
        if unknown:
            raise ValidationError(
                f"unknown config key(s) for {command!r}: {', '.join(unknown)}; "
                f"allowed: {', '.join(sorted(schema))}"
            )
        merged.update(payload)
    merged.update({k: v for k, v in overrides.items() if v is not None and k in schema})
    for key in list(merged):
        merged[key] = _check_type(key, merged[key], schema[key])
    missing = [k for k in REQUIRED[command] if merged.get(k) is None]
    if missing:
        raise ValidationError(f"{command}: missing required setting(s): {', '.join(missing)}")
    if merged["threads"] < 1:
        raise ValidationError("threads must be >= 1")
    return merged


def _solver_options(cfg: dict, base: SolverOptions | None = None) -> SolverOptions:
    kwargs = {k: cfg[k] for k in SOLVER_KEYS if cfg.get(k) is not None}
    try:
        return replace(base or SolverOptions(), seed=cfg["seed"], **kwargs)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg: dict):
    views = cfg["views"]
    if len(views) < 2:
        raise ValidationError(f"need at least 2 view files, got {len(views)}")
    try:
        return load_views([str(v) for v in views], cfg["delimiter"], cfg["header"])
    except DataError as exc:
        raise ValidationError(str(exc)) from None


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def _check_p0(cfg: dict, dims) -> None:
    p0 = cfg.get("p0")
    if p0 is not None and not 1 <= p0 <= min(dims):
        raise ValidationError(f"p0 must be in [1, {min(dims)}], got {p0}")


# --- commands ---------------------------------------------------------------------
# Each command validates first and returns a zero-argument callable doing the work,
# so validation failures and computational failures map to different exit codes.


def cmd_simulate(cfg: dict) -> Callable[[], None]:
    try:
        config = SimConfig(
            dims=tuple(cfg["dims"]), n=cfg["n"], r0=cfg["r0"], r_indiv=cfg["r_indiv"],
            case=cfg["case"], seed=cfg["seed"],
        )
        if cfg["orthogonal_individual"] and config.r0 + config.n_views * config.r_indiv > config.n - 1:
            raise ValueError("orthogonal scores need r0 + I*r_indiv <= n - 1")
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None

    def run():
        out = _out_dir(cfg)
        dataset, truth = generate(
            config, noiseless=cfg["noiseless"], orthogonal_individual=cfg["orthogonal_individual"]
        )
        for i, x in enumerate(dataset.arrays(), start=1):
            np.savetxt(out / f"view_{i}.csv", x, delimiter=",", fmt=FLOAT_FMT)
        _write_json(out / "truth.json", {"config": config.to_dict(), **truth.to_dict()})
        print(f"wrote {config.n_views} views ({config.n} x {list(config.dims)}) to {out}")

    return run


def cmd_fit(cfg: dict) -> Callable[[], None]:
    opts = _solver_options(cfg)
    dataset = _load(cfg)
    _check_p0(cfg, dataset.dims)
    if cfg["lambda"] < 0:
        raise ValidationError("lambda must be nonnegative")

    def run():
        out = _out_dir(cfg)
        cc = cross_covariances(dataset.centered(), cfg["normalization"])
        model, trace = fit_penalized(cc, cfg["lambda"], cfg["p0"], opts)
        r_hat = estimated_rank(model)
        model.to_json(out / "model.json")
        _write_json(out / "trace.json", trace.to_dict())
        print(f"estimated rank: {r_hat}")

    return run


def cmd_select_rank(cfg: dict) -> Callable[[], None]:
    opts = _solver_options(cfg)
    dataset = _load(cfg)
    _check_p0(cfg, dataset.dims)
    if cfg["K"] < 2 or cfg["K"] > dataset.n:
        raise ValidationError(f"K must be in [2, n={dataset.n}], got {cfg['K']}")
    if cfg["grid_size"] < 2:
        raise ValidationError("grid_size must be >= 2")

    def run():
        out = _out_dir(cfg)
        r_hat, model, cv = select_rank(
            dataset, cfg["p0"], cfg["K"], cfg["grid_size"], opts, cfg["seed"], cfg["normalization"]
        )
        cv.to_json(out / "cv.json")
        model.to_json(out / "model_refit.json")
        print(f"r_hat: {r_hat}")
        print(f"lambda*: {cv.chosen_lambda!r}")

    return run


def _parse_grid(grid) -> list[SimConfig]:
    if isinstance(grid, str):
        if grid != "paper":
            raise ValidationError(f"grid must be a list of cells or 'paper', got {grid!r}")
        return paper_grid()
    if not grid:
        raise ValidationError("grid is empty")
    allowed = {f.name for f in fields(SimConfig)} - {"seed"}
    cells = []
    for c, cell in enumerate(grid):
        if not isinstance(cell, dict):
            raise ValidationError(f"grid cell {c} must be an object")
        unknown = sorted(set(cell) - allowed)
        if unknown:
            raise ValidationError(f"grid cell {c}: unknown key(s) {', '.join(unknown)}")
        try:
            cells.append(SimConfig(**{**cell, "dims": tuple(cell.get("dims", ()))}))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"grid cell {c}: {exc}") from None
    return cells


def cmd_benchmark(cfg: dict) -> Callable[[], None]:
    opts = _solver_options(cfg)
    grid = _parse_grid(cfg["grid"])
    if cfg["replications"] < 1:
        raise ValidationError(f"replications must be >= 1, got {cfg['replications']}")
    if cfg["K"] < 2 or any(cfg["K"] > g.n for g in grid):
        raise ValidationError("K must be at least 2 and at most every cell's n")
    if cfg["grid_size"] < 2:
        raise ValidationError("grid_size must be >= 2")
    settings = BenchmarkSettings(K=cfg["K"], grid_size=cfg["grid_size"], p0=cfg["p0"], solver=opts)

    def run():
        out = _out_dir(cfg)
        records, summary = run_benchmark(grid, cfg["replications"], cfg["seed"], settings, cfg["threads"])
        write_results_csv(records, out / "benchmark_results.csv")
        write_summary_json(summary, out / "benchmark_summary.json")
        write_timing_csv(records, out / "benchmark_timing.csv")
        for cell in summary["cells"]:
            print(f"{cell['config_id']}: accuracy {cell['accuracy']:.3f}, "
                  f"median error {cell['subspace_error']['median']}, failures {cell['failures']}")

    return run


def compute_scores(arrays, model: JointLCAModel) -> np.ndarray:
    """``U = (1/I) sum_i X_i V_i D_i^{-1}`` over the retained components."""
    r_hat = estimated_rank(model)
    if r_hat == 0:
        raise ValueError("model has rank 0; there are no scores to compute")
    d = model.scales[:, :r_hat]
    zeros = np.argwhere(d == 0)
    if zeros.size:
        i, k = zeros[0]
        raise ValueError(f"scale d[{i},{k}] (view {i}, component {k}) is zero; D_{i} is not invertible")
    total = sum(x @ (v[:, :r_hat] / d[i]) for i, (x, v) in enumerate(zip(arrays, model.loadings)))
    return total / len(arrays)


def cmd_scores(cfg: dict) -> Callable[[], None]:
    dataset = _load(cfg)
    try:
        model = JointLCAModel.from_json(Path(cfg["model"]))
    except FileNotFoundError:
        raise ValidationError(f"model file {cfg['model']}: no such file") from None
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"model file {cfg['model']}: {exc}") from None
    if model.dims != dataset.dims:
        raise ValidationError(f"model dims {list(model.dims)} do not match view dims {list(dataset.dims)}")
    try:
        compute_scores([np.zeros((1, p)) for p in model.dims], model)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    def run():
        out = _out_dir(cfg)
        scores = compute_scores(dataset.centered().arrays(), model)
        np.savetxt(out / "scores.csv", scores, delimiter=",", fmt=FLOAT_FMT)
        print(f"wrote {scores.shape[0]} x {scores.shape[1]} scores to {out / 'scores.csv'}")

    return run


def cmd_oracle_check(cfg: dict) -> Callable[[], None]:
    # identities are checked at converged points, so tolerances default to tight
    opts = _solver_options(cfg, tight_solver_options())

    def run():
        out = _out_dir(cfg)
        reports = run_oracle_checks(cfg["seed"], opts)
        write_report(reports, out / "oracle-report.json")
        failed = [r for r in reports if not r.passed]
        print(f"{len(reports) - len(failed)}/{len(reports)} oracle checks passed")
        if failed:
            raise RuntimeError(f"{len(failed)} oracle check(s) failed; see oracle-report.json")

    return run


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select-rank": cmd_select_rank,
    "benchmark": cmd_benchmark,
    "scores": cmd_scores,
    "oracle-check": cmd_oracle_check,
}


# --- argument parsing ----------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointlca", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out-dir", dest="out_dir")

    def solver(p):
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--rel-tol", dest="rel_tol", type=float)
        p.add_argument("--d-inner-iters", dest="d_inner_iters", type=int)
        p.add_argument("--d-tol", dest="d_tol", type=float)

    def data(p):
        p.add_argument("--views", nargs="+", help="view CSV files (one sample per row)")
        p.add_argument("--delimiter")
        p.add_argument("--header", action="store_const", const=True, help="skip a header line")
        p.add_argument("--normalization", choices=("none", "by_n", "by_n_minus_1"))
        p.add_argument("--p0", type=int, help="starting number of components")

    p = sub.add_parser("simulate", help="generate synthetic views and ground truth")
    common(p)
    p.add_argument("--dims", type=_int_list, help="comma-separated view dimensions")
    p.add_argument("--n", type=int)
    p.add_argument("--r0", type=int)
    p.add_argument("--r-indiv", dest="r_indiv", type=int)
    p.add_argument("--case", choices=("I", "II"))
    p.add_argument("--noiseless", action="store_const", const=True)
    p.add_argument("--orthogonal-individual", dest="orthogonal_individual", action="store_const", const=True)

    p = sub.add_parser("fit", help="penalized fit at one lambda")
    common(p)
    data(p)
    solver(p)
    p.add_argument("--lambda", dest="lambda", type=float)

    p = sub.add_parser("select-rank", help="cross-validated rank selection and refit")
    common(p)
    data(p)
    solver(p)
    p.add_argument("--K", type=int, help="number of folds")
    p.add_argument("--grid-size", dest="grid_size", type=int)

    p = sub.add_parser("benchmark", help="simulation study over a grid of cells")
    common(p)
    solver(p)
    p.add_argument("--grid", help="'paper' for the full 32-cell grid (cells are otherwise given in the config)")
    p.add_argument("--replications", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--p0", type=int)

    p = sub.add_parser("scores", help="averaged score matrix from a fitted model")
    common(p)
    p.add_argument("--views", nargs="+")
    p.add_argument("--delimiter")
    p.add_argument("--header", action="store_const", const=True)
    p.add_argument("--model", help="model JSON written by fit or select-rank")

    p = sub.add_parser("oracle-check", help="compare solver steps with brute-force oracles")
    common(p)
    solver(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve_config(args.command, args.config, overrides)
        run = COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        run()
    except Exception as exc:  # noqa: BLE001 - reported with exit code 1
        log.debug("computation failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
