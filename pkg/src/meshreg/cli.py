"""Command-line front end: fit CSV datasets and run simulation studies.

Configuration can come from flags, from a JSON file via ``--config``, or
both; flags win.  All randomness flows from the single ``--seed`` value.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .diffops import (
    PenaltySpec,
    multivariate_penalty_operator,
    normalized_difference_matrix,
    penalty_null_basis,
)
from .interp import mlp_matrix, mlp_matrix_multivariate
from .mesh import regular_mesh, tensor_mesh
from .simulate import StudyConfig, run_rmse_study, study_to_csv, study_to_json
from .solver import (
    ADMMOptions,
    MBSProblem,
    admm_solve,
    kkt_residual,
    lambda_grid,
    lambda_max,
    solve_path,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAXITER = 2


class InputError(Exception):
    """Any user-input problem that should exit with status 1."""


def _read_csv(path: Path, response: str, covariates: list[str]):
    if not path.exists():
        raise InputError(f"file not found: {path}")
    with path.open("r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"schema mismatch: {path} has no header row")
        for col in [response, *covariates]:
            if col not in reader.fieldnames:
                raise InputError(f"schema mismatch: column {col!r} not in {path}")
        rows = list(reader)
    if not rows:
        raise InputError(f"schema mismatch: {path} has no data rows")

    def column(name):
        vals = []
        for i, row in enumerate(rows):
            cell = row[name]
            try:
                vals.append(float(cell))
            except (TypeError, ValueError):
                raise InputError(
                    f"non-finite values: column {name!r} row {i + 1} is {cell!r}"
                ) from None
        arr = np.asarray(vals)
        if not np.all(np.isfinite(arr)):
            raise InputError(f"non-finite values: column {name!r} contains NaN or inf")
        return arr

    y = column(response)
    x_mat = np.column_stack([column(c) for c in covariates])
    return x_mat, y


def _parse_orders(text: str, p: int) -> tuple[tuple[int, ...], ...]:
    """Parse a multi-index collection like ``1,1;1,0;0,1``."""
    orders = []
    for part in text.split(";"):
        comps = tuple(int(v) for v in part.split(","))
        if len(comps) != p:
            raise InputError(
                f"order {part!r} has {len(comps)} components for {p} covariates"
            )
        orders.append(comps)
    return tuple(orders)


def _build_operators(x_mat, args):
    p = x_mat.shape[1]
    sizes = args.mesh_size
    if len(sizes) == 1:
        sizes = sizes * p
    if len(sizes) != p:
        raise InputError(f"{len(sizes)} mesh sizes given for {p} covariates")

    if p == 1:
        if args.orders is not None:
            raise InputError("--orders applies to multivariate fits; use --order-r")
        r, k = args.order_r, args.order_k
        if k > r:
            raise InputError(f"interpolation order k={k} exceeds r={r}")
        mesh = regular_mesh(float(x_mat.min()), float(x_mat.max()), sizes[0])
        plan = mlp_matrix(x_mat[:, 0], mesh, k)
        spec = PenaltySpec(orders=((r,),), ell=args.ell)
        pen_op = normalized_difference_matrix(mesh, r, args.ell)
        coords = mesh.points[:, None]
        basis = penalty_null_basis(mesh, spec)
        return plan, pen_op, coords, basis

    if args.orders is not None:
        orders = _parse_orders(args.orders, p)
    elif args.order_r is not None:
        orders = (tuple([args.order_r] * p),)
    else:
        raise InputError("multivariate fits need --orders or --order-r")
    spec = PenaltySpec(orders=orders, ell=args.ell)
    if args.order_k > spec.max_interp_order():
        raise InputError(
            f"interpolation order k={args.order_k} exceeds the largest "
            f"isotropic difference order {spec.max_interp_order()}"
        )
    axes = [
        regular_mesh(float(x_mat[:, j].min()), float(x_mat[:, j].max()), sizes[j])
        for j in range(p)
    ]
    grid = tensor_mesh(axes)
    plan = mlp_matrix_multivariate(x_mat, grid, args.order_k)
    pen_op = multivariate_penalty_operator(grid, spec)
    coords = grid.grid_coordinates()
    basis = penalty_null_basis(grid, spec)
    return plan, pen_op, coords, basis


def _write_fitted(path: Path, covariates, x_mat, response, y, fitted):
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([*covariates, response, "fitted"])
        for i in range(y.size):
            writer.writerow(
                [*(repr(v) for v in x_mat[i]), repr(float(y[i])), repr(float(fitted[i]))]
            )


def _write_mesh(path: Path, coords, values):
    p = coords.shape[1]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"d{j + 1}" for j in range(p)] + ["value"])
        for i in range(coords.shape[0]):
            writer.writerow([*(repr(float(v)) for v in coords[i]), repr(float(values[i]))])


def run_fit(args) -> int:
    path = Path(args.input)
    covariates = args.covariates
    x_mat, y = _read_csv(path, args.response, covariates)
    if args.ell != 1.0:
        raise InputError("the solver handles ell = 1 only (set --ell 1)")
    plan, pen_op, coords, basis = _build_operators(x_mat, args)

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    opts = ADMMOptions(
        rho=args.rho, max_iter=args.max_iter, tol_abs=args.tol, tol_rel=args.tol * 100
    )

    if args.lam == "path":
        prob0 = MBSProblem(y=y, interp=plan.matrix, penalty_op=pen_op, lam=0.0)
        lmax = lambda_max(prob0, null_basis=basis)
        if lmax <= args.lambda_min:
            lams = np.array([max(lmax, args.lambda_min)])
        else:
            lams = lambda_grid(lmax, args.lambda_count, args.lambda_min)
        fits = solve_path(y, plan.matrix, pen_op, lams, opts)
        with (outdir / "path_index.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "lambda", "objective", "iterations", "converged"])
            for i, (lam, fit) in enumerate(zip(lams, fits)):
                _write_mesh(outdir / f"mesh_{i:03d}.csv", coords, fit.f_mesh)
                writer.writerow(
                    [i, repr(float(lam)), repr(fit.objective), fit.iterations, fit.converged]
                )
        final = fits[-1]
        final_prob = MBSProblem(
            y=y, interp=plan.matrix, penalty_op=pen_op, lam=float(lams[-1])
        )
        _write_fitted(outdir / "fitted.csv", covariates, x_mat, args.response, y, final.fitted)
        summary = {
            "objective": final.objective,
            "iterations": final.iterations,
            "kkt": kkt_residual(final.f_mesh, final_prob),
            "converged": all(f.converged for f in fits),
            "lambda_count": len(fits),
        }
        print(json.dumps(summary))
        return EXIT_OK if summary["converged"] else EXIT_MAXITER

    try:
        lam = float(args.lam)
    except ValueError:
        raise InputError(f"--lambda must be a number or 'path', got {args.lam!r}") from None
    if lam < 0:
        raise InputError("--lambda must be >= 0")
    prob = MBSProblem(y=y, interp=plan.matrix, penalty_op=pen_op, lam=lam)
    fit = admm_solve(prob, opts)
    _write_fitted(outdir / "fitted.csv", covariates, x_mat, args.response, y, fit.fitted)
    _write_mesh(outdir / "mesh.csv", coords, fit.f_mesh)
    summary = {
        "objective": fit.objective,
        "iterations": fit.iterations,
        "kkt": kkt_residual(fit.f_mesh, prob),
        "converged": fit.converged,
    }
    print(json.dumps(summary))
    return EXIT_OK if fit.converged else EXIT_MAXITER


def run_simulate(args) -> int:
    if args.config is None:
        raise InputError("simulate needs --config pointing to a JSON study file")
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise InputError(f"file not found: {cfg_path}")
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise InputError(f"config parse error: {err}") from None
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = StudyConfig(
            scenario=raw["scenario"],
            ns=raw["ns"],
            ms=raw["ms"],
            rk_pairs=[tuple(p) for p in raw["rk_pairs"]],
            replications=raw.get("replications", 50),
            lambda_count=raw.get("lambda_count", 50),
            lambda_min=raw.get("lambda_min", 1e-3),
            seed=raw.get("seed", 0),
            noise=raw.get("noise", True),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise InputError(f"config parse error: {err}") from None

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = run_rmse_study(config)
    study_to_csv(rows, outdir / "study.csv")
    study_to_json(rows, outdir / "study.json")
    resolved = {
        "scenario": config.scenario,
        "ns": list(config.ns),
        "ms": list(config.ms),
        "rk_pairs": [list(p) for p in config.rk_pairs],
        "replications": config.replications,
        "lambda_count": config.lambda_count,
        "lambda_min": config.lambda_min,
        "seed": config.seed,
        "rows": len(rows),
    }
    print(json.dumps(resolved))
    return EXIT_OK


def _apply_config_defaults(args, parser):
    """Fill unset flags from the JSON config file; explicit flags win."""
    if args.command != "fit" or args.config is None:
        return
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise InputError(f"file not found: {cfg_path}")
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise InputError(f"config parse error: {err}") from None
    mapping = {
        "input": "input", "output": "output", "response": "response",
        "covariates": "covariates", "mesh_size": "mesh_size", "order_r": "order_r",
        "orders": "orders", "order_k": "order_k", "lambda": "lam", "rho": "rho",
        "max_iter": "max_iter", "tol": "tol", "seed": "seed", "ell": "ell",
        "lambda_count": "lambda_count", "lambda_min": "lambda_min",
    }
    for key, attr in mapping.items():
        if key in raw and getattr(args, attr, None) in (None, [],):
            setattr(args, attr, raw[key])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshreg", description="Mesh-based penalized regression"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a CSV dataset")
    fit.add_argument("--input", help="input CSV path")
    fit.add_argument("--output", help="output directory")
    fit.add_argument("--response", help="response column name")
    fit.add_argument("--covariates", nargs="+", default=[], help="covariate columns")
    fit.add_argument("--mesh-size", dest="mesh_size", type=int, action="append",
                     default=[], help="mesh points per axis (repeatable)")
    fit.add_argument("--order-r", dest="order_r", type=int, default=None,
                     help="difference order (univariate smoothness order)")
    fit.add_argument("--orders", default=None,
                     help="multivariate difference collection, e.g. '1,1;1,0;0,1'")
    fit.add_argument("--order-k", dest="order_k", type=int, default=None,
                     help="interpolation order")
    fit.add_argument("--lambda", dest="lam", default=None,
                     help="penalty weight, or 'path' for a full weight grid")
    fit.add_argument("--lambda-count", dest="lambda_count", type=int, default=50)
    fit.add_argument("--lambda-min", dest="lambda_min", type=float, default=1e-3)
    fit.add_argument("--ell", type=float, default=1.0, help="penalty norm order")
    fit.add_argument("--rho", type=float, default=None, help="ADMM step parameter")
    fit.add_argument("--max-iter", dest="max_iter", type=int, default=5000)
    fit.add_argument("--tol", type=float, default=1e-8)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--config", default=None, help="JSON config file")

    sim = sub.add_parser("simulate", help="run a simulation study")
    sim.add_argument("--config", default=None, help="JSON study configuration")
    sim.add_argument("--output", default=".", help="output directory")
    sim.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            _apply_config_defaults(args, parser)
            for name, flag in [
                ("input", "--input"), ("output", "--output"),
                ("response", "--response"), ("lam", "--lambda"),
                ("order_k", "--order-k"),
            ]:
                if getattr(args, name) in (None, []):
                    raise InputError(f"missing required option {flag}")
            if not args.covariates:
                raise InputError("missing required option --covariates")
            if not args.mesh_size:
                raise InputError("missing required option --mesh-size")
            if args.order_r is None and args.orders is None:
                raise InputError("missing required option --order-r or --orders")
            args.lam = str(args.lam)
            return run_fit(args)
        return run_simulate(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
