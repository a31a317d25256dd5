"""Command-line front end.

Commands: ``radial``, ``roots``, ``grid``, ``verify``, ``energy``, ``study``.
Each run prints a JSON summary on stdout and writes a JSON provenance record
next to its data file. Exit status: 0 on success (including "no admissible
root"), 1 when a solver fails, 2 on invalid input.

Relative output paths are resolved against ``$ABREU_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io
from .disk import build_disk_grid
from .grid_solver import SolverConfig, SolverError, convergence_study, solve_coupled
from .numerics import QuadratureError
from .operators import RhsModel
from .radial import (RadialProblem, check_linear_growth, compatibility_residual,
                     residual_ode, solve_compatibility, solve_profile)
from .verify import (Check, VerificationReport, check_euler_lagrange, check_max_principles,
                     cross_validate, energy_Jp)

__all__ = ["build_parser", "main", "run", "OUTPUT_ENV"]

OUTPUT_ENV = "ABREU_OUTPUT_DIR"
EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


class InvalidInput(ValueError):
    pass


def _mesh_width(text) -> float:
    try:
        return float(Fraction(str(text)))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a mesh width: {text!r}") from exc


def _h_list(text):
    if isinstance(text, (list, tuple)):
        return [_mesh_width(t) for t in text]
    return [_mesh_width(t) for t in str(text).split(",") if t.strip()]


def _sign(text) -> int:
    val = float(text)
    if val not in (1.0, -1.0):
        raise argparse.ArgumentTypeError(f"f must be +1 or -1, got {text!r}")
    return int(val)


def _add_radial_problem(p):
    p.add_argument("--n", type=int, default=2, help="dimension")
    p.add_argument("--p", type=float, default=2.0, help="gradient exponent p > 1")
    p.add_argument("--f", type=_sign, default=1, help="sign of the p-Laplacian term (+1 or -1)")
    p.add_argument("--psi", type=float, default=1.0, help="boundary value of w")
    p.add_argument("--phi", type=float, default=0.0, help="boundary value of u")


def _add_grid_problem(p):
    p.add_argument("--model", choices=["laplacian", "p_laplacian", "newton", "clamped"],
                   default="laplacian")
    p.add_argument("--f", type=float, default=1.0, help="coefficient f")
    p.add_argument("--p", type=float, default=2.0, help="p-Laplacian exponent")
    p.add_argument("--g", type=float, default=1.0, help="NEWTON coefficient g")
    p.add_argument("--k", type=int, default=1, help="NEWTON index k")
    p.add_argument("--gamma", type=float, default=0.05, help="CLAMPED gamma")
    p.add_argument("--inner", choices=["laplacian", "p_laplacian"], default="p_laplacian",
                   help="model wrapped by the clamp")
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--psi", type=float, default=1.0)
    defaults = SolverConfig()
    p.add_argument("--damping", type=float, default=defaults.damping)
    p.add_argument("--outer-tol", type=float, default=defaults.outer_tol)
    p.add_argument("--max-outer", type=int, default=defaults.max_outer)
    p.add_argument("--newton-tol", type=float, default=defaults.newton_tol)
    p.add_argument("--max-newton", type=int, default=defaults.max_newton)
    p.add_argument("--convexity-floor", type=float, default=defaults.convexity_floor)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys override the flags")
    common.add_argument("--out", help="output path (data file or JSON record)")

    parser = argparse.ArgumentParser(prog="abreu", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("radial", parents=[common], help="radial profile to CSV")
    _add_radial_problem(p)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--root", type=int, default=0, help="index among the roots, smallest first")
    p.add_argument("--tmax", type=float, default=10.0, help="end of the root scan")
    p.add_argument("--step", type=float, default=1e-3, help="root scan step")

    p = sub.add_parser("roots", parents=[common], help="compatibility roots as JSON")
    _add_radial_problem(p)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--step", type=float, default=1e-3)

    p = sub.add_parser("grid", parents=[common], help="coupled 2D solve to CSV")
    _add_grid_problem(p)
    p.add_argument("--h", type=_mesh_width, default=1 / 32, help="mesh width, e.g. 1/32")

    p = sub.add_parser("verify", parents=[common], help="checks on a saved solution")
    p.add_argument("--input", required=True, help="CSV written by radial or grid")
    p.add_argument("--strict", action="store_true", help="exit 1 if any check fails")

    p = sub.add_parser("energy", parents=[common], help="energy of a saved solution")
    p.add_argument("--input", required=True)
    p.add_argument("--p", type=float, default=None, help="exponent (default: from the record)")

    p = sub.add_parser("study", parents=[common], help="refinement study against radial")
    _add_grid_problem(p)
    p.add_argument("--h-list", type=_h_list, default=_h_list("1/16,1/32,1/64"))
    p.add_argument("--samples", type=int, default=2049, help="radial reference samples")
    p.add_argument("--jobs", type=int, default=1)
    return parser


# ---------------------------------------------------------------------------


def _apply_config(args, parser):
    if not args.config:
        return args
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidInput("config file must hold a JSON object")
    known = vars(args)
    converters = {"h": _mesh_width, "h_list": _h_list}
    for key, value in data.items():
        attr = key.replace("-", "_")
        if attr == "command":
            if value != args.command:
                raise InvalidInput(f"config is for command {value!r}, not {args.command!r}")
            continue
        if attr not in known or attr == "config":
            raise InvalidInput(f"unknown config key {key!r} for {args.command}")
        if attr == "f" and args.command in ("radial", "roots"):
            value = _sign(value)
        setattr(args, attr, converters.get(attr, lambda v: v)(value))
    return args


def _output_path(args, default_name) -> Path:
    base = Path(os.environ.get(OUTPUT_ENV, "."))
    path = Path(args.out) if args.out else Path(default_name)
    if not path.is_absolute():
        path = base / path
    return path


def _sidecar_path(args, suffix) -> Path:
    # records about an input file default to living next to it
    if args.out:
        return _output_path(args, None)
    src = Path(args.input)
    return src.with_name(src.stem + suffix)


def _radial_problem(args) -> RadialProblem:
    return RadialProblem(args.n, args.p, args.f, args.psi, args.phi)


def _problem_dict(prob: RadialProblem) -> dict:
    return {"n": prob.n, "p": prob.p, "f_sign": prob.f_sign, "psi": prob.psi, "phi": prob.phi,
            "regime": prob.regime.value}


def _model(args) -> RhsModel:
    if args.model == "laplacian":
        return RhsModel.laplacian(args.f)
    if args.model == "p_laplacian":
        return RhsModel.p_laplacian(args.p, args.f)
    if args.model == "newton":
        return RhsModel.newton(args.f, args.g, args.k)
    inner = (RhsModel.laplacian(args.f) if args.inner == "laplacian"
             else RhsModel.p_laplacian(args.p, args.f))
    return RhsModel.clamped(inner, args.gamma)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(args.damping, args.outer_tol, args.max_outer, args.newton_tol,
                        args.max_newton, args.convexity_floor)


def _emit(obj):
    print(json.dumps(io._jsonable(obj), sort_keys=True))


def _analysis_dict(analysis) -> dict:
    return {"regime": analysis.regime.value, "roots": list(analysis.roots),
            "threshold_M": analysis.threshold_M, "tangencies": list(analysis.tangencies),
            "diagnostics": list(analysis.diagnostics), "scan_max": analysis.scan_max,
            "scan_step": analysis.scan_step}


def _cmd_roots(args):
    prob = _radial_problem(args)
    analysis = solve_compatibility(prob, args.tmax, args.step)
    out = _analysis_dict(analysis)
    io.write_provenance(_output_path(args, "roots.json"),
                        {"command": "roots", "config": vars(args), "problem": _problem_dict(prob),
                         **out})
    _emit(out)
    return EXIT_OK


def _cmd_radial(args):
    prob = _radial_problem(args)
    if args.samples < 3:
        raise InvalidInput("need at least 3 samples")
    analysis = solve_compatibility(prob, args.tmax, args.step)
    out_path = _output_path(args, "radial.csv")
    summary = _analysis_dict(analysis)
    if not analysis.roots:
        io.write_provenance(io.provenance_path(out_path),
                            {"command": "radial", "config": vars(args),
                             "problem": _problem_dict(prob), **summary})
        _emit(summary)
        return EXIT_OK
    if not 0 <= args.root < len(analysis.roots):
        raise InvalidInput(f"--root {args.root} but only {len(analysis.roots)} root(s) exist")
    g1 = analysis.roots[args.root]
    sol = solve_profile(prob, g1, args.samples)
    io.write_radial_csv(out_path, sol)
    summary.update(g1=g1, root_index=args.root, csv=str(out_path), w0=float(sol.w[0]),
                   residual_ode=residual_ode(sol),
                   compatibility_residual=compatibility_residual(g1, prob))
    io.write_provenance(io.provenance_path(out_path),
                        {"command": "radial", "config": vars(args),
                         "problem": _problem_dict(prob), **summary})
    _emit(summary)
    return EXIT_OK


def _grid_record(args, model, config, h) -> dict:
    return {"config": vars(args), "model": model.to_dict(), "solver": config.to_dict(),
            "h": h, "phi": args.phi, "psi": args.psi}


def _cmd_grid(args):
    model = _model(args)
    config = _solver_config(args)
    grid = build_disk_grid(args.h)
    out_path = _output_path(args, "grid.csv")
    record = {"command": "grid", **_grid_record(args, model, config, args.h)}
    try:
        sol = solve_coupled(model, args.phi, args.psi, grid, config)
    except SolverError as exc:
        report = exc.details.get("report")
        record.update(status="failed", error=str(exc),
                      report=report.to_dict() if report is not None else None)
        io.write_provenance(io.provenance_path(out_path), record)
        raise
    io.write_grid_csv(out_path, sol)
    summary = {"status": "ok", "csv": str(out_path), "nodes": grid.size,
               "report": sol.report.to_dict()}
    record.update(summary)
    io.write_provenance(io.provenance_path(out_path), record)
    _emit(summary)
    return EXIT_OK


def _load(path):
    path = Path(path)
    record_path = io.provenance_path(path)
    if not path.exists() or not record_path.exists():
        raise InvalidInput(f"need both {path} and its record {record_path}")
    record = io.read_provenance(record_path)
    command = record.get("command")
    if command == "radial":
        _, rows = io.read_table(path, io.RADIAL_COLUMNS)
        return "radial", io.radial_solution_from_table(rows, record), record
    if command == "grid":
        _, rows = io.read_table(path, io.GRID_COLUMNS)
        return "grid", io.grid_solution_from_table(rows, record), record
    raise InvalidInput(f"{record_path} does not describe a radial or grid solution")


def verify_radial(sol) -> VerificationReport:
    """Checks run by ``verify`` on a radial profile."""
    res = residual_ode(sol)
    lo, hi = check_linear_growth(sol)
    el = check_euler_lagrange(sol)
    checks = [Check("residual_ode", res <= 1e-4, res, 1e-4),
              Check("linear_growth_lower", lo > 0, lo, 0.0),
              Check("linear_growth_upper", math.isfinite(hi), hi, math.inf)]
    checks.extend(Check("euler_lagrange " + c.name, c.passed, c.measured, c.tolerance)
                  for c in el.checks)
    return VerificationReport(tuple(checks), el.skipped)


def verify_grid(sol) -> VerificationReport:
    """Checks run by ``verify`` on a grid solution."""
    config = sol.config
    det = sol.det()
    consistency = float(np.max(np.abs(det * sol.w.values - 1.0)))
    tol = 10 * config.newton_tol
    checks = [Check("min_det", det.min() > 0, float(det.min()), 0.0),
              Check("min_w", sol.w.values.min() > 0, float(sol.w.values.min()), 0.0),
              Check("consistency", consistency <= tol, consistency, tol)]
    mp = check_max_principles(sol, sol.model)
    checks.extend(mp.checks)
    skipped = list(mp.skipped)
    ref = _radial_reference(sol)
    if ref is None:
        skipped.append("cross_validate")
    else:
        checks.extend(cross_validate(sol, ref).checks)
    return VerificationReport(tuple(checks), tuple(skipped))


def _radial_reference(sol, samples=2049):
    # a radial reference exists for constant data and f = +-1 divergence models
    model = sol.model
    if model.kind.value not in ("LAPLACIAN_SCALED", "P_LAPLACIAN") or callable(model.f):
        return None
    if float(model.f) not in (1.0, -1.0):
        return None
    prob = RadialProblem(2, model.p, int(model.f), float(sol.w.boundary), float(sol.u.boundary))
    analysis = solve_compatibility(prob)
    if not analysis.roots:
        return None
    return solve_profile(prob, analysis.roots[0], samples)


def _cmd_verify(args):
    kind, sol, _ = _load(args.input)
    report = verify_radial(sol) if kind == "radial" else verify_grid(sol)
    out = {"input": args.input, "kind": kind, **report.to_dict()}
    io.write_provenance(_sidecar_path(args, ".verify.json"),
                        {"command": "verify", "config": vars(args), **out})
    _emit(out)
    return EXIT_FAILED if args.strict and not report.passed else EXIT_OK


def _cmd_energy(args):
    kind, sol, record = _load(args.input)
    if args.p is not None:
        p = args.p
    elif kind == "radial":
        p = sol.problem.p
    else:
        p = float(record["model"].get("p", 2.0))
    value = energy_Jp(sol, p)
    out = {"input": args.input, "kind": kind, "p": p, "energy": value}
    io.write_provenance(_sidecar_path(args, ".energy.json"),
                        {"command": "energy", "config": vars(args), **out})
    _emit(out)
    return EXIT_OK


def _cmd_study(args):
    model = _model(args)
    config = _solver_config(args)
    if model.kind.value not in ("LAPLACIAN_SCALED", "P_LAPLACIAN") or args.f not in (1.0, -1.0):
        raise InvalidInput("study needs a laplacian or p_laplacian model with f = +1 or -1")
    prob = RadialProblem(2, model.p, int(args.f), args.psi, args.phi)
    analysis = solve_compatibility(prob)
    if not analysis.roots:
        _emit({"roots": [], "regime": analysis.regime.value,
               "diagnostics": list(analysis.diagnostics)})
        return EXIT_OK
    ref = solve_profile(prob, analysis.roots[0], args.samples)
    rows = convergence_study(model, args.phi, args.psi, args.h_list, config, ref, args.jobs)
    out_path = _output_path(args, "study.csv")
    nan = float("nan")
    io.write_table(out_path, ("h", "error_u", "error_w", "order_u", "order_w"),
                   [[r.h, r.error_u, r.error_w,
                     nan if r.order_u is None else r.order_u,
                     nan if r.order_w is None else r.order_w] for r in rows])
    summary = {"status": "ok", "csv": str(out_path), "rows": [r.to_dict() for r in rows]}
    io.write_provenance(io.provenance_path(out_path),
                        {"command": "study", **_grid_record(args, model, config, None),
                         **summary})
    _emit(summary)
    return EXIT_OK


_COMMANDS = {"radial": _cmd_radial, "roots": _cmd_roots, "grid": _cmd_grid,
             "verify": _cmd_verify, "energy": _cmd_energy, "study": _cmd_study}


def run(args) -> int:
    """Dispatch a parsed namespace; returns the exit status."""
    try:
        return _COMMANDS[args.command](args)
    except (SolverError, QuadratureError, np.linalg.LinAlgError) as exc:
        _emit({"status": "failed", "kind": type(exc).__name__, "error": str(exc)})
        return EXIT_FAILED
    except (ValueError, TypeError, KeyError, OSError) as exc:
        _emit({"status": "invalid", "kind": type(exc).__name__, "error": str(exc)})
        return EXIT_INVALID


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_INVALID
    try:
        args = _apply_config(args, parser)
    except (InvalidInput, argparse.ArgumentTypeError) as exc:
        _emit({"status": "invalid", "kind": type(exc).__name__, "error": str(exc)})
        return EXIT_INVALID
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
