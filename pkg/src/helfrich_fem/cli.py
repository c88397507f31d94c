"""Command line interface: ``helfrich-fem {mesh,curvature,fdcheck,optimize,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 numerical degeneracy,
3 non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import benchmarks
from .curvature import PhysicalParams
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    CurvingError,
    DegeneracyError,
    SolverError,
    StructuralError,
)
from .io import (
    SHAPES,
    CsvLogWriter,
    curvature_fields,
    ensure_dir,
    fmt,
    parse_config,
    parse_config_text,
    write_config_echo,
    write_csv_log,
    write_obj,
    write_vtk,
)
from .optimizer import check_acceptance_rule, optimize

logger = logging.getLogger("helfrich_fem")

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NONCONVERGED = 0, 1, 2, 3

# CLI flag -> config key
OVERRIDES = {
    "kb": float, "H0": float, "cA": float, "cV": float, "cAloc": float, "A0": float, "V0": float,
    "reduced_volume": float, "alpha": float, "alpha_max": float, "alpha_factor": float,
    "Nmax": int, "M": int, "gradient_mode": str, "order": int, "normalization": str,
    "continuation_rounds": int, "continuation_factor": float,
    "shape": str, "subdivisions": int, "jitter": float, "seed": int,
    "output_dir": str, "snapshot_every": int,
}


def _geometry_args(p, shape="sphere"):
    p.add_argument("--shape", choices=SHAPES, default=shape)
    p.add_argument("--subdiv", type=int, default=2, dest="subdivisions")
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=1234)


def _override_args(p):
    p.add_argument("--config", type=Path, help="key = value configuration file")
    for key, typ in OVERRIDES.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, type=typ, dest=f"ov_{key}", default=None)
    p.add_argument("--require-convergence", action="store_true",
                   help="exit with code 3 when the iteration budget runs out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="helfrich-fem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate and write a benchmark mesh")
    _geometry_args(p)
    p.add_argument("--out", type=Path, required=True, help=".obj or .vtk path")

    p = sub.add_parser("curvature", help="lift the curvature and report energy and errors")
    _geometry_args(p)
    p.add_argument("--kb", type=float, default=1.0)
    p.add_argument("--H0", type=float, default=0.0)
    p.add_argument("--vtk", type=Path)

    p = sub.add_parser("fdcheck", help="finite-difference check of the shape derivative")
    _geometry_args(p)
    p.add_argument("--probe-seed", type=int, default=0)
    p.add_argument("--t", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--min-order", type=float, default=1.9)

    p = sub.add_parser("optimize", help="run the shape optimization loop")
    _override_args(p)

    p = sub.add_parser("sweep", help="optimize over several reduced volumes")
    _override_args(p)
    p.add_argument("--volumes", type=str, default=",".join(map(str, benchmarks.SWEEP_VOLUMES)))
    p.add_argument("--start", choices=("prolate", "oblate"), default="prolate")
    return parser


def _mesh_from(args):
    return benchmarks.build_mesh(args.shape, args.subdivisions, args.order, args.jitter, args.seed)


def cmd_mesh(args) -> int:
    mesh = _mesh_from(args)
    out = args.out
    if out.suffix == ".vtk":
        write_vtk(out, mesh)
    else:
        write_obj(out, mesh)
    print(f"wrote {out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, {mesh.n_edges} edges")
    return EXIT_OK


def cmd_curvature(args) -> int:
    mesh = _mesh_from(args)
    params = PhysicalParams(args.kb, args.H0)
    ref = benchmarks.analytic_curvature(args.shape) if not args.jitter else None
    rep = benchmarks.curvature_report(mesh, args.order, params, ref)
    print(f"W = {fmt(rep['W'])}")
    print(f"E* = {fmt(rep['E_star'])}")
    if ref is not None:
        print(f"L2 error = {fmt(rep['L2'])}")
        print(f"H-1 error = {fmt(rep['Hminus1'])}")
    if args.vtk:
        write_vtk(args.vtk, mesh, None, curvature_fields(rep["kappa"]))
    return EXIT_OK


def cmd_fdcheck(args) -> int:
    mesh = _mesh_from(args)
    rows, _, _ = benchmarks.fd_ladder(mesh, args.order, args.probe_seed, sorted(args.t, reverse=True))
    print("t,fd_value,analytic_value,abs_err,observed_order")
    for r in rows:
        print(",".join(fmt(v) for v in (r.t, r.fd_value, r.analytic_value, r.abs_err, r.observed_order)))
    orders = [r.observed_order for r in rows if not r.skipped and np.isfinite(r.observed_order)]
    ok = bool(orders) and min(orders) >= args.min_order
    print(f"observed order {min(orders) if orders else float('nan'):.3f}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _run_config(args):
    overrides = {k: getattr(args, f"ov_{k}") for k in OVERRIDES}
    if args.config is not None:
        return parse_config(args.config, overrides)
    return parse_config_text("", overrides)


def cmd_optimize(args) -> int:
    run = _run_config(args)
    out = ensure_dir(run.output.output_dir)
    write_config_echo(out / "effective.cfg", run)
    g = run.geometry
    mesh = benchmarks.build_mesh(g.shape, g.subdivisions, run.optimizer.order, g.jitter, g.seed)

    def snapshot(state, kappa, sigma, it):
        write_vtk(out / f"snapshot_{it:06d}.vtk", mesh, state, curvature_fields(kappa, sigma))

    with CsvLogWriter(out / "log.csv") as writer:
        log = optimize(mesh, run.optimizer, writer.write, snapshot, run.output.snapshot_every)
    write_vtk(out / "final.vtk", mesh, log.final_state, curvature_fields(log.final_kappa, log.final_sigma))
    last = log.rows[-1]
    print(f"stop: {log.stop_reason} after {int(last['iter'])} iterations")
    print(f"J = {fmt(last['J'])}  E* = {fmt(last['Estar'])}  v = {fmt(last['v'])}")
    if not check_acceptance_rule(log):
        raise ConvergenceError("acceptance rule violated in run log")
    if len(log.rows) == 1 and run.optimizer.Nmax > 0 and log.stop_reason == "step":
        raise ConvergenceError("no descent step could be accepted")
    if args.require_convergence and not log.converged:
        raise ConvergenceError(f"stopped by {log.stop_reason}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = _run_config(args)
    out = ensure_dir(run.output.output_dir)
    try:
        volumes = [float(v) for v in args.volumes.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse --volumes {args.volumes!r}") from None
    base = run.optimizer
    # Sweep-specific defaults apply unless the user set the key.
    for key, value in benchmarks.SWEEP_DEFAULTS.items():
        if getattr(args, f"ov_{key}") is None and args.config is None:
            base = replace(base, **{key: value})
    write_config_echo(out / "effective.cfg", replace(run, optimizer=base))
    g = run.geometry
    print("target_v,Estar,final_v,area,axis_ratio,stop_reason")

    def report(res):
        job = ensure_dir(out / f"v_{res.target_v:g}")
        write_csv_log(job / "log.csv", res.log.rows)
        write_vtk(job / "final.vtk", res.log.final_state.mesh, res.log.final_state,
                  curvature_fields(res.log.final_kappa, res.log.final_sigma))
        print(",".join([fmt(res.target_v), fmt(res.E_star), fmt(res.final_v), fmt(res.area),
                        fmt(res.axis_ratio), res.stop_reason]), flush=True)

    benchmarks.run_sweep(volumes, args.start, g.subdivisions, base, g.jitter, g.seed, report)
    return EXIT_OK


COMMANDS = {
    "mesh": cmd_mesh,
    "curvature": cmd_curvature,
    "fdcheck": cmd_fdcheck,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegeneracyError, StructuralError, CurvingError) as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConvergenceError, SolverError) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
