"""Command-line front end: ``lvpp <experiment> [options]``.

Each subcommand runs one preset, writes the outer-loop trace and the solution
fields, and prints a one-line summary. The exit status is 0 on convergence,
1 when the solver did not converge and 2 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import equality as eq
from .io import write_field_csv, write_trace_csv, write_vtk_legacy
from .loop import LvppError, run_lvpp
from .presets import PRESETS, get_preset, multiphase_data
from .problems.multiphase import run_multiphase
from .schedule import AlphaSchedule, Rule

OUTPUT_ENV = "LVPP_OUTPUT_DIR"
DEFAULT_OUTPUT = "lvpp-output"

log = logging.getLogger("lvpp")


def _schedule(args, preset):
    """Preset schedule unless ``--alpha-rule`` (or a rule parameter) is given."""
    if args.alpha_rule is None:
        if any(v is not None for v in (args.alpha1, args.growth, args.cap, args.r, args.q)):
            raise ValueError("schedule parameters need --alpha-rule")
        return preset.schedule()
    rule = Rule(args.alpha_rule)
    alpha1 = 1.0 if args.alpha1 is None else args.alpha1
    cap = math.inf if args.cap is None else args.cap
    if rule is Rule.CONSTANT:
        return AlphaSchedule.constant(alpha1)
    if rule is Rule.CAPPED_GEOMETRIC:
        return AlphaSchedule.geometric(alpha1, 2.0 if args.growth is None else args.growth, cap)
    if rule is Rule.DOUBLE_EXPONENTIAL:
        return AlphaSchedule.double_exponential(
            1.5 if args.r is None else args.r,
            1.5 if args.q is None else args.q,
            100.0 if args.cap is None else args.cap,
            alpha1,
        )
    return AlphaSchedule.newton_adaptive(alpha1)


def _output_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(values, layout, path: Path, fmt: str, name: str):
    if fmt == "vtk":
        write_vtk_legacy(values, layout, path.with_suffix(".vtk"), name=name)
        return
    if values.ndim == 2:  # multi-component cell field: store its Euclidean norm
        values = np.linalg.norm(values, axis=1)
    write_field_csv(values, layout, path.with_suffix(".csv"))


def _fields(problem, state):
    """Primal, latent and auxiliary fields of a solved preset with their layouts."""
    d = problem.data
    u = problem.primal(state)
    latent = np.asarray(problem.recover(state))
    out = []
    if "grid" in d:
        grid = d["grid"]
        out += [("u", u, grid), ("latent", latent, grid)]
    else:
        mesh, full = d["mesh"], d["full"]
        out.append(("u", full(u), mesh))
        if latent.ndim == 1 and latent.size == u.size:
            out.append(("latent", full(latent), mesh))
        else:
            out.append(("latent", latent if latent.shape[1] > 1 else latent[:, 0], mesh))
    if "T" in problem.blocks:
        out.append(("T", problem.block(state, "T"), d["mesh"]))
    return out


def _summary(name, converged, outer, solves, inc):
    status = "converged" if converged else "NOT converged"
    return f"{name}: {status}; outer iterations {outer}; linear solves {solves}; final increment {inc:.3e}"


def _run_lvpp_preset(args, preset, out: Path) -> int:
    n = preset.resolution(args.n, args.paper_scale)
    problem = preset.build(n)
    cfg = preset.config(_schedule(args, preset), args.tol, args.newton_tol, args.newton_rtol, args.max_iter)
    try:
        res = run_lvpp(problem, cfg)
    except LvppError as exc:
        write_trace_csv(exc.trace, out / f"{preset.name}_trace.csv")
        print(f"{preset.name}: solver failure: {exc}", file=sys.stderr)
        return 1
    trace = res.trace
    write_trace_csv(trace, out / f"{preset.name}_trace.csv")
    for label, values, layout in _fields(problem, res.state):
        _write(np.asarray(values), layout, out / f"{preset.name}_{label}", args.format, label)
    print(_summary(preset.name, trace.converged, trace.outer_iterations, trace.linear_solves, trace.final_increment))
    return 0 if trace.converged else 1


def _run_multiphase(args, preset, out: Path) -> int:
    n = preset.resolution(args.n, args.paper_scale)
    data = multiphase_data(n, args.steps)
    cfg = preset.config(_schedule(args, preset), args.tol, args.newton_tol, args.newton_rtol, args.max_iter)

    def dump(step, run):
        write_trace_csv(run.results[-1].trace, out / f"multiphase_trace_step{step:03d}.csv")

    try:
        run = run_multiphase(data, cfg, callback=dump)
    except (LvppError, RuntimeError) as exc:
        print(f"multiphase: solver failure: {exc}", file=sys.stderr)
        return 1
    for i in range(data.m):
        _write(run.latent[-1][:, i], data.mesh, out / f"multiphase_phase{i}", args.format, f"phase{i}")
    outer = sum(run.proximal_counts)
    solves = sum(r.trace.linear_solves for r in run.results)
    inc = run.results[-1].trace.final_increment
    print(_summary(f"multiphase ({len(run.results)} steps)", True, outer, solves, inc))
    return 0


def _run_equality(args, out: Path) -> int:
    if args.matrix_file:
        p = eq.read_equality_file(args.matrix_file)
    else:
        p = eq.EqualityProblem(np.eye(2), [[1.0, 1.0]], [1.0, 0.0])
    eps = eq.parse_eps_sweep(args.eps_sweep, args.per_decade)
    try:
        rows = eq.eps_sweep(p, eps)
    except eq.EqualityError as exc:
        print(f"equality: solver failure: {exc}", file=sys.stderr)
        return 1
    path = out / "equality_sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(eq.SWEEP_COLUMNS)
        for r in rows:
            w.writerow([f"{r[c]:.17g}" for c in eq.SWEEP_COLUMNS])
    ok = all(r["constraint_norm"] <= r["eps"] and r["beta_u_norm"] <= r["bound"] * (1 + 1e-12) for r in rows)
    last = rows[-1]
    print(
        f"equality: {len(rows)} eps values; final eps {last['eps']:.1e}; "
        f"|u - u_kkt| {last['u_error']:.3e}; |B u| {last['constraint_norm']:.3e}"
    )
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="resolution (grid points or cells per axis)")
    common.add_argument("--paper-scale", action="store_true", help="use the reference resolution")
    common.add_argument("--alpha-rule", choices=[r.value for r in Rule], help="proximal parameter rule")
    common.add_argument("--alpha1", type=float, help="first (or constant) proximal parameter")
    common.add_argument("--growth", type=float, help="growth factor of the geometric rule")
    common.add_argument("--cap", type=float, help="upper cap on alpha")
    common.add_argument("--r", type=float, help="base r of the double-exponential rule")
    common.add_argument("--q", type=float, help="exponent base q of the double-exponential rule")
    common.add_argument("--tol", type=float, help="outer stopping tolerance on the increment norm")
    common.add_argument("--newton-tol", type=float, help="absolute Newton residual tolerance")
    common.add_argument("--newton-rtol", type=float, help="relative Newton residual tolerance")
    common.add_argument("--max-iter", type=int, help="maximum number of outer iterations")
    common.add_argument("--format", choices=("csv", "vtk"), default="csv", help="field output format")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("-v", "--verbose", action="store_true", help="log every outer iteration")

    parser = argparse.ArgumentParser(prog="lvpp", description="Latent variable proximal point solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, preset in PRESETS.items():
        sp_ = sub.add_parser(name, parents=[common], help=preset.description)
        if name == "multiphase":
            sp_.add_argument("--steps", type=int, default=2, help="number of time steps")
    sp_ = sub.add_parser("equality", parents=[common], help="equality constraints as an eps limit")
    sp_.add_argument("--matrix-file", help="dense matrix [A | B^T | F]; first line 'rows cols'")
    sp_.add_argument("--eps-sweep", default="1e-1:1e-6", help="START:STOP of the geometric eps sweep")
    sp_.add_argument("--per-decade", type=int, default=1, help="eps values per decade")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.n is not None and args.n < 1:
        parser.error("--n must be at least 1")
    try:
        out = _output_dir(args)
        if args.command == "equality":
            return _run_equality(args, out)
        preset = get_preset(args.command)
        if args.command == "multiphase":
            if args.steps < 1:
                parser.error("--steps must be at least 1")
            return _run_multiphase(args, preset, out)
        return _run_lvpp_preset(args, preset, out)
    except (OSError, ValueError, KeyError) as exc:
        print(f"lvpp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
