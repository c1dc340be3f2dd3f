"""Command-line driver: ``dcflow flow | check | sweep | preset-list``.

Exit status: 0 when the flow converged (or the check is clean), 1 on usage
or validation errors, 2 when the integrator failed, 3 when ``t_max`` was
reached without convergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import DCFlowError, StepFailure
from .experiment import (STRUCTURES, ExperimentConfig, build_experiment, emit_trace, format_summary,
                         load_experiment)
from .flow import INTEGRATORS, SURGERY_MODES, expected_decay_rate, run_flow
from .fractional import spectral_decompose
from .geometry import gauss_bonnet_residual
from .jacobian import curvature_and_jacobian, weighted_delaunay_indicator
from .mesh import PRESET_NAMES, euler_characteristic, preset
from .structure import check_structure_condition, edge_lengths
from .surgery import delaunay_check

EXIT_OK, EXIT_USAGE, EXIT_STEP_FAILURE, EXIT_NOT_CONVERGED = 0, 1, 2, 3

log = logging.getLogger("dcflow")


def _add_experiment_args(p):
    p.add_argument("--config", help="experiment config file (command-line flags override it)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESET_NAMES)
    src.add_argument("--mesh", help="mesh file")
    p.add_argument("--structure", help=f"one of {', '.join(STRUCTURES)} or file:<path>")
    p.add_argument("--eta", help="constant, list, or random(seed, lo, hi)")
    p.add_argument("--u0", help="reference, list, or random(seed, lo, hi)")
    p.add_argument("--target", help="uniform, derived, or a list of values")
    p.add_argument("--integrator", choices=INTEGRATORS)
    p.add_argument("--surgery", choices=SURGERY_MODES)
    for name in ("dt-init", "dt-min", "dt-max", "rtol", "atol", "tol-curvature", "t-max", "degeneracy-margin"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--frozen-initial-curvature", action="store_true", default=None)


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_experiment(args.config) if args.config else ExperimentConfig()
    mesh = f"preset:{args.preset}" if args.preset else (f"file:{args.mesh}" if args.mesh else None)
    cfg.update(mesh=mesh, structure=args.structure, eta=args.eta, u0=args.u0, target=args.target,
               integrator=args.integrator, surgery=args.surgery, dt_init=args.dt_init, dt_min=args.dt_min,
               dt_max=args.dt_max, rtol=args.rtol, atol=args.atol, tol_curvature=args.tol_curvature,
               t_max=args.t_max, degeneracy_margin=args.degeneracy_margin,
               frozen_initial_curvature=args.frozen_initial_curvature)
    for key in ("s", "trace", "summary"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, getattr(args, key))
    return cfg


def _status_code(result) -> int:
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _cmd_flow(args) -> int:
    cfg = _experiment_config(args)
    exp = build_experiment(cfg)
    try:
        result = run_flow(exp.mesh, exp.dcs, exp.flow_config)
    except StepFailure as exc:
        print(f"StepFailure: {exc}", file=sys.stderr)
        if exc.trace is not None:
            _write_outputs(cfg, exc.trace)
        return EXIT_STEP_FAILURE
    _write_outputs(cfg, result)
    return _status_code(result)


def _write_outputs(cfg, result):
    if cfg.trace:
        emit_trace(result, cfg.trace)
    text = format_summary(result)
    if cfg.summary:
        Path(cfg.summary).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.summary).write_text(text)
    sys.stdout.write(text)


def _cmd_check(args) -> int:
    cfg = _experiment_config(args)
    exp = build_experiment(cfg)
    mesh, dcs = exp.mesh, exp.dcs
    out = sys.stdout
    out.write(f"mesh: V={mesh.num_vertices} E={mesh.num_edges} F={mesh.num_faces} chi={euler_characteristic(mesh)}\n")
    out.write(f"background: {dcs.background.value}\n")
    report = check_structure_condition(mesh, dcs.epsilon, dcs.eta)
    out.write(f"structure_condition: {'ok' if report.ok else 'violated'}\n")
    state, jac = curvature_and_jacobian(mesh, dcs)
    spectrum = spectral_decompose(jac.matrix)
    out.write(f"gauss_bonnet_residual: {gauss_bonnet_residual(mesh, state)!r}\n")
    out.write(f"symmetry_residual: {jac.symmetry_residual()!r}\n")
    out.write("eigenvalues: " + " ".join(f"{x:.12g}" for x in spectrum.eigenvalues) + "\n")
    out.write(f"kernel_dimension: {int(spectrum.zero.sum())}\n")
    s = exp.flow_config.s
    if spectrum.rank:
        out.write(f"expected_decay_rate(s={s:g}): {expected_decay_rate(spectrum, s)!r}\n")
    dl = delaunay_check(mesh, edge_lengths(mesh, dcs), dcs.background)
    out.write(f"delaunay: {'ok' if dl.ok else 'violated'} min_slack={dl.min_slack!r} violations={dl.violations}\n")
    wd = weighted_delaunay_indicator(mesh, dcs)
    out.write(f"weighted_delaunay: {'ok' if wd.ok else 'violated'} violations={wd.violations}\n")
    out.write("K: " + " ".join(f"{x:.12g}" for x in state.K) + "\n")
    return EXIT_OK if report.ok else EXIT_USAGE


def _sweep_one(cfg):
    try:
        exp = build_experiment(cfg)
        result = run_flow(exp.mesh, exp.dcs, exp.flow_config)
    except StepFailure as exc:
        return cfg.s, "step_failure", float("nan"), float("nan"), 0, str(exc)
    spectrum = result.final_state.evaluation.spectral
    expected = expected_decay_rate(spectrum, cfg.s) if spectrum.rank else float("nan")
    return cfg.s, result.status, result.summary()["fitted_rate"], expected, result.num_steps, ""


def _cmd_sweep(args) -> int:
    base = _experiment_config(args)
    try:
        s_values = [float(x) for x in args.s_values.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --s-values {args.s_values!r}") from None
    configs = [replace(base, s=s, trace="", summary="") for s in s_values]
    build_experiment(configs[0])  # validate once before spawning workers
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, configs))
    else:
        rows = [_sweep_one(c) for c in configs]
    print(f"{'s':>6} {'status':>13} {'steps':>7} {'fitted_rate':>14} {'expected_rate':>14}")
    code = EXIT_OK
    for s, status, fitted, expected, steps, msg in rows:
        print(f"{s:>6g} {status:>13} {steps:>7d} {fitted:>14.6g} {expected:>14.6g}")
        if msg:
            print(f"  {msg}", file=sys.stderr)
        if status == "step_failure":
            code = EXIT_STEP_FAILURE
        elif status != "converged" and code == EXIT_OK:
            code = EXIT_NOT_CONVERGED
    return code


def _cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        m = preset(name)
        print(f"{name:<20} V={m.num_vertices:<3d} E={m.num_edges:<3d} F={m.num_faces:<3d} chi={euler_characteristic(m)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcflow", description="Fractional combinatorial Calabi flow on triangulated surfaces")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="run one flow and write its trace and summary")
    _add_experiment_args(p)
    p.add_argument("--s", type=float)
    p.add_argument("--trace", help="CSV trace output path")
    p.add_argument("--summary", help="summary output path")
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("check", help="structure condition, spectrum and Delaunay report")
    _add_experiment_args(p)
    p.add_argument("--s", type=float)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("sweep", help="run the flow for several s and compare decay rates")
    _add_experiment_args(p)
    p.add_argument("--s-values", default="-1,-0.5,0,0.5,1,2")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("preset-list", help="list the built-in meshes")
    p.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DCFlowError, ValueError, KeyError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
