"""Experiment configuration files, structure builders and trace output.

Config grammar (one ``key = value`` per line, ``#`` starts a comment)::

    format = 1
    mesh = preset:tetra_sphere          # or file:<path to mesh file>
    structure = cp-euclidean            # cp-hyperbolic, vs-euclidean, vs-hyperbolic, mixed, file:<path>
    eta = 1                             # constant or random(seed, lo, hi)
    u0 = random(0, -0.5, 0.5)           # reference, random(seed, lo, hi) or a list of numbers
    target = uniform                    # derived or a list of numbers
    s = 1
    integrator = rk45                   # or rk4
    surgery = off                       # delaunay, weighted_delaunay
    trace = out/trace.csv               # optional
    summary = out/summary.txt           # optional

Remaining keys are the numeric :class:`~dcflow.flow.FlowConfig` fields
(``dt_init``, ``dt_min``, ``dt_max``, ``rtol``, ``atol``, ``tol_curvature``,
``t_max``, ``degeneracy_margin``) and the flags ``frozen_initial_curvature``
and ``delaunay_guard``.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ParseError, PreconditionViolated
from .flow import INTEGRATORS, SURGERY_MODES, FlowConfig, FlowResult, uniform_target
from .jacobian import curvature_of
from .mesh import euler_characteristic, preset, read_mesh
from .structure import (Background, DiscreteConformalStructure, check_structure_condition, nondegeneracy_check,
                        edge_lengths, read_structure, u_from_r)
from .surgery import conformal_transport

__all__ = [
    "STRUCTURES",
    "ExperimentConfig",
    "parse_experiment",
    "load_experiment",
    "dump_experiment",
    "build_experiment",
    "Experiment",
    "random_eta",
    "reference_structure",
    "equilateral_hyperbolic_length",
    "format_trace",
    "emit_trace",
    "format_summary",
]

STRUCTURES = ("cp-euclidean", "cp-hyperbolic", "vs-euclidean", "vs-hyperbolic", "mixed")

_FLOAT_KEYS = ("s", "dt_init", "dt_min", "dt_max", "rtol", "atol", "tol_curvature", "t_max", "degeneracy_margin")
_RANDOM = re.compile(r"^random\(\s*([-+0-9]+)\s*,\s*([^,]+?)\s*,\s*([^,]+?)\s*\)$")


@dataclass
class ExperimentConfig:
    mesh: str = "preset:tetra_sphere"
    structure: str = "cp-euclidean"
    eta: str = "1"
    u0: str = "random(0, -0.5, 0.5)"
    target: str = "uniform"
    s: float = 1.0
    integrator: str = "rk45"
    surgery: str = "off"
    dt_init: float = 0.01
    dt_min: float = 1e-10
    dt_max: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-10
    tol_curvature: float = 1e-8
    t_max: float = 1e3
    degeneracy_margin: float = 1e-9
    frozen_initial_curvature: bool = False
    delaunay_guard: str = "auto"
    trace: str = ""
    summary: str = ""

    def update(self, **kw):
        for key, value in kw.items():
            if value is not None:
                setattr(self, key, value)
        return self


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_experiment(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    seen_format = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, 1)
        key, value = (part.strip() for part in line.split("=", 1))
        eq = raw.index("=")
        col = eq + 2 + len(raw[eq + 1:]) - len(raw[eq + 1:].lstrip())  # 1-based start of the value
        if key == "format":
            if value != "1":
                raise ParseError(f"unsupported format {value!r}", lineno, col)
            seen_format = True
            continue
        if key not in known:
            raise ParseError(f"unknown key {key!r}", lineno, 1)
        try:
            if key in _FLOAT_KEYS:
                value = float(value)
            elif key == "frozen_initial_curvature":
                value = _parse_bool(value)
            elif key == "integrator" and value not in INTEGRATORS:
                raise ValueError(f"integrator must be one of {', '.join(INTEGRATORS)}")
            elif key == "surgery" and value not in SURGERY_MODES:
                raise ValueError(f"surgery must be one of {', '.join(SURGERY_MODES)}")
            elif key == "delaunay_guard" and value != "auto":
                value = "on" if _parse_bool(value) else "off"
        except ValueError as exc:
            raise ParseError(str(exc), lineno, col) from None
        setattr(cfg, key, value)
    if text.strip() and not seen_format:
        raise ParseError("missing 'format = 1' header", 1, 1)
    return cfg


def load_experiment(path) -> ExperimentConfig:
    return parse_experiment(Path(path).read_text())


def dump_experiment(cfg: ExperimentConfig) -> str:
    lines = ["format = 1"]
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        if value == "" or value is None:
            continue
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- builders

def _random_draw(text):
    m = _RANDOM.match(text.strip())
    if not m:
        return None
    return int(m.group(1)), float(m.group(2)), float(m.group(3))


def _number_list(text, n, what):
    try:
        vals = np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise PreconditionViolated(f"cannot read {what} from {text!r}") from None
    if vals.size == 1:
        vals = np.full(n, vals[0])
    if vals.shape != (n,):
        raise PreconditionViolated(f"{what} needs {n} values, got {vals.size}")
    return vals


def random_eta(mesh, epsilon, rng, lo=-0.4, hi=1.0, max_rounds=1000):
    """Edge weights uniform in ``[lo, hi]``, resampled until the structure condition holds."""
    eta = rng.uniform(lo, hi, mesh.num_edges)
    fe = mesh.face_edges
    for _ in range(max_rounds):
        report = check_structure_condition(mesh, epsilon, eta)
        if report.ok:
            return eta
        bad = set(report.edge_violations)
        for f, _v in report.corner_violations:
            # redraw only the most negative weight of the offending face
            bad.add(int(fe[f][np.argmin(eta[fe[f]])]))
        bad = sorted(bad)
        eta[bad] = rng.uniform(lo, hi, len(bad))
    raise PreconditionViolated("could not sample weights satisfying the structure condition")


def equilateral_hyperbolic_length(mesh) -> float:
    """Side length of the equilateral hyperbolic metric with zero curvature,
    or ``1`` if the surface does not carry one (``chi >= 0``)."""
    if euler_characteristic(mesh) >= 0:
        return 1.0
    theta = 2.0 * np.pi * mesh.num_vertices / (3.0 * mesh.num_faces)
    return float(np.arccosh(np.cos(theta) / (1.0 - np.cos(theta))))


def reference_structure(mesh, kind: str, eta_text: str = "1") -> DiscreteConformalStructure:
    """The structure ``kind`` at its reference factor.

    Circle packings: Euclidean ``u = 0``, hyperbolic radii ``1``.  Vertex
    scaling: factor ``0`` on the equilateral metric (side ``1`` Euclidean,
    the zero-curvature side length hyperbolic).  ``mixed``: Euclidean, even
    vertices with ``epsilon = 1``, odd ones with ``epsilon = 0``.
    """
    n, E = mesh.num_vertices, mesh.num_edges
    if kind not in STRUCTURES:
        raise PreconditionViolated(f"unknown structure {kind!r}; choose from {', '.join(STRUCTURES)}")
    hyperbolic = kind.endswith("hyperbolic")
    bg = Background.HYPERBOLIC if hyperbolic else Background.EUCLIDEAN
    if kind.startswith("cp"):
        eps = np.ones(n, dtype=int)
    elif kind == "mixed":
        eps = (np.arange(n) % 2 == 0).astype(int)
    else:
        eps = np.zeros(n, dtype=int)
    rnd = _random_draw(eta_text)
    if kind.startswith("vs"):
        if eta_text not in ("1", "equilateral"):
            raise PreconditionViolated("vertex scaling structures start from the equilateral metric (eta = 1)")
        if hyperbolic:
            eta = np.full(E, np.cosh(equilateral_hyperbolic_length(mesh)) - 1.0)
        else:
            eta = np.full(E, 0.5)
    elif rnd is not None:
        eta = random_eta(mesh, eps, np.random.default_rng(rnd[0]), rnd[1], rnd[2])
    else:
        eta = _number_list(eta_text, E, "eta")
    u = u_from_r(np.ones(n)) if kind == "cp-hyperbolic" else np.zeros(n)
    return DiscreteConformalStructure(bg, eps, eta, u)


@dataclass
class Experiment:
    mesh: object
    dcs: DiscreteConformalStructure
    flow_config: FlowConfig
    reference: DiscreteConformalStructure
    transport_flips: list = field(default_factory=list)


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    """Resolve a config into an initial triangulation, structure and flow parameters."""
    src = cfg.mesh
    if src.startswith("preset:"):
        try:
            mesh = preset(src[len("preset:"):])
        except KeyError as exc:
            raise PreconditionViolated(str(exc.args[0])) from None
    elif src.startswith("file:"):
        mesh = read_mesh(src[len("file:"):])
    else:
        raise PreconditionViolated("mesh must be 'preset:<name>' or 'file:<path>'")
    n = mesh.num_vertices

    if cfg.structure.startswith("file:"):
        ref = read_structure(cfg.structure[len("file:"):])
        if ref.num_vertices != n or len(ref.eta) != mesh.num_edges:
            raise PreconditionViolated("structure file does not match the mesh")
    else:
        ref = reference_structure(mesh, cfg.structure, cfg.eta)
    report = check_structure_condition(mesh, ref.epsilon, ref.eta)
    if not report.ok:
        raise PreconditionViolated(f"structure condition fails: edges {report.edge_violations}, "
                                   f"corners {report.corner_violations}")
    bad = nondegeneracy_check(mesh, edge_lengths(mesh, ref))
    if bad:
        raise PreconditionViolated(f"reference metric is degenerate on faces {bad}")

    if cfg.target == "uniform":
        target = uniform_target(mesh, ref.background)
    elif cfg.target == "derived":
        target = curvature_of(mesh, ref)
    else:
        target = _number_list(cfg.target, n, "target")

    rnd = _random_draw(cfg.u0)
    if cfg.u0 == "reference":
        u0 = ref.u.copy()
    elif rnd is not None:
        u0 = ref.u + np.random.default_rng(rnd[0]).uniform(rnd[1], rnd[2], n)
    else:
        u0 = _number_list(cfg.u0, n, "u0")
    project = None
    if not ref.background.hyperbolic:
        project = float(ref.u.sum())
        u0 = u0 + (project - u0.sum()) / n

    guard = {"auto": None, "on": True, "off": False}[cfg.delaunay_guard]
    flow_cfg = FlowConfig(target=target, s=cfg.s, integrator=cfg.integrator, dt_init=cfg.dt_init,
                          dt_min=cfg.dt_min, dt_max=cfg.dt_max, rtol=cfg.rtol, atol=cfg.atol,
                          tol_curvature=cfg.tol_curvature, t_max=cfg.t_max, surgery=cfg.surgery,
                          degeneracy_margin=cfg.degeneracy_margin, delaunay_guard=guard,
                          frozen_initial_curvature=cfg.frozen_initial_curvature, project_sum=project)
    flips = []
    if cfg.surgery != "off" and (ref.epsilon == 0).all():
        mesh, dcs, flips = conformal_transport(mesh, ref, u0)
    else:
        dcs = ref.with_u(u0)
    return Experiment(mesh, dcs, flow_cfg, ref, flips)


# ------------------------------------------------------------ trace output

TRACE_FIXED = ("t", "calabi_energy", "sum_u", "min_angle", "lambda_min", "lambda_max", "flips")


def _g(x) -> str:
    return repr(float(x))


def format_trace(result: FlowResult) -> str:
    """CSV trace: one row per accepted step, followed by a ``FLIP`` row per flip."""
    n = len(result.records[0].u)
    out = io.StringIO()
    header = list(TRACE_FIXED) + [f"K_{i}" for i in range(n)] + [f"u_{i}" for i in range(n)]
    out.write(",".join(header) + "\n")
    for r in result.records:
        row = [r.t, r.calabi_energy, r.sum_u, r.min_angle, r.lambda_min, r.lambda_max]
        out.write(",".join([_g(x) for x in row] + [str(r.num_flips)] + [_g(x) for x in r.K]
                           + [_g(x) for x in r.u]) + "\n")
        for ev in r.flips:
            i, j, k, l = ev.vertices
            out.write(",".join(["FLIP", _g(ev.t), str(i), str(j), str(k), str(l), _g(ev.new_length),
                                _g(ev.slack_before), _g(ev.slack_after)]) + "\n")
    return out.getvalue()


def emit_trace(result: FlowResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_trace(result))


def format_summary(result: FlowResult, extra=None) -> str:
    items = dict(result.summary())
    if extra:
        items.update(extra)
    lines = ["[summary]", "format=1"]
    for key, value in items.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
