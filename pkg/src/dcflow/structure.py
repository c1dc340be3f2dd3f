"""Discrete conformal structures: weights, conformal factors and length laws.

The flow variable ``u`` is the canonical coordinate.  For a vertex with
``epsilon = 1`` in the hyperbolic background, ``u = log tanh(r/2) < 0``
where ``r`` is the circle radius and ``e^f = sinh r``; every other vertex
has ``u = f``.

Hyperbolic lengths are evaluated through ``y = cosh(l) - 1`` so that short
edges keep full relative precision and ``l = log1p(y + sqrt(y (y + 2)))``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateLength, InvalidR, InvalidU, ParseError

__all__ = [
    "Background",
    "DiscreteConformalStructure",
    "StructureConditionReport",
    "check_structure_condition",
    "u_from_f",
    "f_from_u",
    "r_from_u",
    "u_from_r",
    "edge_lengths",
    "edge_length_dcs",
    "length_derivatives",
    "cp_length_from_radii",
    "vertex_scale_lengths",
    "eta_from_lengths",
    "nondegeneracy_check",
    "triangle_slack",
    "acosh1p",
    "format_structure",
    "parse_structure",
    "read_structure",
    "write_structure",
]


class Background(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    HYPERBOLIC = "hyperbolic"

    @property
    def hyperbolic(self) -> bool:
        return self is Background.HYPERBOLIC


@dataclass(frozen=True, eq=False)
class DiscreteConformalStructure:
    """Weights and the current conformal factor on a fixed triangulation.

    ``eta`` is indexed by edge handle, ``epsilon`` and ``u`` by vertex.
    """

    background: Background
    epsilon: np.ndarray
    eta: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "background", Background(self.background))
        eps = np.asarray(self.epsilon, dtype=np.int64).copy()
        if not np.isin(eps, (0, 1)).all():
            raise ValueError("epsilon must take values in {0, 1}")
        u = np.asarray(self.u, dtype=float).copy()
        if len(u) != len(eps):
            raise ValueError("u and epsilon sizes differ")
        if self.background.hyperbolic and (u[eps == 1] >= 0).any():
            raise InvalidU("hyperbolic vertices with epsilon=1 need u < 0")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float).copy())

    @property
    def num_vertices(self) -> int:
        return len(self.u)

    @property
    def f(self) -> np.ndarray:
        return f_from_u(self.u, self.epsilon, self.background)

    @property
    def r(self) -> np.ndarray:
        """Circle radii; only defined for hyperbolic structures with epsilon = 1."""
        if not self.background.hyperbolic or (self.epsilon != 1).any():
            raise ValueError("radii are defined for hyperbolic circle packings only")
        return r_from_u(self.u)

    def with_u(self, u) -> "DiscreteConformalStructure":
        return replace(self, u=np.asarray(u, dtype=float))

    def with_eta(self, eta) -> "DiscreteConformalStructure":
        return replace(self, eta=np.asarray(eta, dtype=float))

    @classmethod
    def from_f(cls, background, epsilon, eta, f):
        background = Background(background)
        return cls(background, epsilon, eta, u_from_f(f, epsilon, background))


@dataclass
class StructureConditionReport:
    edge_violations: list = field(default_factory=list)
    corner_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.edge_violations and not self.corner_violations


def check_structure_condition(mesh, epsilon, eta) -> StructureConditionReport:
    """Evaluate ``eps_s eps_t + eta_st > 0`` per edge and
    ``eps_q eta_st + eta_qs eta_qt >= 0`` per corner ``q`` of every face."""
    eps = np.asarray(epsilon)
    eta = np.asarray(eta, dtype=float)
    ends = mesh.edge_endpoints
    edge_val = eps[ends[:, 0]] * eps[ends[:, 1]] + eta
    report = StructureConditionReport()
    report.edge_violations = [int(e) for e in np.flatnonzero(~(edge_val > 0))]
    fe = mesh.face_edges
    for f in range(mesh.num_faces):
        for q in range(3):
            v = eps[mesh.faces[f, q]] * eta[fe[f, q]] + eta[fe[f, (q + 1) % 3]] * eta[fe[f, (q + 2) % 3]]
            if not v >= 0:
                report.corner_violations.append((f, int(mesh.faces[f, q])))
    return report


# ------------------------------------------------------- coordinate changes

def u_from_f(f, epsilon, background):
    f = np.asarray(f, dtype=float)
    eps = np.broadcast_to(np.asarray(epsilon), f.shape)
    if not Background(background).hyperbolic:
        return f.copy()
    # 1/2 log((sqrt(1+e^2f) - 1)/(sqrt(1+e^2f) + 1)) = f - log(1 + sqrt(1 + e^2f)) = -asinh(e^-f)
    with np.errstate(over="ignore"):
        cp = np.where(f > 0, -np.arcsinh(np.exp(-np.abs(f))),
                      f - np.logaddexp(0.0, 0.5 * np.logaddexp(0.0, 2.0 * f)))
    return np.where(eps == 1, cp, f)


def f_from_u(u, epsilon, background):
    u = np.asarray(u, dtype=float)
    eps = np.broadcast_to(np.asarray(epsilon), u.shape)
    if not Background(background).hyperbolic:
        return u.copy()
    if (u[eps == 1] >= 0).any():
        raise InvalidU("hyperbolic vertices with epsilon=1 need u < 0")
    with np.errstate(invalid="ignore", divide="ignore"):
        cp = np.log(2.0) + u - np.log(-np.expm1(2.0 * u))
    return np.where(eps == 1, cp, u)


def r_from_u(u):
    """Radius ``2 artanh(e^u)`` for ``u < 0``."""
    u = np.asarray(u, dtype=float)
    if (u >= 0).any() or np.isnan(u).any():
        raise InvalidU("u must be negative")
    x = np.exp(u)
    return np.log1p(x) - np.where(u > -1.0, np.log(-np.expm1(u)), np.log1p(-x))


def u_from_r(r):
    """``log tanh(r/2)`` for ``r > 0``."""
    r = np.asarray(r, dtype=float)
    if (r <= 0).any() or np.isnan(r).any():
        raise InvalidR("radius must be positive")
    x = np.exp(-r)
    return np.where(r < 1.0, np.log(-np.expm1(-r)), np.log1p(-x)) - np.log1p(x)


def _hyperbolic_vertex_terms(u, eps):
    """Per-vertex ``a = sqrt(1 + eps e^{2f})``, ``a - 1`` and ``b = e^f``."""
    u = np.asarray(u, dtype=float)
    cp = eps == 1
    b = np.exp(u)
    am1 = np.zeros_like(u)
    if cp.any():
        uc = u[cp]
        if (uc >= 0).any():
            raise InvalidU("hyperbolic vertices with epsilon=1 need u < 0")
        den = -np.expm1(2.0 * uc)
        b[cp] = 2.0 * np.exp(uc) / den
        am1[cp] = 2.0 * np.exp(2.0 * uc) / den
    return 1.0 + am1, am1, b


def acosh1p(y):
    """``arccosh(1 + y)`` accurate for small ``y``."""
    y = np.asarray(y, dtype=float)
    return np.log1p(y + np.sqrt(y * (y + 2.0)))


def _lengths_and_partials(ends, dcs, eta, need_partials):
    i, j = ends[:, 0], ends[:, 1]
    u, eps = dcs.u, dcs.epsilon
    if not dcs.background.hyperbolic:
        ei, ej = np.exp(2.0 * u[i]), np.exp(2.0 * u[j])
        cross = eta * np.exp(u[i] + u[j])
        sq = eps[i] * ei + eps[j] * ej + 2.0 * cross
        if not (sq > 0).all():
            raise DegenerateLength(f"nonpositive squared length on edges {np.flatnonzero(~(sq > 0)).tolist()}")
        l = np.sqrt(sq)
        if not need_partials:
            return l, None, None
        return l, (eps[i] * ei + cross) / l, (eps[j] * ej + cross) / l
    a, am1, b = _hyperbolic_vertex_terms(u, eps)
    cross = eta * b[i] * b[j]
    y = am1[i] * am1[j] + am1[i] + am1[j] + cross
    if not (y > 0).all():
        raise DegenerateLength(f"cosh argument <= 1 on edges {np.flatnonzero(~(y > 0)).tolist()}")
    l = acosh1p(y)
    if not need_partials:
        return l, None, None
    sh = np.sqrt(y * (y + 2.0))
    di = (eps[i] * b[i] ** 2 * a[j] + a[i] * cross) / sh
    dj = (eps[j] * b[j] ** 2 * a[i] + a[j] * cross) / sh
    return l, di, dj


def edge_lengths(mesh, dcs) -> np.ndarray:
    """Lengths of every edge from the conformal factor and weights."""
    return _lengths_and_partials(mesh.edge_endpoints, dcs, dcs.eta, False)[0]


def edge_length_dcs(dcs, mesh, e) -> float:
    ends = mesh.edge_endpoints[[e]]
    return float(_lengths_and_partials(ends, dcs, dcs.eta[[e]], False)[0][0])


def length_derivatives(mesh, dcs):
    """Lengths and their partials w.r.t. the factor at each endpoint.

    Returns ``(l, dl_start, dl_end)`` per edge in reference direction.  For a
    loop edge the two partials refer to the same vertex and must be summed
    by the caller.
    """
    return _lengths_and_partials(mesh.edge_endpoints, dcs, dcs.eta, True)


def cp_length_from_radii(r_i, r_j, eta_ij):
    """Hyperbolic circle-packing length from ``cosh l = C_i C_j + eta S_i S_j``."""
    r_i, r_j, eta_ij = (np.asarray(x, dtype=float) for x in (r_i, r_j, eta_ij))
    if (r_i <= 0).any() or (r_j <= 0).any():
        raise InvalidR("radius must be positive")
    if ((eta_ij <= -1) | (eta_ij > 1)).any():
        raise ValueError("circle packings need eta in (-1, 1]")
    # C_i C_j + eta S_i S_j - 1 = 2 sinh^2((r_i - r_j)/2) + (1 + eta) S_i S_j
    y = 2.0 * np.sinh(0.5 * (r_i - r_j)) ** 2 + (1.0 + eta_ij) * np.sinh(r_i) * np.sinh(r_j)
    if not (y > 0).all():
        raise DegenerateLength("cosh argument <= 1")
    out = acosh1p(y)
    return float(out) if out.ndim == 0 else out


def vertex_scale_lengths(mesh, lengths, u, background):
    """Apply the vertex-scaling law of ``background`` with factor ``u``."""
    ends = mesh.edge_endpoints
    w = np.exp(0.5 * (np.asarray(u, float)[ends[:, 0]] + np.asarray(u, float)[ends[:, 1]]))
    lengths = np.asarray(lengths, dtype=float)
    if Background(background).hyperbolic:
        return 2.0 * np.arcsinh(np.sinh(0.5 * lengths) * w)
    return lengths * w


def eta_from_lengths(mesh, dcs, lengths, edges=None):
    """Edge weights that reproduce ``lengths`` at the structure's current ``u``."""
    ends = mesh.edge_endpoints if edges is None else mesh.edge_endpoints[edges]
    lengths = np.asarray(lengths, dtype=float)
    i, j = ends[:, 0], ends[:, 1]
    u, eps = dcs.u, dcs.epsilon
    if not dcs.background.hyperbolic:
        return (lengths ** 2 - eps[i] * np.exp(2 * u[i]) - eps[j] * np.exp(2 * u[j])) / (2.0 * np.exp(u[i] + u[j]))
    _, am1, b = _hyperbolic_vertex_terms(u, eps)
    y = 2.0 * np.sinh(0.5 * lengths) ** 2
    return (y - am1[i] * am1[j] - am1[i] - am1[j]) / (b[i] * b[j])


def _face_lengths(mesh, lengths):
    return np.asarray(lengths, dtype=float)[mesh.face_edges]


def triangle_slack(mesh, lengths) -> np.ndarray:
    """Per-face ``min(l_j + l_k - l_i) / max(l)``; positive iff nondegenerate."""
    lf = _face_lengths(mesh, lengths)
    excess = lf.sum(axis=1, keepdims=True) - 2.0 * lf
    return excess.min(axis=1) / lf.max(axis=1)


def nondegeneracy_check(mesh, lengths) -> list[int]:
    """Faces violating a strict triangle inequality."""
    lf = _face_lengths(mesh, lengths)
    bad = ~((lf[:, 0] < lf[:, 1] + lf[:, 2]) & (lf[:, 1] < lf[:, 2] + lf[:, 0])
            & (lf[:, 2] < lf[:, 0] + lf[:, 1]))
    return [int(f) for f in np.flatnonzero(bad)]


# ----------------------------------------------------------- file format

def format_structure(dcs: DiscreteConformalStructure) -> str:
    lines = ["format=1", f"background {dcs.background.value}", f"vertices {dcs.num_vertices}"]
    f = dcs.f
    lines += [f"{i} {int(e)} {x:.17g}" for i, (e, x) in enumerate(zip(dcs.epsilon, f))]
    lines.append(f"edges {len(dcs.eta)}")
    lines += [f"{e} {x:.17g}" for e, x in enumerate(dcs.eta)]
    return "\n".join(lines) + "\n"


def parse_structure(text: str) -> DiscreteConformalStructure:
    rows = [(n, ln.split("#", 1)[0].split()) for n, ln in enumerate(text.splitlines(), 1)]
    rows = [(n, tok) for n, tok in rows if tok]
    if rows and rows[0][1][0].startswith("format="):
        n, tok = rows.pop(0)
        if tok[0] != "format=1":
            raise ParseError(f"unsupported {tok[0]}", n, 1)

    def take(keyword):
        if not rows:
            raise ParseError(f"missing {keyword!r} section")
        n, tok = rows.pop(0)
        if tok[0] != keyword or len(tok) != 2:
            raise ParseError(f"expected '{keyword} <value>'", n, 1)
        return n, tok[1]

    n, bg = take("background")
    try:
        background = Background(bg)
    except ValueError:
        raise ParseError(f"unknown background {bg!r}", n, 12) from None

    def table(count_line, count, width, converters):
        out = []
        for k in range(count):
            if not rows:
                raise ParseError(f"expected {count} rows", count_line, 1)
            n, tok = rows.pop(0)
            if len(tok) != width:
                raise ParseError(f"expected {width} fields, got {len(tok)}", n, 1)
            try:
                idx = int(tok[0])
                vals = [conv(t) for conv, t in zip(converters, tok[1:])]
            except ValueError as exc:
                raise ParseError(str(exc), n, 1) from None
            if idx != k:
                raise ParseError(f"expected index {k}, got {idx}", n, 1)
            out.append(vals)
        return out

    n, nv = take("vertices")
    verts = table(n, int(nv), 3, (int, float))
    n, ne = take("edges")
    edges = table(n, int(ne), 2, (float,))
    if rows:
        raise ParseError("trailing content", rows[0][0], 1)
    eps = [v[0] for v in verts]
    f = [v[1] for v in verts]
    return DiscreteConformalStructure.from_f(background, eps, [e[0] for e in edges], f)


def read_structure(path) -> DiscreteConformalStructure:
    return parse_structure(Path(path).read_text())


def write_structure(dcs, path) -> None:
    Path(path).write_text(format_structure(dcs))
