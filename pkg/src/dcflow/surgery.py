"""Delaunay conditions and surgery by edge flipping.

A flip replaces an edge by the other diagonal of its quadrilateral, with the
new length measured in the developed quadrilateral, so the metric is
unchanged.  On a conformal structure the new edge's weight ``eta`` is
re-derived so that the length law reproduces that length at the current
``u``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DCFlowError, FlipLimitExceeded
from .geometry import flip_diagonal_length, metric_state, quad_lengths
from .jacobian import edge_weights, jacobian_L
from .mesh import flip_edge
from .structure import Background, edge_lengths, eta_from_lengths

__all__ = [
    "DELAUNAY_TOL",
    "DelaunayReport",
    "FlipEvent",
    "delaunay_slack",
    "delaunay_check",
    "flip_metric_to_delaunay",
    "flip_to_delaunay",
    "conformal_transport",
    "run_flow_with_surgery",
    "weighted_delaunay_surgery_mode",
]

log = logging.getLogger(__name__)

#: slack at or above ``-DELAUNAY_TOL`` counts as Delaunay
DELAUNAY_TOL = 1e-10
FLIP_BUDGET_PER_EDGE = 50


@dataclass
class DelaunayReport:
    slack: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())


@dataclass
class FlipEvent:
    t: float
    edge: int
    vertices: tuple          # (i, j, k, l): old edge ij, new edge kl
    faces: tuple
    old_length: float
    new_length: float
    slack_before: float
    slack_after: float
    area_before: float = float("nan")   # total area of the surface
    area_after: float = float("nan")


def delaunay_slack(mesh, angles, background) -> np.ndarray:
    """Per-edge Delaunay slack; negative means the edge violates the condition."""
    h0, h1 = mesh.edges[:, 0], mesh.edges[:, 1]
    f0, k0 = np.divmod(h0, 3)
    f1, k1 = np.divmod(h1, 3)
    opposite = angles[f0, k0] + angles[f1, k1]
    if not Background(background).hyperbolic:
        return np.pi - opposite
    ends = (angles[f0, (k0 + 1) % 3] + angles[f0, (k0 + 2) % 3]
            + angles[f1, (k1 + 1) % 3] + angles[f1, (k1 + 2) % 3])
    return ends - opposite


def _sorted_violations(slack, tol):
    bad = np.flatnonzero(slack < -tol)
    return [int(e) for e in bad[np.lexsort((bad, slack[bad]))]]


def delaunay_check(mesh, lengths, background, tol=DELAUNAY_TOL) -> DelaunayReport:
    state = metric_state(mesh, lengths, background)
    slack = delaunay_slack(mesh, state.angles, background)
    return DelaunayReport(slack, _sorted_violations(slack, tol))


def _flip_once(mesh, lengths, e, background, t):
    verts, quad = quad_lengths(mesh, lengths, e)
    new_len = flip_diagonal_length(*quad, background)
    old_state = metric_state(mesh, lengths, background)
    before = float(delaunay_slack(mesh, old_state.angles, background)[e])
    faces = (int(mesh.edges[e, 0]) // 3, int(mesh.edges[e, 1]) // 3)
    mesh, e = flip_edge(mesh, e)
    lengths = lengths.copy()
    lengths[e] = new_len
    new_state = metric_state(mesh, lengths, background)
    after = float(delaunay_slack(mesh, new_state.angles, background)[e])
    ev = FlipEvent(t, e, verts, faces, float(quad[0]), new_len, before, after,
                   float(old_state.face_areas.sum()), float(new_state.face_areas.sum()))
    return mesh, lengths, ev


def flip_metric_to_delaunay(mesh, lengths, background, t=0.0, tol=DELAUNAY_TOL):
    """Flip worst-first until the metric is Delaunay.

    Returns ``(mesh, lengths, events)``.
    """
    background = Background(background)
    lengths = np.asarray(lengths, dtype=float).copy()
    budget = FLIP_BUDGET_PER_EDGE * mesh.num_edges
    events = []
    while True:
        report = delaunay_check(mesh, lengths, background, tol)
        if report.ok:
            return mesh, lengths, events
        if len(events) >= budget:
            raise FlipLimitExceeded(f"more than {budget} flips without reaching a Delaunay triangulation")
        mesh, lengths, ev = _flip_once(mesh, lengths, report.violations[0], background, t)
        events.append(ev)


def flip_to_delaunay(mesh, dcs, t=0.0, weighted=False, tol=DELAUNAY_TOL):
    """Restore the (weighted) Delaunay condition on a conformal structure.

    Returns ``(mesh, dcs, events)``; ``dcs.u`` is never modified.
    """
    budget = FLIP_BUDGET_PER_EDGE * mesh.num_edges
    events = []
    while True:
        lengths = edge_lengths(mesh, dcs)
        if weighted:
            # flag by the weights, order by metric slack so vertex scaling flips exactly as below
            w = edge_weights(mesh, jacobian_L(mesh, dcs).face_gradients)
            scale = max(1.0, float(np.abs(w).max()))
            bad = np.flatnonzero(w > tol * scale)
            slack = delaunay_check(mesh, lengths, dcs.background, tol).slack
            violations = [int(e) for e in bad[np.lexsort((bad, slack[bad]))]]
        else:
            violations = delaunay_check(mesh, lengths, dcs.background, tol).violations
        if not violations:
            return mesh, dcs, events
        if len(events) >= budget:
            raise FlipLimitExceeded(f"more than {budget} flips without restoring the Delaunay condition")
        e = violations[0]
        mesh, lengths, ev = _flip_once(mesh, lengths, e, dcs.background, t)
        eta = dcs.eta.copy()
        eta[e] = eta_from_lengths(mesh, dcs, lengths[[e]], edges=[e])[0]
        dcs = dcs.with_eta(eta)
        events.append(ev)
        log.debug("t=%.6g flip edge %d %s new length %.6g", t, e, ev.vertices, ev.new_length)


def _delaunay_state(mesh, dcs):
    """``(ok, violated edges)`` for ``dcs`` on ``mesh``; degenerate counts as not ok."""
    try:
        lengths = edge_lengths(mesh, dcs)
        report = delaunay_check(mesh, lengths, dcs.background)
    except DCFlowError:
        return False, None
    return report.ok, report.violations


def conformal_transport(mesh, dcs, u_target, max_increment=0.05, tol=1e-13):
    """Change the conformal factor to ``u_target`` inside the discrete conformal class.

    The factor moves along the straight segment; whenever an edge is about
    to lose the Delaunay property the crossing is located by bisection and
    the edge is flipped there, where its quadrilateral is inscribed and both
    diagonals scale consistently.  Requires vertex scaling (``epsilon = 0``).

    Returns ``(mesh, dcs, events)`` with ``dcs.u == u_target``.
    """
    if (dcs.epsilon != 0).any():
        raise ValueError("conformal transport is defined for vertex scaling (epsilon = 0)")
    u_target = np.asarray(u_target, dtype=float)
    mesh, dcs, events = flip_to_delaunay(mesh, dcs)
    u_start = dcs.u.copy()
    du = u_target - u_start
    span = float(np.abs(du).max())
    if span == 0.0:
        return mesh, dcs, events
    h = max_increment / span
    tau = 0.0
    budget = FLIP_BUDGET_PER_EDGE * mesh.num_edges
    while tau < 1.0:
        hi = min(1.0, tau + h)
        ok, _ = _delaunay_state(mesh, dcs.with_u(u_start + hi * du))
        if ok:
            tau = hi
            dcs = dcs.with_u(u_start + tau * du)
            continue
        lo = tau
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _delaunay_state(mesh, dcs.with_u(u_start + mid * du))[0]:
                lo = mid
            else:
                hi = mid
        _, bad = _delaunay_state(mesh, dcs.with_u(u_start + hi * du))
        tau = lo
        dcs = dcs.with_u(u_start + tau * du)
        lengths = edge_lengths(mesh, dcs)
        if not bad:
            raise DCFlowError(f"metric degenerates at tau={tau:.6g} before any Delaunay crossing")
        for e in bad[:1]:
            mesh, lengths, ev = _flip_once(mesh, lengths, e, dcs.background, 0.0)
            eta = dcs.eta.copy()
            eta[e] = eta_from_lengths(mesh, dcs, lengths[[e]], edges=[e])[0]
            dcs = dcs.with_eta(eta)
            events.append(ev)
        if len(events) > budget:
            raise FlipLimitExceeded(f"more than {budget} flips during conformal transport")
    return mesh, dcs.with_u(u_target), events


def run_flow_with_surgery(mesh, dcs, config):
    """Vertex-scaling flow with Delaunay surgery after every accepted step."""
    from dataclasses import replace

    from .errors import PreconditionViolated
    from .flow import run_flow
    if (dcs.epsilon != 0).any():
        raise PreconditionViolated("surgery by Delaunay flips is defined for vertex scaling (epsilon = 0)")
    return run_flow(mesh, dcs, replace(config, surgery="delaunay"))


def weighted_delaunay_surgery_mode(mesh, dcs, config):
    """Experimental: flip whenever ``dK_i/du_j > 0`` on an edge.

    No convergence is claimed for general structures; the result's status
    and trace report what happened.
    """
    from dataclasses import replace

    from .flow import run_flow
    return run_flow(mesh, dcs, replace(config, surgery="weighted_delaunay"))
