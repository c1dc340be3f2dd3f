"""Angles, curvature and areas of piecewise Euclidean / hyperbolic metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DegenerateTriangle, FoldedQuad
from .mesh import euler_characteristic
from .structure import Background, acosh1p, nondegeneracy_check

__all__ = [
    "MetricState",
    "inner_angles",
    "metric_state",
    "curvature",
    "hyperbolic_area",
    "gauss_bonnet_residual",
    "flip_diagonal_length",
    "quad_lengths",
]

TWO_PI = 2.0 * np.pi


@dataclass
class MetricState:
    lengths: np.ndarray      # (E,)
    angles: np.ndarray       # (F, 3), angle at each face slot
    K: np.ndarray            # (N,)
    face_areas: np.ndarray   # (F,)
    background: Background

    @property
    def min_angle(self) -> float:
        return float(self.angles.min())


def inner_angles(l_a, l_b, l_c, background):
    """Angles opposite sides ``a, b, c`` of one triangle (half-angle formulas)."""
    lf = np.array([[l_a, l_b, l_c]], dtype=float)
    if nondegeneracy_check_lengths(lf).any():
        raise DegenerateTriangle(f"triangle inequality fails for {(l_a, l_b, l_c)}")
    return tuple(float(x) for x in kernels.triangle_angles(lf, Background(background).hyperbolic)[0])


def nondegeneracy_check_lengths(lf):
    lf = np.asarray(lf, dtype=float)
    return ~((lf[:, 0] < lf[:, 1] + lf[:, 2]) & (lf[:, 1] < lf[:, 2] + lf[:, 0])
             & (lf[:, 2] < lf[:, 0] + lf[:, 1]) & (lf > 0).all(axis=1))


def hyperbolic_area(theta_a, theta_b, theta_c):
    area = np.pi - (theta_a + theta_b + theta_c)
    if np.any(area <= 0):
        raise DegenerateTriangle("hyperbolic angle sum must be below pi")
    return area


def curvature(mesh, angles) -> np.ndarray:
    """``K_i = 2 pi`` minus the total angle over corners at ``i``."""
    return TWO_PI - kernels.angle_sums(mesh.faces, angles, mesh.num_vertices)


def _euclidean_areas(lf):
    a, b, c = lf[:, 0], lf[:, 1], lf[:, 2]
    s = 0.5 * (a + b + c)
    return np.sqrt(s * 0.5 * (b + c - a) * 0.5 * (c + a - b) * 0.5 * (a + b - c))


def metric_state(mesh, lengths, background) -> MetricState:
    background = Background(background)
    lengths = np.asarray(lengths, dtype=float)
    bad = nondegeneracy_check(mesh, lengths)
    if bad or not (lengths > 0).all():
        raise DegenerateTriangle(f"degenerate faces {bad}")
    lf = lengths[mesh.face_edges]
    angles = kernels.triangle_angles(lf, background.hyperbolic)
    K = curvature(mesh, angles)
    if background.hyperbolic:
        areas = np.pi - angles.sum(axis=1)
    else:
        areas = _euclidean_areas(lf)
    return MetricState(lengths, angles, K, areas, background)


def gauss_bonnet_residual(mesh, state: MetricState) -> float:
    """``sum K - 2 pi chi`` (minus total area in the hyperbolic case)."""
    target = TWO_PI * euler_characteristic(mesh)
    if state.background.hyperbolic:
        target += state.face_areas.sum()
    return float(state.K.sum() - target)


def flip_diagonal_length(l_ij, l_jk, l_ki, l_il, l_lj, background) -> float:
    """Distance between ``k`` and ``l`` after developing triangles ``ijk`` and
    ``ijl`` on opposite sides of ``ij``.

    Raises
    ------
    FoldedQuad
        If the quadrilateral is not strictly convex at ``i`` or ``j``, so the
        new diagonal would leave it.
    """
    background = Background(background)
    th_ijk = inner_angles(l_jk, l_ki, l_ij, background)  # at i, j, k
    th_ijl = inner_angles(l_lj, l_il, l_ij, background)  # at i, j, l
    at_i = th_ijk[0] + th_ijl[0]
    at_j = th_ijk[1] + th_ijl[1]
    if at_i >= np.pi or at_j >= np.pi:
        raise FoldedQuad(f"quadrilateral angles at edge ends {at_i:.6g}, {at_j:.6g}")
    if background.hyperbolic:
        # cosh d = cosh a cosh b - sinh a sinh b cos(phi), rewritten without cancellation
        y = 2.0 * np.sinh(0.5 * (l_ki - l_il)) ** 2 + 2.0 * np.sinh(l_ki) * np.sinh(l_il) * np.sin(0.5 * at_i) ** 2
        return float(acosh1p(y))
    # planar development: i at the origin, j on the positive x-axis
    k = l_ki * np.array([np.cos(th_ijk[0]), np.sin(th_ijk[0])])
    l = l_il * np.array([np.cos(th_ijl[0]), -np.sin(th_ijl[0])])
    return float(np.hypot(*(k - l)))


def quad_lengths(mesh, lengths, e):
    """Vertices ``(i, j, k, l)`` and lengths ``(l_ij, l_jk, l_ki, l_il, l_lj)``
    of the quadrilateral around edge ``e``; ``k`` lies in the face of the
    edge's reference halfedge."""
    h0, h1 = (int(x) for x in mesh.edges[e])
    f0, k0 = divmod(h0, 3)
    f1, k1 = divmod(h1, 3)
    fe = mesh.face_edges
    kv, i, j = (int(mesh.faces[f0, (k0 + t) % 3]) for t in range(3))
    lv = int(mesh.faces[f1, k1])
    ls = lengths
    return (i, j, kv, lv), (ls[e], ls[fe[f0, (k0 + 1) % 3]], ls[fe[f0, (k0 + 2) % 3]],
                            ls[fe[f1, (k1 + 1) % 3]], ls[fe[f1, (k1 + 2) % 3]])
