"""The curvature Jacobian ``L = dK/du``.

``L`` is assembled face by face with the chain rule: angle derivatives with
respect to side lengths (cosine laws) times side-length derivatives with
respect to the conformal factor (length laws).  The closed forms known for
hyperbolic circle packings are provided separately as cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DegenerateTriangle, PreconditionViolated
from .geometry import MetricState, curvature, metric_state
from .structure import (Background, check_structure_condition, edge_lengths, length_derivatives,
                        nondegeneracy_check)

__all__ = [
    "JacobianL",
    "face_inputs",
    "angle_gradients",
    "jacobian_L",
    "curvature_and_jacobian",
    "curvature_of",
    "jacobian_fd_oracle",
    "edge_weights",
    "weighted_delaunay_indicator",
    "WeightedDelaunayReport",
    "decompose_A_B",
    "cp_angle_derivative",
    "area_gradients",
    "glickenstein_thomas_area_gradients",
    "area_squared_identity_check",
]


@dataclass
class JacobianL:
    matrix: np.ndarray           # (N, N)
    face_gradients: np.ndarray   # (F, 3, 3), d theta_a / d u_b per face slot
    background: Background

    def symmetry_residual(self) -> float:
        M = self.matrix
        return float((np.abs(M - M.T) / (1.0 + np.abs(M))).max()) if M.size else 0.0


def face_inputs(mesh, dcs):
    """Per-face side lengths and their endpoint partials, oriented per slot."""
    l, d_start, d_end = length_derivatives(mesh, dcs)
    fe = mesh.face_edges
    rev = mesh.face_side_reversed
    lf = l[fe]
    dls = np.where(rev, d_end[fe], d_start[fe])
    dle = np.where(rev, d_start[fe], d_end[fe])
    return l, lf, dls, dle


def curvature_and_jacobian(mesh, dcs):
    """Metric state and Jacobian in one kernel pass."""
    l, lf, dls, dle = face_inputs(mesh, dcs)
    bad = nondegeneracy_check(mesh, l)
    if bad:
        raise DegenerateTriangle(f"degenerate faces {bad}")
    theta, G = kernels.face_jacobian(lf, dls, dle, dcs.background.hyperbolic)
    K = curvature(mesh, theta)
    if dcs.background.hyperbolic:
        areas = np.pi - theta.sum(axis=1)
    else:
        a, b, c = lf[:, 0], lf[:, 1], lf[:, 2]
        s = 0.5 * (a + b + c)
        areas = np.sqrt(s * 0.5 * (b + c - a) * 0.5 * (c + a - b) * 0.5 * (a + b - c))
    state = MetricState(l, theta, K, areas, dcs.background)
    L = kernels.scatter_jacobian(mesh.faces, G, mesh.num_vertices)
    return state, JacobianL(L, G, dcs.background)


def angle_gradients(mesh, dcs, face=None):
    """``d theta_a / d u_b`` per face slot, shape (F, 3, 3) or (3, 3)."""
    _, jac = curvature_and_jacobian(mesh, dcs)
    return jac.face_gradients if face is None else jac.face_gradients[face]


def jacobian_L(mesh, dcs) -> JacobianL:
    return curvature_and_jacobian(mesh, dcs)[1]


def curvature_of(mesh, dcs) -> np.ndarray:
    return metric_state(mesh, edge_lengths(mesh, dcs), dcs.background).K


def jacobian_fd_oracle(mesh, dcs, h=1e-6) -> np.ndarray:
    """Central differences of curvature in ``u``; a test oracle."""
    n = dcs.num_vertices
    J = np.empty((n, n))
    for j in range(n):
        up = dcs.u.copy()
        dn = dcs.u.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (curvature_of(mesh, dcs.with_u(up)) - curvature_of(mesh, dcs.with_u(dn))) / (2 * h)
    return J


def edge_weights(mesh, G) -> np.ndarray:
    """Per-edge share of ``dK_i/du_j`` for the edge's endpoints ``i, j``.

    On a simplicial surface this equals the off-diagonal entry ``L_ij``.
    """
    h0, h1 = mesh.edges[:, 0], mesh.edges[:, 1]
    f0, k0 = np.divmod(h0, 3)
    f1, k1 = np.divmod(h1, 3)
    return -(G[f0, (k0 + 1) % 3, (k0 + 2) % 3] + G[f1, (k1 + 2) % 3, (k1 + 1) % 3])


@dataclass
class WeightedDelaunayReport:
    weights: np.ndarray
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def weighted_delaunay_indicator(mesh, dcs, tol=1e-10) -> WeightedDelaunayReport:
    """Edges where ``dK_i/du_j > tol`` (weighted Delaunay violations), worst first."""
    w = edge_weights(mesh, angle_gradients(mesh, dcs))
    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    bad = np.flatnonzero(w > tol * scale)
    bad = bad[np.lexsort((bad, -w[bad]))]
    return WeightedDelaunayReport(w, [int(e) for e in bad])


def _require_hyperbolic_cp(mesh, dcs):
    if not dcs.background.hyperbolic or (dcs.epsilon != 1).any():
        raise PreconditionViolated("needs a hyperbolic circle packing (epsilon = 1)")
    if ((dcs.eta <= -1) | (dcs.eta > 1)).any():
        raise PreconditionViolated("circle packings need eta in (-1, 1]")
    if not check_structure_condition(mesh, dcs.epsilon, dcs.eta).ok:
        raise PreconditionViolated("structure condition fails")


def decompose_A_B(mesh, dcs):
    """Split ``L = A + B`` with ``A`` diagonal and ``B`` the weighted graph
    Laplacian of ``-edge_weights`` (hyperbolic circle packings).

    Returns ``(A, B)`` as dense matrices.
    """
    _require_hyperbolic_cp(mesh, dcs)
    jac = jacobian_L(mesh, dcs)
    w = edge_weights(mesh, jac.face_gradients)
    n = dcs.num_vertices
    B = np.zeros((n, n))
    for (i, j), we in zip(mesh.edge_endpoints, w):
        if i == j:
            continue
        B[i, j] += we
        B[j, i] += we
        B[i, i] -= we
        B[j, j] -= we
    A = jac.matrix - B
    return A, B


def area_gradients(mesh, G) -> np.ndarray:
    """``d Area(face) / d u`` at each slot from ``Area = pi - sum(theta)``."""
    return -G.sum(axis=1)


def glickenstein_thomas_area_gradients(mesh, dcs, G=None) -> np.ndarray:
    """``dArea/du_i = dtheta_j/du_i (cosh l_ij - 1) + dtheta_k/du_i (cosh l_ik - 1)``."""
    if G is None:
        G = angle_gradients(mesh, dcs)
    l = edge_lengths(mesh, dcs)
    ch1f = (2.0 * np.sinh(0.5 * l) ** 2)[mesh.face_edges]  # cosh(l) - 1
    out = np.empty((mesh.num_faces, 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        # side opposite k joins i and j; side opposite j joins i and k
        out[:, i] = G[:, j, i] * ch1f[:, k] + G[:, k, i] * ch1f[:, j]
    return out


def cp_angle_derivative(r_i, r_j, r_k, eta_ij, eta_ik, eta_jk):
    """Closed form of ``d theta_i / d u_j`` in a hyperbolic circle-packing face."""
    C = np.cosh([r_i, r_j, r_k])
    S = np.sinh([r_i, r_j, r_k])
    Ci, Cj, Ck = C
    Si, Sj, Sk = S
    ch_ij = Ci * Cj + eta_ij * Si * Sj
    ch_ik = Ci * Ck + eta_ik * Si * Sk
    ch_jk = Cj * Ck + eta_jk * Sj * Sk
    sh_ij = np.sqrt(ch_ij ** 2 - 1.0)
    sh_ik = np.sqrt(ch_ik ** 2 - 1.0)
    cos_i = (ch_ij * ch_ik - ch_jk) / (sh_ij * sh_ik)
    A = sh_ij * sh_ik * np.sqrt(1.0 - cos_i ** 2)
    g_ijk = eta_jk + eta_ij * eta_ik
    g_jik = eta_ik + eta_ij * eta_jk
    num = Ck * Si ** 2 * Sj ** 2 * (1 - eta_ij ** 2) + Ci * Si * Sj ** 2 * Sk * g_jik + Cj * Si ** 2 * Sj * Sk * g_ijk
    return num / (A * sh_ij ** 2)


def area_squared_identity_check(l_ij, l_ik, l_jk) -> float:
    """``|A^2 - (1 + 2 c_ij c_ik c_jk - c_ij^2 - c_ik^2 - c_jk^2)|`` with
    ``A = sinh l_ij sinh l_ik sin theta_i``."""
    from .geometry import inner_angles
    theta_i = inner_angles(l_jk, l_ik, l_ij, Background.HYPERBOLIC)[0]
    A = np.sinh(l_ij) * np.sinh(l_ik) * np.sin(theta_i)
    c1, c2, c3 = np.cosh([l_ij, l_ik, l_jk])
    return float(abs(A ** 2 - (1 + 2 * c1 * c2 * c3 - c1 ** 2 - c2 ** 2 - c3 ** 2)))
