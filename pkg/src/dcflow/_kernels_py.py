"""Pure numpy implementation of the per-face kernels.

Layout conventions shared with ``_kernels_cy``: ``lf[f, c]`` is the length
of the side opposite slot ``c``; ``dls[f, c]`` / ``dle[f, c]`` are the
derivatives of that length with respect to the conformal factor at its
start slot ``c+1`` / end slot ``c+2``.
"""
import numpy as np

BACKEND = "python"


def _rolled(x):
    return x, np.roll(x, -1, axis=1), np.roll(x, -2, axis=1)


def triangle_angles(lf, hyperbolic):
    lf = np.asarray(lf, dtype=float)
    a, b, c = _rolled(lf)
    # semiperimeter differences computed without cancellation
    sa = 0.5 * (b + c - a)
    sb = 0.5 * (c + a - b)
    sc = 0.5 * (a + b - c)
    s = 0.5 * (a + b + c)
    if hyperbolic:
        num = np.sinh(sb) * np.sinh(sc)
        den = np.sinh(s) * np.sinh(sa)
    else:
        num = sb * sc
        den = s * sa
    return 2.0 * np.arctan2(np.sqrt(num), np.sqrt(den))


def angle_length_derivatives(lf, theta, hyperbolic):
    """D[f, a, b] = d theta_a / d l_b."""
    lf = np.asarray(lf, dtype=float)
    nf = len(lf)
    if hyperbolic:
        sh = np.sinh(lf)
    else:
        sh = lf
    _, sb, sc = _rolled(sh)
    diag = sh / (sb * sc * np.sin(theta))
    cos = np.cos(theta)
    D = np.empty((nf, 3, 3))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        D[:, a, a] = diag[:, a]
        D[:, a, b] = -diag[:, a] * cos[:, c]
        D[:, a, c] = -diag[:, a] * cos[:, b]
    return D


def face_jacobian(lf, dls, dle, hyperbolic):
    """Angles and per-face angle gradients G[f, a, b] = d theta_a / d u_b."""
    theta = triangle_angles(lf, hyperbolic)
    D = angle_length_derivatives(lf, theta, hyperbolic)
    # dl[f, c, b]: derivative of side c w.r.t. the factor at slot b
    dl = np.zeros_like(D)
    for c in range(3):
        dl[:, c, (c + 1) % 3] = dls[:, c]
        dl[:, c, (c + 2) % 3] = dle[:, c]
    G = np.einsum("fac,fcb->fab", D, dl)
    return theta, G


def scatter_jacobian(faces, G, n):
    L = np.zeros((n, n))
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    np.add.at(L, (rows, cols), -G.reshape(len(faces), 9).ravel())
    return L


def angle_sums(faces, theta, n):
    return np.bincount(np.asarray(faces).ravel(), weights=np.asarray(theta).ravel(), minlength=n)
