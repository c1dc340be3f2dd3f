# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-face kernels; same API and conventions as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, sinh, sin, cos

cnp.import_array()

BACKEND = "cython"


cdef inline double _angle(double a, double b, double c, bint hyperbolic) nogil:
    cdef double sa = 0.5 * (b + c - a)
    cdef double sb = 0.5 * (c + a - b)
    cdef double sc = 0.5 * (a + b - c)
    cdef double s = 0.5 * (a + b + c)
    if hyperbolic:
        return 2.0 * atan2(sqrt(sinh(sb) * sinh(sc)), sqrt(sinh(s) * sinh(sa)))
    return 2.0 * atan2(sqrt(sb * sc), sqrt(s * sa))


def triangle_angles(lf, bint hyperbolic):
    cdef double[:, ::1] l = np.ascontiguousarray(lf, dtype=np.float64)
    cdef Py_ssize_t nf = l.shape[0], f, k
    out = np.empty((nf, 3))
    cdef double[:, ::1] th = out
    with nogil:
        for f in range(nf):
            for k in range(3):
                th[f, k] = _angle(l[f, k], l[f, (k + 1) % 3], l[f, (k + 2) % 3], hyperbolic)
    return out


def angle_length_derivatives(lf, theta, bint hyperbolic):
    cdef double[:, ::1] l = np.ascontiguousarray(lf, dtype=np.float64)
    cdef double[:, ::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t nf = l.shape[0], f, a, b, c
    out = np.empty((nf, 3, 3))
    cdef double[:, :, ::1] D = out
    cdef double sh[3]
    cdef double d
    with nogil:
        for f in range(nf):
            for a in range(3):
                sh[a] = sinh(l[f, a]) if hyperbolic else l[f, a]
            for a in range(3):
                b = (a + 1) % 3
                c = (a + 2) % 3
                d = sh[a] / (sh[b] * sh[c] * sin(th[f, a]))
                D[f, a, a] = d
                D[f, a, b] = -d * cos(th[f, c])
                D[f, a, c] = -d * cos(th[f, b])
    return out


def face_jacobian(lf, dls, dle, bint hyperbolic):
    cdef double[:, ::1] l = np.ascontiguousarray(lf, dtype=np.float64)
    cdef double[:, ::1] ds = np.ascontiguousarray(dls, dtype=np.float64)
    cdef double[:, ::1] de = np.ascontiguousarray(dle, dtype=np.float64)
    cdef Py_ssize_t nf = l.shape[0], f, a, b, c, k
    theta = np.empty((nf, 3))
    G = np.zeros((nf, 3, 3))
    cdef double[:, ::1] th = theta
    cdef double[:, :, ::1] g = G
    cdef double sh[3]
    cdef double cs[3]
    cdef double D[3][3]
    cdef double d
    with nogil:
        for f in range(nf):
            for k in range(3):
                th[f, k] = _angle(l[f, k], l[f, (k + 1) % 3], l[f, (k + 2) % 3], hyperbolic)
                sh[k] = sinh(l[f, k]) if hyperbolic else l[f, k]
                cs[k] = cos(th[f, k])
            for a in range(3):
                b = (a + 1) % 3
                c = (a + 2) % 3
                d = sh[a] / (sh[b] * sh[c] * sin(th[f, a]))
                D[a][a] = d
                D[a][b] = -d * cs[c]
                D[a][c] = -d * cs[b]
            # G[a, b] = sum_c D[a, c] * dl[c, b]; side c touches slots c+1, c+2
            for a in range(3):
                for c in range(3):
                    g[f, a, (c + 1) % 3] += D[a][c] * ds[f, c]
                    g[f, a, (c + 2) % 3] += D[a][c] * de[f, c]
    return theta, G


def scatter_jacobian(faces, G, Py_ssize_t n):
    cdef long[:, ::1] fv = np.ascontiguousarray(faces, dtype=np.int64)
    cdef double[:, :, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    L = np.zeros((n, n))
    cdef double[:, ::1] out = L
    cdef Py_ssize_t f, a, b
    with nogil:
        for f in range(fv.shape[0]):
            for a in range(3):
                for b in range(3):
                    out[fv[f, a], fv[f, b]] -= g[f, a, b]
    return L


def angle_sums(faces, theta, Py_ssize_t n):
    cdef long[:, ::1] fv = np.ascontiguousarray(faces, dtype=np.int64)
    cdef double[:, ::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    out = np.zeros(n)
    cdef double[::1] acc = out
    cdef Py_ssize_t f, k
    with nogil:
        for f in range(fv.shape[0]):
            for k in range(3):
                acc[fv[f, k]] += th[f, k]
    return out
