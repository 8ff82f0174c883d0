# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled block coordinate sweeps (same semantics as ``_kernels_py``)."""

import numpy as np

from libc.math cimport sqrt, fabs
from libc.stdlib cimport qsort


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


cdef void _project_l2(double[::1] w) noexcept nogil:
    cdef Py_ssize_t i, n = w.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += w[i] * w[i]
    s = sqrt(s)
    if s > 1.0:
        for i in range(n):
            w[i] = w[i] / s


cdef void _project_l1(double[::1] w, double[::1] buf) noexcept nogil:
    cdef Py_ssize_t i, n = w.shape[0]
    cdef double total = 0.0, css = 0.0, theta = 0.0, a
    for i in range(n):
        buf[i] = fabs(w[i])
        total += buf[i]
    if total <= 1.0:
        return
    qsort(&buf[0], n, sizeof(double), _cmp_desc)
    for i in range(n):
        css += buf[i]
        if buf[i] - (css - 1.0) / (i + 1) > 0:
            theta = (css - 1.0) / (i + 1)
    for i in range(n):
        a = fabs(w[i]) - theta
        if a <= 0:
            w[i] = 0.0
        elif w[i] > 0:
            w[i] = a
        else:
            w[i] = -a


def project_l2(w):
    out = np.array(w, dtype=np.float64, copy=True)
    _project_l2(out)
    return out


def project_l1(w):
    out = np.array(w, dtype=np.float64, copy=True)
    buf = np.empty_like(out)
    _project_l1(out, buf)
    return out


def sweep_u(double[:, ::1] U, const double[:, ::1] XV, const double[:, ::1] VtV,
            int n_sweeps, bint l1, bint nonneg):
    """In-place BCD sweeps over the columns of ``U``; returns skipped updates."""
    cdef Py_ssize_t n = U.shape[0], r = U.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int t, skipped = 0
    cdef double d, s, g
    cdef double[::1] w = np.empty(n)
    cdef double[::1] buf = np.empty(n)
    with nogil:
        for t in range(n_sweeps):
            for k in range(r):
                d = VtV[k, k]
                if d <= 0.0:
                    skipped += 1
                    continue
                for i in range(n):
                    s = 0.0
                    for j in range(r):
                        s += U[i, j] * VtV[j, k]
                    g = U[i, k] + (XV[i, k] - s) / d
                    if nonneg and g < 0.0:
                        g = 0.0
                    w[i] = g
                if l1:
                    _project_l1(w, buf)
                else:
                    _project_l2(w)
                for i in range(n):
                    U[i, k] = w[i]
    return skipped


def sweep_v(double[:, ::1] V, const double[:, ::1] XtU, const double[:, ::1] UtU,
            const double[:, ::1] zeta, double nplam, int n_sweeps, bint nonneg):
    """In-place BCD sweeps over the columns of ``V``; returns dead-element updates."""
    cdef Py_ssize_t p = V.shape[0], r = V.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int t, dead = 0
    cdef double c, s, g, v, z
    cdef double[::1] col = np.empty(p)
    with nogil:
        for t in range(n_sweeps):
            for k in range(r):
                c = UtU[k, k]
                if c <= 0.0 and nplam <= 0.0:
                    for i in range(p):
                        V[i, k] = 0.0
                    dead += 1
                    continue
                for i in range(p):
                    s = 0.0
                    for j in range(r):
                        s += V[i, j] * UtU[j, k]
                    g = XtU[i, k] - s + c * V[i, k]
                    if nplam <= 0.0:
                        v = g / c
                    else:
                        z = zeta[i, k]
                        v = z * g / (c * z + nplam)
                    if nonneg and v < 0.0:
                        v = 0.0
                    col[i] = v
                for i in range(p):
                    V[i, k] = col[i]
    return dead
