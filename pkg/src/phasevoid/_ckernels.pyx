# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_kernels_py``.

Same signatures, same arithmetic order per cell; results agree with the numpy
fallback to rounding.
"""
import numpy as np
from libc.math cimport sqrt

NAME = "cython"


cdef void _apply(const double[:, ::1] u, double mass, double cx, double cy,
                 const double[:, ::1] diag, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double c, s
    for i in range(nx):
        for j in range(ny):
            c = u[i, j]
            s = (mass + diag[i, j]) * c
            if i > 0:
                s = s + cx * (c - u[i - 1, j])
            if i < nx - 1:
                s = s + cx * (c - u[i + 1, j])
            if j > 0:
                s = s + cy * (c - u[i, j - 1])
            if j < ny - 1:
                s = s + cy * (c - u[i, j + 1])
            out[i, j] = s


cdef double _dot(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s = s + a[i, j] * b[i, j]
    return s


def apply_operator(const double[:, ::1] u, double mass, double cx, double cy,
                   const double[:, ::1] diag, double[:, ::1] out):
    with nogil:
        _apply(u, mass, cx, cy, diag, out)
    return np.asarray(out)


def cr_solve(const double[:, ::1] rhs, double[:, ::1] x, double mass, double cx,
             double cy, const double[:, ::1] diag, double tol, int maxiter):
    cdef Py_ssize_t nx = rhs.shape[0], ny = rhs.shape[1], i, j
    cdef int it
    cdef double bnorm, target, rnorm, alpha, beta, rar, rar_new, apap
    history_arr = np.empty(maxiter + 1)
    cdef double[::1] history = history_arr
    bnorm = sqrt(_dot(rhs, rhs))
    if bnorm == 0.0:
        for i in range(nx):
            for j in range(ny):
                x[i, j] = 0.0
        history[0] = 0.0
        return 0, history_arr[:1]
    r_arr = np.empty((nx, ny))
    ar_arr = np.empty((nx, ny))
    p_arr = np.empty((nx, ny))
    ap_arr = np.empty((nx, ny))
    cdef double[:, ::1] r = r_arr
    cdef double[:, ::1] ar = ar_arr
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] ap = ap_arr
    target = tol * bnorm
    with nogil:
        _apply(x, mass, cx, cy, diag, ar)
        for i in range(nx):
            for j in range(ny):
                r[i, j] = rhs[i, j] - ar[i, j]
        rnorm = sqrt(_dot(r, r))
        history[0] = rnorm
    if rnorm <= target:
        return 0, history_arr[:1]
    with nogil:
        _apply(r, mass, cx, cy, diag, ar)
        for i in range(nx):
            for j in range(ny):
                p[i, j] = r[i, j]
                ap[i, j] = ar[i, j]
        rar = _dot(r, ar)
        it = 1
        while it <= maxiter:
            apap = _dot(ap, ap)
            alpha = rar / apap
            for i in range(nx):
                for j in range(ny):
                    x[i, j] = x[i, j] + alpha * p[i, j]
                    r[i, j] = r[i, j] - alpha * ap[i, j]
            rnorm = sqrt(_dot(r, r))
            history[it] = rnorm
            if rnorm <= target:
                break
            _apply(r, mass, cx, cy, diag, ar)
            rar_new = _dot(r, ar)
            beta = rar_new / rar
            rar = rar_new
            for i in range(nx):
                for j in range(ny):
                    p[i, j] = r[i, j] + beta * p[i, j]
                    ap[i, j] = ar[i, j] + beta * ap[i, j]
            it = it + 1
    if it > maxiter:
        return -1, history_arr
    return it, history_arr[: it + 1]


def project_triangle(const double[:] b1, const double[:] b2, double[:] o1, double[:] o2):
    cdef Py_ssize_t n = b1.shape[0], i
    cdef double x, y, t
    with nogil:
        for i in range(n):
            x = b1[i]
            y = b2[i]
            if x + y > 1.0:
                t = 0.5 * (x - y + 1.0)
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                o1[i] = t
                o2[i] = 1.0 - t
            elif x < 0.0 and y < 0.0:
                o1[i] = 0.0
                o2[i] = 0.0
            elif x < 0.0:
                o1[i] = 0.0
                o2[i] = 1.0 if y > 1.0 else y
            elif y < 0.0:
                o1[i] = 1.0 if x > 1.0 else x
                o2[i] = 0.0
            else:
                o1[i] = x
                o2[i] = y
    return np.asarray(o1), np.asarray(o2)
