# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: cyclic Jacobi, Cholesky, best-flip ascent.

Same signatures and semantics as ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite

cnp.import_array()


def jacobi_eigh(a, double tol, int max_sweeps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = arr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] varr = np.eye(n)
    cdef double[:, ::1] m = arr
    cdef double[:, ::1] v = varr
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double apq, diff, theta, t, c, s, mp, mq, scale = 0.0, off, threshold
    for p in range(n):
        for q in range(n):
            scale += m[p, q] * m[p, q]
    scale = sqrt(scale)
    if n == 1 or scale == 0.0:
        return np.diag(arr).copy(), varr, 0, True
    threshold = tol * scale
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += m[p, q] * m[p, q]
        if sqrt(off) <= threshold:
            return np.diag(arr).copy(), varr, sweep, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                diff = m[q, q] - m[p, p]
                if fabs(apq) < 1e-150 * fabs(diff):
                    # rotation angle far below epsilon: zeroing the pair is exact
                    m[p, q] = 0.0
                    m[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    mp = m[k, p]
                    mq = m[k, q]
                    m[k, p] = c * mp - s * mq
                    m[k, q] = s * mp + c * mq
                for k in range(n):
                    mp = m[p, k]
                    mq = m[q, k]
                    m[p, k] = c * mp - s * mq
                    m[q, k] = s * mp + c * mq
                m[p, q] = 0.0
                m[q, p] = 0.0
                for k in range(n):
                    mp = v[k, p]
                    mq = v[k, q]
                    v[k, p] = c * mp - s * mq
                    v[k, q] = s * mp + c * mq
    off = 0.0
    for p in range(n):
        for q in range(n):
            if p != q:
                off += m[p, q] * m[p, q]
    return np.diag(arr).copy(), varr, max_sweeps, bool(sqrt(off) <= threshold)


def cholesky(a):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = arr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] low = np.zeros((n, n))
    cdef const double[:, ::1] A = arr
    cdef double[:, ::1] L = low
    cdef Py_ssize_t i, j, k
    cdef double d, acc, ljj
    for j in range(n):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > 0.0 or not isfinite(d):
            return low, False
        ljj = sqrt(d)
        L[j, j] = ljj
        for i in range(j + 1, n):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / ljj
    return low, True


def best_flip_ascent(c, x, long max_flips, double tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] carr = np.ascontiguousarray(c, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xarr = np.array(x, dtype=np.float64, copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] garr = carr @ xarr
    cdef const double[:, ::1] C = carr
    cdef double[::1] X = xarr
    cdef double[::1] G = garr
    cdef Py_ssize_t n = carr.shape[0]
    cdef Py_ssize_t i, best
    cdef long flips
    cdef double gain, best_gain, xi
    for flips in range(max_flips):
        best = 0
        best_gain = 4.0 * (C[0, 0] - X[0] * G[0])
        for i in range(1, n):
            gain = 4.0 * (C[i, i] - X[i] * G[i])
            if gain > best_gain:
                best_gain = gain
                best = i
        if not best_gain > tol:
            return xarr, flips, True
        xi = X[best]
        for i in range(n):
            G[i] -= 2.0 * xi * C[i, best]
        X[best] = -xi
    best_gain = 4.0 * (C[0, 0] - X[0] * G[0])
    for i in range(1, n):
        gain = 4.0 * (C[i, i] - X[i] * G[i])
        if gain > best_gain:
            best_gain = gain
    return xarr, max_flips, best_gain <= tol
