# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: farthest-pair scan, 2-means Lloyd loop, NNLS.

Same contracts as ``_kernels_py``; see that module for the reference
semantics.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def farthest_pairs(X):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best = -1.0, s, t
    cdef Py_ssize_t count = 0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for k in range(d):
                    t = x[i, k] - x[j, k]
                    s += t * t
                if s > best:
                    best = s
                    count = 1
                elif s == best:
                    count += 1
    out = np.empty((count, 2), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef Py_ssize_t m = 0
    if count:
        with nogil:
            for i in range(n):
                for j in range(i + 1, n):
                    s = 0.0
                    for k in range(d):
                        t = x[i, k] - x[j, k]
                        s += t * t
                    if s == best:
                        o[m, 0] = i
                        o[m, 1] = j
                        m += 1
    return (best if best > 0.0 else 0.0), out


def lloyd2(X, c0, c1, int max_iter):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    centers_arr = np.ascontiguousarray(np.stack([c0, c1]), dtype=np.float64)
    cdef double[:, ::1] c = centers_arr
    sums_arr = np.zeros((2, d), dtype=np.float64)
    cdef double[:, ::1] sums = sums_arr
    labels_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] lab = labels_arr
    cdef Py_ssize_t i, k
    cdef int it = 0, changed, first = 1, ok = 1
    cdef Py_ssize_t n1
    cdef double d0, d1, t
    cdef unsigned char new
    with nogil:
        while it < max_iter:
            it += 1
            changed = 0
            n1 = 0
            for i in range(n):
                d0 = 0.0
                d1 = 0.0
                for k in range(d):
                    t = x[i, k] - c[0, k]
                    d0 += t * t
                    t = x[i, k] - c[1, k]
                    d1 += t * t
                new = 1 if d1 < d0 else 0
                if new != lab[i]:
                    changed = 1
                lab[i] = new
                n1 += new
            if not first and not changed:
                break
            first = 0
            if n1 == 0 or n1 == n:
                ok = 0
                break
            for k in range(d):
                sums[0, k] = 0.0
                sums[1, k] = 0.0
            for i in range(n):
                for k in range(d):
                    sums[lab[i], k] += x[i, k]
            for k in range(d):
                c[0, k] = sums[0, k] / (n - n1)
                c[1, k] = sums[1, k] / n1
    return labels_arr, it, bool(ok)


cdef int _chol_solve(double[:, ::1] G, double[::1] b, Py_ssize_t[::1] idx,
                     Py_ssize_t m, double[:, ::1] L, double[::1] z,
                     double floor) noexcept nogil:
    """Solve G[idx, idx] z = b[idx] by Cholesky; return 0 if not PD."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(m):
        s = G[idx[j], idx[j]]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= floor:
            return 0
        L[j, j] = sqrt(s)
        for i in range(j + 1, m):
            s = G[idx[i], idx[j]]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    for i in range(m):
        s = b[idx[i]]
        for k in range(i):
            s -= L[i, k] * z[k]
        z[i] = s / L[i, i]
    for i in range(m - 1, -1, -1):
        s = z[i]
        for k in range(i + 1, m):
            s -= L[k, i] * z[k]
        z[i] = s / L[i, i]
    return 1


def nnls_gram(G, b, int max_iter, double tol):
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = bb.shape[0]
    w_arr = np.zeros(n, dtype=np.float64)
    if n == 0:
        return w_arr
    cdef double[::1] w = w_arr
    cdef double[::1] grad = np.zeros(n)
    cdef double[::1] z = np.zeros(n)
    cdef double[:, ::1] L = np.zeros((n, n))
    cdef Py_ssize_t[::1] idx = np.zeros(n, dtype=np.intp)
    cdef unsigned char[::1] passive = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] blocked = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t i, j, m, t
    cdef int outer
    cdef double s, best, alpha, ratio, den, scale = 1e-300
    with nogil:
        for i in range(n):
            if g[i, i] > scale:
                scale = g[i, i]
        for outer in range(max_iter):
            for i in range(n):
                s = 0.0
                for j in range(n):
                    s += g[i, j] * w[j]
                grad[i] = 2.0 * (s - bb[i])
            t = -1
            best = 0.0
            for i in range(n):
                if passive[i] or blocked[i]:
                    continue
                if t < 0 or -grad[i] > best:
                    best = -grad[i]
                    t = i
            if t < 0 or best <= tol:
                break
            passive[t] = 1
            while True:
                m = 0
                for i in range(n):
                    if passive[i]:
                        idx[m] = i
                        m += 1
                if not _chol_solve(g, bb, idx, m, L, z, 1e-13 * scale):
                    passive[t] = 0
                    blocked[t] = 1
                    w[t] = 0.0
                    break
                alpha = 2.0
                for i in range(m):
                    if z[i] <= 0.0:
                        den = w[idx[i]] - z[i]
                        ratio = w[idx[i]] / den if den > 0.0 else 0.0
                        if ratio < alpha:
                            alpha = ratio
                if alpha > 1.0:
                    for i in range(n):
                        w[i] = 0.0
                    for i in range(m):
                        w[idx[i]] = z[i]
                    break
                for i in range(m):
                    j = idx[i]
                    w[j] = w[j] + alpha * (z[i] - w[j])
                    if w[j] <= 1e-15:
                        w[j] = 0.0
                        passive[j] = 0
                if m == 0:
                    break
                s = 0.0
                for i in range(n):
                    s += passive[i]
                if s == 0.0:
                    break
        for i in range(n):
            if w[i] < 0.0:
                w[i] = 0.0
    return w_arr
