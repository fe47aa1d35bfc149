# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled moment kernels.  Semantics match ``_fallback``."""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef double _pairwise(const double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, half
    cdef double s
    if n <= 8:
        s = 0.0
        for i in range(n):
            s += x[i]
        return s
    half = n // 2
    return _pairwise(x, half) + _pairwise(x + half, n - half)


def temporal_moments(const floating[:, :, :, ::1] data, Py_ssize_t row0, Py_ssize_t row1):
    """Per-pixel mean and 1/N covariance over the time axis for rows [row0, row1)."""
    cdef Py_ssize_t n = data.shape[0], p = data.shape[1], w = data.shape[3]
    cdef Py_ssize_t rows = row1 - row0
    mu_arr = np.empty((rows, w, p), dtype=np.float64)
    cov_arr = np.empty((rows, w, p, p), dtype=np.float64)
    cdef double[:, :, ::1] mu = mu_arr
    cdef double[:, :, :, ::1] cov = cov_arr
    # one image row, pixel-major: rowbuf[(x * p + j) * n + t]
    cdef double* rowbuf = <double*> malloc(w * p * n * sizeof(double))
    cdef double* prod = <double*> malloc(n * sizeof(double))
    cdef double* buf
    cdef Py_ssize_t y, x, t, j, k
    cdef double m, inv_n = 1.0 / n, v
    if rowbuf == NULL or prod == NULL:
        free(rowbuf)
        free(prod)
        raise MemoryError()
    try:
        with nogil:
            for y in range(row0, row1):
                for t in range(n):
                    for j in range(p):
                        for x in range(w):
                            rowbuf[(x * p + j) * n + t] = data[t, j, y, x]
                for x in range(w):
                    buf = rowbuf + x * p * n
                    for j in range(p):
                        m = _pairwise(buf + j * n, n) * inv_n
                        mu[y - row0, x, j] = m
                        for t in range(n):
                            buf[j * n + t] -= m
                    for j in range(p):
                        for k in range(j, p):
                            for t in range(n):
                                prod[t] = buf[j * n + t] * buf[k * n + t]
                            v = _pairwise(prod, n) * inv_n
                            cov[y - row0, x, j, k] = v
                            cov[y - row0, x, k, j] = v
    finally:
        free(rowbuf)
        free(prod)
    return mu_arr, cov_arr


cdef inline void _kahan_add(double* s, double* c, double v) noexcept nogil:
    cdef double y = v - c[0]
    cdef double t = s[0] + y
    c[0] = (t - s[0]) - y
    s[0] = t


def integral_images(const double[:, :, ::1] frame):
    """Compensated summed-area tables of x_j and x_j * x_k (j <= k).

    Tables have shape (H + 1, W + 1) with a zero first row and column.
    """
    cdef Py_ssize_t p = frame.shape[0], h = frame.shape[1], w = frame.shape[2]
    cdef Py_ssize_t npair = p * (p + 1) // 2
    s1_arr = np.zeros((p, h + 1, w + 1), dtype=np.float64)
    s2_arr = np.zeros((npair, h + 1, w + 1), dtype=np.float64)
    cdef double[:, :, ::1] s1 = s1_arr
    cdef double[:, :, ::1] s2 = s2_arr
    cdef Py_ssize_t y, x, j, k, q
    cdef double s, c
    with nogil:
        # row prefix sums
        for j in range(p):
            for y in range(h):
                s = 0.0
                c = 0.0
                for x in range(w):
                    _kahan_add(&s, &c, frame[j, y, x])
                    s1[j, y + 1, x + 1] = s
        q = 0
        for j in range(p):
            for k in range(j, p):
                for y in range(h):
                    s = 0.0
                    c = 0.0
                    for x in range(w):
                        _kahan_add(&s, &c, frame[j, y, x] * frame[k, y, x])
                        s2[q, y + 1, x + 1] = s
                q += 1
        # column prefix sums
        for j in range(p):
            for x in range(1, w + 1):
                s = 0.0
                c = 0.0
                for y in range(1, h + 1):
                    _kahan_add(&s, &c, s1[j, y, x])
                    s1[j, y, x] = s
        for q in range(npair):
            for x in range(1, w + 1):
                s = 0.0
                c = 0.0
                for y in range(1, h + 1):
                    _kahan_add(&s, &c, s2[q, y, x])
                    s2[q, y, x] = s
    return s1_arr, s2_arr


def window_moments(const double[:, :, ::1] s1, const double[:, :, ::1] s2,
                   const double[::1] shift, Py_ssize_t half,
                   Py_ssize_t row0, Py_ssize_t row1):
    """Clipped-window mean and 1/n covariance from summed-area tables."""
    cdef Py_ssize_t p = s1.shape[0], h = s1.shape[1] - 1, w = s1.shape[2] - 1
    cdef Py_ssize_t rows = row1 - row0
    mu_arr = np.empty((rows, w, p), dtype=np.float64)
    cov_arr = np.empty((rows, w, p, p), dtype=np.float64)
    cdef double[:, :, ::1] mu = mu_arr
    cdef double[:, :, :, ::1] cov = cov_arr
    cdef double* m = <double*> malloc(p * sizeof(double))
    cdef Py_ssize_t y, x, j, k, q, ya, yb, xa, xb
    cdef double inv_n, v
    if m == NULL:
        raise MemoryError()
    try:
        with nogil:
            for y in range(row0, row1):
                ya = y - half if y - half > 0 else 0
                yb = y + half + 1 if y + half + 1 < h else h
                for x in range(w):
                    xa = x - half if x - half > 0 else 0
                    xb = x + half + 1 if x + half + 1 < w else w
                    inv_n = 1.0 / ((yb - ya) * (xb - xa))
                    for j in range(p):
                        m[j] = ((s1[j, yb, xb] - s1[j, ya, xb]) - (s1[j, yb, xa] - s1[j, ya, xa])) * inv_n
                        mu[y - row0, x, j] = m[j] + shift[j]
                    q = 0
                    for j in range(p):
                        for k in range(j, p):
                            v = ((s2[q, yb, xb] - s2[q, ya, xb]) - (s2[q, yb, xa] - s2[q, ya, xa])) * inv_n
                            v = v - m[j] * m[k]
                            cov[y - row0, x, j, k] = v
                            cov[y - row0, x, k, j] = v
                            q += 1
    finally:
        free(m)
    return mu_arr, cov_arr
