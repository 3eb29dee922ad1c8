# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring/statistics kernels.

Mirrors `promptgate.kernels.numpy_backend`; fused loops avoid the per-class
temporaries the NumPy path allocates, which is where the engine spends its
time when scoring long streams against many classes.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "native"


cdef inline double _quad_form(const double[:, ::1] p, const double[::1] dev, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double acc = 0.0, row
    for j in range(d):
        row = 0.0
        for k in range(d):
            row += p[j, k] * dev[k]
        acc += row * dev[j]
    return acc


def mahalanobis_many(double[:, ::1] x, double[::1] mean, double[:, ::1] precision):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef double[::1] dev = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(d):
                dev[j] = x[i, j] - mean[j]
            out_v[i] = _quad_form(precision, dev, d)
    return out


def rmd_many(double[:, ::1] x, double[:, ::1] means, double[::1] md_hats, double[:, ::1] precision):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], ncls = means.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef double[::1] dev = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t i, j, c
    cdef double best, score
    with nogil:
        for i in range(n):
            best = 0.0  # overwritten at c == 0
            for c in range(ncls):
                for j in range(d):
                    dev[j] = x[i, j] - means[c, j]
                score = _quad_form(precision, dev, d) - md_hats[c]
                if c == 0 or score < best:
                    best = score
            out_v[i] = best
    return out


# Statistics folding is intentionally absent here: the NumPy path lowers to
# a BLAS rank-k update, which a hand loop cannot beat (measured 0.2-0.8x).
