# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: CSR products and pool-adjacent-violators."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int32_t[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    """out[i] = sum_j X[i, j] * x[j]"""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    with nogil:
        for i in range(n_rows):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc = acc + data[k] * x[indices[k]]
            out[i] = acc


def csr_rmatvec(const cnp.int64_t[::1] indptr, const cnp.int32_t[::1] indices,
                const double[::1] data, const double[::1] v, double[::1] out):
    """out[j] = sum_i X[i, j] * v[i]; ``out`` is overwritten."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double vi
    with nogil:
        out[:] = 0.0
        for i in range(n_rows):
            vi = v[i]
            if vi == 0.0:
                continue
            for k in range(indptr[i], indptr[i + 1]):
                out[indices[k]] = out[indices[k]] + data[k] * vi
    return None


def pav(const double[::1] y, const double[::1] w):
    """Pool adjacent violators over pre-sorted, pre-tied targets.

    Returns ``(values, counts)``: block means (nondecreasing) and the number
    of input entries merged into each block.
    """
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, top = -1
    cdef double[::1] mean = np.empty(n, dtype=np.float64)
    cdef double[::1] weight = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] count = np.empty(n, dtype=np.int64)
    cdef double wsum
    with nogil:
        for i in range(n):
            top += 1
            mean[top] = y[i]
            weight[top] = w[i]
            count[top] = 1
            while top > 0 and mean[top - 1] > mean[top]:
                wsum = weight[top - 1] + weight[top]
                mean[top - 1] = (weight[top - 1] * mean[top - 1]
                                 + weight[top] * mean[top]) / wsum
                weight[top - 1] = wsum
                count[top - 1] += count[top]
                top -= 1
    return np.asarray(mean[:top + 1]).copy(), np.asarray(count[:top + 1]).copy()
