# cython: language_level=3
"""Compiled inner loops.

Same call signatures as :mod:`dysonlab._fallback`; array arguments must be
C-contiguous with the dtypes named below.
"""
from libc.math cimport exp
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()


def interaction_sums(double[:, ::1] K, double[::1] h, double[::1] out):
    """out[idx] = sum_{i<j} K[i,j] s_i s_j + sum_i h[i] s_i, s_i = 2*bit_i(idx) - 1."""
    cdef Py_ssize_t n = K.shape[0]
    cdef Py_ssize_t total = out.shape[0]
    cdef Py_ssize_t idx, i, j
    cdef double acc, row
    cdef double *s = <double *> malloc(n * sizeof(double))
    if s == NULL:
        raise MemoryError()
    try:
        for idx in range(total):
            for i in range(n):
                s[i] = 1.0 if (idx >> i) & 1 else -1.0
            acc = 0.0
            for i in range(n):
                row = h[i]
                for j in range(i + 1, n):
                    row += K[i, j] * s[j]
                acc += row * s[i]
            out[idx] = acc
    finally:
        free(s)


def heat_bath_sweeps(
    signed char[::1] spins,
    double[::1] fields,
    double[::1] Jd,
    long long[::1] side,
    int split,
    long long[::1] ex_ptr,
    long long[::1] ex_idx,
    double[::1] ex_w,
    double beta,
    Py_ssize_t cutoff,
    double[::1] uniforms,
    Py_ssize_t nsweeps,
    signed char[:, ::1] record,
):
    """Sequential-scan heat-bath sweeps; returns the number of spin flips."""
    cdef Py_ssize_t n = spins.shape[0]
    cdef Py_ssize_t sweep, t, v, lo, hi, e, d
    cdef Py_ssize_t k = 0
    cdef long long flips = 0
    cdef long long st
    cdef double p_up, delta
    cdef signed char new
    cdef bint keep = record.shape[0] > 0
    for sweep in range(nsweeps):
        for t in range(n):
            p_up = 1.0 / (1.0 + exp(-2.0 * beta * fields[t]))
            new = 1 if uniforms[k] < p_up else -1
            k += 1
            if new == spins[t]:
                continue
            flips += 1
            delta = 2.0 * new
            spins[t] = new
            st = side[t]
            lo = t - cutoff
            if lo < 0:
                lo = 0
            hi = t + cutoff + 1
            if hi > n:
                hi = n
            for v in range(lo, hi):
                if v == t:
                    continue
                if split and (side[v] != st or st < 0):
                    continue
                d = v - t if v > t else t - v
                fields[v] += delta * Jd[d]
            for e in range(ex_ptr[t], ex_ptr[t + 1]):
                fields[ex_idx[e]] += delta * ex_w[e]
        if keep:
            for t in range(n):
                record[sweep, t] = spins[t]
    return flips


def transfer_apply(double[:, ::1] w, long long[:, ::1] succ, double[::1] f, double[::1] out):
    """out[x] = w[0,x] f[succ[0,x]] + w[1,x] f[succ[1,x]]."""
    cdef Py_ssize_t x, size = f.shape[0]
    for x in range(size):
        out[x] = w[0, x] * f[succ[0, x]] + w[1, x] * f[succ[1, x]]


def transfer_apply_adjoint(double[:, ::1] w, int depth, double[::1] nu, double[::1] out):
    """Adjoint of :func:`transfer_apply` for the shift successor map."""
    cdef Py_ssize_t y, x0, x1, a, size = nu.shape[0]
    cdef Py_ssize_t top = (<Py_ssize_t> 1) << (depth - 1)
    for y in range(size):
        a = y & 1
        x0 = y >> 1
        x1 = x0 | top
        out[y] = w[a, x0] * nu[x0] + w[a, x1] * nu[x1]
