# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled versions of the dynamic-programming kernels.

Must stay numerically identical to ``_pykernels``; the test-suite runs both
backends on the same inputs and compares bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def viterbi(const double[:, ::1] emit, const double[:, ::1] trans):
    cdef Py_ssize_t M = emit.shape[0]
    cdef Py_ssize_t K = emit.shape[1]
    cdef Py_ssize_t j, k, k2, arg
    cdef double best, v
    beta_arr = np.zeros((M, K), dtype=np.float64)
    cdef double[:, ::1] beta = beta_arr
    path_arr = np.zeros(M, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr

    for j in range(M - 2, -1, -1):
        for k in range(K):
            best = -INFINITY
            for k2 in range(K):
                v = trans[k, k2] + emit[j + 1, k2] + beta[j + 1, k2]
                if v > best:
                    best = v
            beta[j, k] = best

    best = -INFINITY
    arg = 0
    for k in range(K):
        v = emit[0, k] + beta[0, k]
        if v > best:
            best = v
            arg = k
    path[0] = arg
    cdef double total = best
    for j in range(1, M):
        best = -INFINITY
        arg = 0
        for k2 in range(K):
            v = trans[path[j - 1], k2] + emit[j, k2] + beta[j, k2]
            if v > best:
                best = v
                arg = k2
        path[j] = arg
    return path_arr, total


def edit_distance(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long sub, ins, dele, best
    if n == 0:
        return m
    if m == 0:
        return n
    prev_arr = np.arange(m + 1, dtype=np.int64)
    cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cur[j] = best
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[m])


def psi_first_order(const double[:, ::1] x, const cnp.int64_t[::1] y, Py_ssize_t K):
    cdef Py_ssize_t M = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t j, d, off
    out_arr = np.zeros(D * K + K * K, dtype=np.float64)
    cdef double[::1] out = out_arr
    for j in range(M):
        off = y[j] * D
        for d in range(D):
            out[off + d] += x[j, d]
    off = D * K
    for j in range(M - 1):
        out[off + y[j] + y[j + 1] * K] += 1.0
    return out_arr
