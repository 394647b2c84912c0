# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scoring kernel.

Mirrors probaudit.kernels._numpy.score_blocks with explicit loops.  Rows
are independent, so the OpenMP schedule is static over rows and every
output cell is written by exactly one thread: results are identical for
any thread count.  Per-block row losses are reduced with np.sum outside
the parallel region to keep the summation order fixed.
"""

import numpy as np

from cython.parallel import parallel, prange
from libc.math cimport exp, log, log1p
from libc.stdlib cimport free, malloc

NAME = "native"

DEF ALG_NAIVE_BAYES = 1


def score_blocks(const double[:, ::1] yes, const double[:, ::1] no,
                 const double[:, ::1] q, const double[:, ::1] logq,
                 const double[:, ::1] log1mq,
                 const double[::1] logpi,
                 const long[::1] block_cols, const long[::1] block_ptr,
                 int algorithm, int threads=1, ahat_out=None):
    cdef Py_ssize_t n = yes.shape[0]
    cdef Py_ssize_t s = yes.shape[1]
    cdef Py_ssize_t r = q.shape[0]
    cdef Py_ssize_t b = block_ptr.shape[0] - 1

    row_scored_arr = np.zeros((n, b))
    row_na_arr = np.zeros((n, b))
    cdef double[:, ::1] row_scored = row_scored_arr
    cdef double[:, ::1] row_na = row_na_arr

    cdef bint want_ahat = ahat_out is not None
    cdef double[:, ::1] ahat = ahat_out if want_ahat else np.zeros((1, 1))

    cdef Py_ssize_t i, j, k, l, c, p0, p1
    cdef double* full
    cdef double* work
    cdef double m, z, ah, srow, narow
    cdef int nt = threads if threads > 0 else 1

    with nogil, parallel(num_threads=nt):
        full = <double*> malloc(r * sizeof(double))
        work = <double*> malloc(r * sizeof(double))
        for i in prange(n, schedule='static'):
            for j in range(r):
                full[j] = logpi[j]
            for k in range(s):
                if yes[i, k] != 0.0:
                    for j in range(r):
                        full[j] = full[j] + logq[j, k]
                elif algorithm == ALG_NAIVE_BAYES and no[i, k] != 0.0:
                    for j in range(r):
                        full[j] = full[j] + log1mq[j, k]
            for l in range(b):
                p0 = block_ptr[l]
                p1 = block_ptr[l + 1]
                for j in range(r):
                    work[j] = full[j]
                for c in range(p0, p1):
                    k = block_cols[c]
                    if yes[i, k] != 0.0:
                        for j in range(r):
                            work[j] = work[j] - logq[j, k]
                    elif algorithm == ALG_NAIVE_BAYES and no[i, k] != 0.0:
                        for j in range(r):
                            work[j] = work[j] - log1mq[j, k]
                m = work[0]
                for j in range(1, r):
                    if work[j] > m:
                        m = work[j]
                z = 0.0
                for j in range(r):
                    work[j] = exp(work[j] - m)
                    z = z + work[j]
                srow = 0.0
                narow = 0.0
                for c in range(p0, p1):
                    k = block_cols[c]
                    ah = 0.0
                    for j in range(r):
                        ah = ah + work[j] * q[j, k]
                    ah = ah / z
                    if want_ahat:
                        ahat[i, k] = ah
                    if yes[i, k] != 0.0:
                        srow = srow - log(ah)
                    elif no[i, k] != 0.0:
                        srow = srow - log1p(-ah)
                    else:
                        narow = narow - log1p(-ah)
                row_scored[i, l] = srow
                row_na[i, l] = narow
        free(full)
        free(work)

    obs = np.asarray(yes) + np.asarray(no)
    scored_counts = np.zeros(b, dtype=np.int64)
    ptr = np.asarray(block_ptr)
    cols_arr = np.asarray(block_cols)
    for l in range(b):
        scored_counts[l] = int(round(obs[:, cols_arr[ptr[l]:ptr[l + 1]]].sum()))
    return row_scored_arr.sum(axis=0), row_na_arr.sum(axis=0), scored_counts
