# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled inner loop of the sparse target generator."""

from libc.stdint cimport int64_t


def epls_assign(const double[:, ::1] H, double[::1] a, int64_t[::1] counts,
                double increment, int64_t cap, bint strict, int64_t[::1] winners):
    cdef Py_ssize_t n_rows = H.shape[0], n_out = H.shape[1]
    cdef Py_ssize_t n, j, k
    cdef double best = 0.0, s

    with nogil:
        for n in range(n_rows):
            k = -1
            if strict:
                for j in range(n_out):
                    if counts[j] < cap:
                        s = H[n, j] - a[j]
                        if k < 0 or s > best:
                            best = s
                            k = j
            if k < 0:
                k = 0
                best = H[n, 0] - a[0]
                for j in range(1, n_out):
                    s = H[n, j] - a[j]
                    if s > best:
                        best = s
                        k = j
            winners[n] = k
            counts[k] += 1
            a[k] = counts[k] * increment
