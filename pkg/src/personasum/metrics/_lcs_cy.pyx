# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled LCS kernel: the two-row dynamic program over int token ids."""

from libc.stdlib cimport calloc, free


def lcs_length(const int[::1] a, const int[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    cdef int *prev = <int *> calloc(m + 1, sizeof(int))
    cdef int *curr = <int *> calloc(m + 1, sizeof(int))
    if prev == NULL or curr == NULL:
        free(prev)
        free(curr)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef int ai, left, up
    cdef int *tmp
    try:
        for i in range(n):
            ai = a[i]
            for j in range(m):
                if b[j] == ai:
                    curr[j + 1] = prev[j] + 1
                else:
                    left = curr[j]
                    up = prev[j + 1]
                    curr[j + 1] = up if up >= left else left
            tmp = prev
            prev = curr
            curr = tmp
        return prev[m]
    finally:
        free(prev)
        free(curr)
