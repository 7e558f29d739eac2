# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics must match ``_pykernels`` bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


cdef inline double _p1(double d) nogil:
    # softmax of the pair with the larger logit subtracted
    cdef double e = exp(-fabs(d))
    return 1.0 / (1.0 + e) if d >= 0 else e / (1.0 + e)


def sample_scale(const double[::1] l0, const double[::1] l1, const double[::1] u,
                 const double[::1] bias0, const double[::1] bias1,
                 Py_ssize_t r, Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t t, j, c
    cdef unsigned long prefix, pmask = (1UL << (n - 1)) - 1
    cdef unsigned char b
    cdef double d
    out = np.empty(r * m, dtype=np.uint8)
    cdef unsigned char[::1] bits = out
    with nogil:
        for t in range(r):
            prefix = 0
            for j in range(m):
                c = t * m + j
                if j >= n - 1:
                    d = (l1[c] + bias1[prefix]) - (l0[c] + bias0[prefix])
                else:
                    d = l1[c] - l0[c]
                b = u[c] < _p1(d)
                bits[c] = b
                prefix = ((prefix << 1) | b) & pmask
    return out


def count_scale(const unsigned char[::1] bits, Py_ssize_t r, Py_ssize_t m, Py_ssize_t n,
                const unsigned char[::1] mask):
    cdef Py_ssize_t t, j, base
    cdef unsigned long window, wmask = (1UL << n) - 1
    cdef long long count = 0
    for t in range(r):
        base = t * m
        window = 0
        for j in range(m):
            window = ((window << 1) | bits[base + j]) & wmask
            if j >= n - 1:
                count += mask[window]
    return count


def flip_scan(unsigned char[::1] bits, Py_ssize_t r, Py_ssize_t m, Py_ssize_t n,
              const unsigned char[::1] mask, const double[::1] u, double p):
    cdef Py_ssize_t t, j, base, k = m - n + 1, w
    cdef unsigned long window, wmask = (1UL << n) - 1
    cdef long long flips = 0
    for t in range(r):
        base = t * m
        window = 0
        for j in range(m):
            window = ((window << 1) | bits[base + j]) & wmask
            if j >= n - 1:
                w = t * k + (j - n + 1)
                if mask[window] and u[w] < p:
                    bits[base + j] ^= 1
                    window ^= 1
                    flips += 1
    return flips
