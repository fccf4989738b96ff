# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cascade kernel; same contract as ``_cascade_py.cascade_kernel``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    MAXR = 8


cdef inline double binom(int n, int k) nogil:
    cdef double b = 1.0
    cdef int i
    for i in range(1, k + 1):
        b = b * (n - k + i) / i
    return b


def cascade_kernel(e0, phi, double guard):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] E0 = np.ascontiguousarray(e0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] PHI = np.ascontiguousarray(phi, dtype=np.float64)
    cdef int r = E0.shape[0]
    cdef int p = E0.shape[1]
    if r > MAXR:
        raise ValueError("relative degree above compiled limit")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e_values = np.zeros((r, p))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gains = np.ones(r)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] margins = np.zeros(r)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] E = E0.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=2] En = np.empty((r, p))
    cdef double C[MAXR][MAXR]
    cdef double nsq[MAXR]
    cdef double phisq[MAXR]
    cdef double M[MAXR]
    cdef double D[MAXR]
    cdef double K[MAXR]
    cdef int i, j, l, c, nc
    cdef double s, dot, margin
    for i in range(r):
        for j in range(i + 1):
            C[i][j] = binom(i, j)
    for i in range(r):
        nc = r - i
        for j in range(nc):
            s = 0.0
            for l in range(j + 1):
                dot = 0.0
                for c in range(p):
                    dot += E[l, c] * E[j - l, c]
                s += C[j][l] * dot
            nsq[j] = s
            s = 0.0
            for l in range(j + 1):
                s += C[j][l] * PHI[i, l] * PHI[i, j - l]
            phisq[j] = s
        for j in range(nc):
            s = 0.0
            for l in range(j + 1):
                s += C[j][l] * phisq[l] * nsq[j - l]
            M[j] = s
        margin = sqrt(M[0]) if M[0] > 0.0 else 0.0
        for c in range(p):
            e_values[i, c] = E[0, c]
        margins[i] = margin
        if margin >= 1.0 - guard:
            return e_values, gains, margins, i
        D[0] = 1.0 - M[0]
        for j in range(1, nc):
            D[j] = -M[j]
        K[0] = 1.0 / D[0]
        for j in range(1, nc):
            s = 0.0
            for l in range(1, j + 1):
                s += C[j][l] * D[l] * K[j - l]
            K[j] = -s / D[0]
        gains[i] = K[0]
        if i < r - 1:
            for j in range(nc - 1):
                for c in range(p):
                    s = E[j + 1, c]
                    for l in range(j + 1):
                        s += C[j][l] * K[l] * E[j - l, c]
                    En[j, c] = s
            for j in range(nc - 1):
                for c in range(p):
                    E[j, c] = En[j, c]
    return e_values, gains, margins, -1
