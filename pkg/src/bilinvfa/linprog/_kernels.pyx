# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex pivot loop; see ``_kernels_py`` for the reference."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

OPTIMAL = 0
UNBOUNDED = 1
PIVOT_LIMIT = 2

cdef double RATIO_TIE = 1e-12
cdef double HARRIS_DELTA = 1e-9
cdef double BLAND_PIVOT_SHARE = 1e-3


def run_pivots(double[:, ::1] A, double[::1] c, cnp.int64_t[::1] basis,
               cnp.uint8_t[::1] is_basic, double[:, ::1] Binv, double[::1] xB,
               cnp.uint8_t[::1] eligible, double tol_piv, double tol_opt,
               Py_ssize_t max_pivots, Py_ssize_t degen_limit,
               cnp.int64_t[::1] state):
    cdef Py_ssize_t n = A.shape[0], N = A.shape[1]
    cdef Py_ssize_t i, j, k, it, q, p
    cdef double[::1] pi = np.empty(n)
    cdef double[::1] d = np.empty(N)
    cdef double[::1] alpha = np.empty(n)
    cdef double[::1] row = np.empty(n)
    cdef double best, theta, bound, ratio, xb, a, piv, amax
    cdef bint bland

    for it in range(max_pivots):
        for i in range(n):
            pi[i] = 0.0
        for k in range(n):
            a = c[basis[k]]
            if a != 0.0:
                for i in range(n):
                    pi[i] += Binv[k, i] * a
        for j in range(N):
            d[j] = c[j]
        for i in range(n):
            a = pi[i]
            if a != 0.0:
                for j in range(N):
                    d[j] -= A[i, j] * a

        bland = state[0] >= degen_limit
        q = -1
        best = -tol_opt
        for j in range(N):
            if eligible[j] and not is_basic[j] and d[j] < -tol_opt:
                if bland:
                    q = j
                    break
                if d[j] < best:
                    best = d[j]
                    q = j
        if q < 0:
            return OPTIMAL, it

        for i in range(n):
            alpha[i] = 0.0
        for k in range(n):
            a = A[k, q]
            if a != 0.0:
                for i in range(n):
                    alpha[i] += Binv[i, k] * a

        theta = INFINITY
        bound = INFINITY
        for i in range(n):
            if alpha[i] > tol_piv:
                xb = xB[i] if xB[i] > 0.0 else 0.0
                ratio = xb / alpha[i]
                if ratio < theta:
                    theta = ratio
                ratio = (xb + HARRIS_DELTA) / alpha[i]
                if ratio < bound:
                    bound = ratio
        if theta == INFINITY:
            state[2] = q
            return UNBOUNDED, it
        p = -1
        amax = 0.0
        if bland:
            for i in range(n):
                if alpha[i] > tol_piv:
                    xb = xB[i] if xB[i] > 0.0 else 0.0
                    if xb / alpha[i] <= theta + RATIO_TIE * (1.0 + theta) and alpha[i] > amax:
                        amax = alpha[i]
        for i in range(n):
            if alpha[i] > tol_piv:
                xb = xB[i] if xB[i] > 0.0 else 0.0
                ratio = xb / alpha[i]
                if bland:
                    if (ratio <= theta + RATIO_TIE * (1.0 + theta)
                            and alpha[i] >= BLAND_PIVOT_SHARE * amax):
                        if p < 0 or basis[i] < basis[p]:
                            p = i
                elif ratio <= bound:
                    if p < 0 or alpha[i] > alpha[p]:
                        p = i
        xb = xB[p] if xB[p] > 0.0 else 0.0
        theta = xb / alpha[p]

        for i in range(n):
            xB[i] -= theta * alpha[i]
        xB[p] = theta
        piv = alpha[p]
        for j in range(n):
            row[j] = Binv[p, j] / piv
        for i in range(n):
            a = alpha[i]
            if a != 0.0:
                for j in range(n):
                    Binv[i, j] -= a * row[j]
        for j in range(n):
            Binv[p, j] = row[j]
        is_basic[basis[p]] = 0
        is_basic[q] = 1
        basis[p] = q
        if theta <= RATIO_TIE:
            state[0] += 1
        else:
            state[0] = 0
        state[1] += 1
    return PIVOT_LIMIT, max_pivots
