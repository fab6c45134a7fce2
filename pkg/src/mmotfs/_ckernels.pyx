# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see mmotfs.kernels for the dispatching wrappers."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport zgemv

cnp.import_array()

ctypedef double complex zdouble


cdef inline double _abs2(zdouble z) nogil:
    return z.real * z.real + z.imag * z.imag


def omp_core(zdouble[::1, :] theta, zdouble[::1] y, double[::1] col_norms,
             int max_iters, double tol_norm):
    cdef int m = theta.shape[0]
    cdef int n = theta.shape[1]
    cdef int kmax = max_iters if max_iters < m else m
    if kmax < 0:
        kmax = 0
    cdef int one = 1, k = 0, i, j, best
    cdef zdouble alpha = 1.0, beta = 0.0, malpha = -1.0, acc
    cdef char trans_c = b'C'
    cdef char trans_n = b'N'
    cdef double score, best_score, d2, g, res2
    cdef bint rank_deficient = False

    r_arr = np.array(y, dtype=np.complex128)
    cdef zdouble[::1] r = r_arr
    corr_arr = np.empty(n, dtype=np.complex128)
    cdef zdouble[::1] corr = corr_arr
    A_arr = np.zeros((m, max(kmax, 1)), dtype=np.complex128, order="F")
    cdef zdouble[::1, :] A = A_arr
    L_arr = np.zeros((max(kmax, 1), max(kmax, 1)), dtype=np.complex128)
    cdef zdouble[:, ::1] L = L_arr
    z_arr = np.zeros(max(kmax, 1), dtype=np.complex128)
    cdef zdouble[::1] z = z_arr
    x_arr = np.zeros(max(kmax, 1), dtype=np.complex128)
    cdef zdouble[::1] x = x_arr
    w_arr = np.zeros(max(kmax, 1), dtype=np.complex128)
    cdef zdouble[::1] w = w_arr
    support_arr = np.zeros(max(kmax, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] support = support_arr
    used_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] used = used_arr

    res2 = 0.0
    for i in range(m):
        res2 += _abs2(r[i])

    with nogil:
        while k < kmax and sqrt(res2) > tol_norm:
            # corr = theta^H r
            zgemv(&trans_c, &m, &n, &alpha, &theta[0, 0], &m, &r[0], &one,
                  &beta, &corr[0], &one)
            best = -1
            best_score = -1.0
            for j in range(n):
                if used[j] or col_norms[j] <= 0.0:
                    continue
                score = sqrt(_abs2(corr[j])) / col_norms[j]
                if score > best_score:
                    best_score = score
                    best = j
            if best < 0:
                break
            # v = A_S^H theta_best, stored in w, then forward solve L w = v
            if k > 0:
                zgemv(&trans_c, &m, &k, &alpha, &A[0, 0], &m, &theta[0, best], &one,
                      &beta, &w[0], &one)
                for i in range(k):
                    acc = w[i]
                    for j in range(i):
                        acc = acc - L[i, j] * w[j]
                    w[i] = acc / L[i, i]
            g = col_norms[best] * col_norms[best]
            d2 = g
            for i in range(k):
                d2 -= _abs2(w[i])
            if d2 <= 1e-10 * g:
                rank_deficient = True
                break
            for i in range(k):
                L[k, i] = w[i].conjugate()
            L[k, k] = sqrt(d2)
            # z_k = (theta_best^H y - w^H z) / d
            acc = 0.0
            for i in range(m):
                acc = acc + theta[i, best].conjugate() * y[i]
            for i in range(k):
                acc = acc - w[i].conjugate() * z[i]
            z[k] = acc / L[k, k]
            for i in range(m):
                A[i, k] = theta[i, best]
            support[k] = best
            used[best] = 1
            k += 1
            # back solve L^H x = z
            for i in range(k - 1, -1, -1):
                acc = z[i]
                for j in range(i + 1, k):
                    acc = acc - L[j, i].conjugate() * x[j]
                x[i] = acc / L[i, i].conjugate()
            # r = y - A x
            for i in range(m):
                r[i] = y[i]
            zgemv(&trans_n, &m, &k, &malpha, &A[0, 0], &m, &x[0], &one,
                  &alpha, &r[0], &one)
            res2 = 0.0
            for i in range(m):
                res2 += _abs2(r[i])

    return support_arr[:k].copy(), x_arr[:k].copy(), sqrt(res2), bool(rank_deficient)


def shift_accumulate(zdouble[:, ::1] out, zdouble[:, ::1] coef, cnp.int64_t[::1] kshift,
                     zdouble[:, ::1] x, long lshift):
    cdef Py_ssize_t N = out.shape[0]
    cdef Py_ssize_t M = out.shape[1]
    cdef Py_ssize_t R = coef.shape[0]
    cdef Py_ssize_t r, k, l, ks, ls, src_k
    with nogil:
        for r in range(R):
            ks = kshift[r] % N
            if ks < 0:
                ks = ks + N
            for k in range(N):
                src_k = k - ks
                if src_k < 0:
                    src_k = src_k + N
                for l in range(M):
                    ls = (l - lshift) % M
                    if ls < 0:
                        ls = ls + M
                    out[k, l] = out[k, l] + coef[r, l] * x[src_k, ls]
