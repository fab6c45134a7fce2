"""Hot kernels with a compiled backend and a numpy fallback.

The Cython extension ``mmotfs._ckernels`` is used when it imports; set
``MMOTFS_PURE_PYTHON=1`` to force the numpy versions. Both backends run the
same algorithm and are cross-checked in the test suite.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.linalg import solve_triangular

try:
    if os.environ.get("MMOTFS_PURE_PYTHON"):
        raise ImportError("compiled kernels disabled by MMOTFS_PURE_PYTHON")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "numpy"

__all__ = ["BACKEND", "omp_core", "omp_core_numpy", "shift_accumulate", "shift_accumulate_numpy"]


def omp_core_numpy(theta, y, col_norms, max_iters, tol_norm):
    """Orthogonal matching pursuit with an incremental Cholesky factor.

    Returns ``(support, coeffs, residual_norm, rank_deficient)``.
    """
    m, n = theta.shape
    kmax = max(0, min(max_iters, m))
    r = np.array(y, dtype=complex)
    L = np.zeros((max(kmax, 1), max(kmax, 1)), dtype=complex)
    z = np.zeros(max(kmax, 1), dtype=complex)
    A = np.zeros((m, max(kmax, 1)), dtype=complex, order="F")
    support = []
    x = np.zeros(0, dtype=complex)
    available = col_norms > 0
    safe_norms = np.where(available, col_norms, 1.0)
    res_norm = float(np.linalg.norm(r))
    rank_deficient = False
    k = 0
    while k < kmax and res_norm > tol_norm:
        score = np.abs(theta.conj().T @ r) / safe_norms
        score[~available] = -1.0
        j = int(np.argmax(score))
        if score[j] < 0:
            break
        col = theta[:, j]
        if k:
            w = solve_triangular(L[:k, :k], A[:, :k].conj().T @ col, lower=True)
        else:
            w = np.zeros(0, dtype=complex)
        g = col_norms[j] ** 2
        d2 = g - np.vdot(w, w).real
        if d2 <= 1e-10 * g:
            rank_deficient = True
            break
        L[k, :k] = w.conj()
        L[k, k] = np.sqrt(d2)
        z[k] = (np.vdot(col, y) - np.vdot(w, z[:k])) / L[k, k]
        A[:, k] = col
        support.append(j)
        available[j] = False
        k += 1
        x = solve_triangular(L[:k, :k], z[:k], lower=True, trans="C")
        r = y - A[:, :k] @ x
        res_norm = float(np.linalg.norm(r))
    return np.array(support, dtype=np.int64), x, res_norm, rank_deficient


def omp_core(theta, y, col_norms, max_iters, tol_norm):
    if _ckernels is None:
        return omp_core_numpy(theta, y, col_norms, max_iters, tol_norm)
    theta = np.asfortranarray(theta, dtype=np.complex128)
    y = np.ascontiguousarray(y, dtype=np.complex128)
    col_norms = np.ascontiguousarray(col_norms, dtype=np.float64)
    return _ckernels.omp_core(theta, y, col_norms, int(max_iters), float(tol_norm))


def shift_accumulate_numpy(out, coef, kshift, x, lshift):
    """``out[k, l] += sum_r coef[r, l] * x[(k - kshift[r]) % N, (l - lshift) % M]``."""
    xs = np.roll(x, lshift, axis=1)
    for r, ks in enumerate(kshift):
        out += coef[r][None, :] * np.roll(xs, int(ks), axis=0)
    return out


def shift_accumulate(out, coef, kshift, x, lshift):
    """In-place twisted accumulation used by the delay-Doppler operators."""
    if _ckernels is None:
        return shift_accumulate_numpy(out, coef, kshift, x, lshift)
    if not (out.flags.c_contiguous and out.dtype == np.complex128):
        raise ValueError("out must be a C-contiguous complex128 array")
    _ckernels.shift_accumulate(
        out,
        np.ascontiguousarray(coef, dtype=np.complex128),
        np.ascontiguousarray(kshift, dtype=np.int64),
        np.ascontiguousarray(x, dtype=np.complex128),
        int(lshift),
    )
    return out
