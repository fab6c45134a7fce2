import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmotfs import kernels

from conftest import crandn


class TestShiftAccumulate:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 10), st.integers(1, 5), st.integers(-12, 12),
           st.integers(0, 2**32 - 1))
    def test_backends_agree(self, N, M, R, lshift, seed):
        rng = np.random.default_rng(seed)
        coef = crandn(rng, R, M)
        kshift = rng.integers(-2 * N, 2 * N, size=R).astype(np.int64)
        x = crandn(rng, N, M)
        a = crandn(rng, N, M)
        b = a.copy()
        kernels.shift_accumulate(a, coef, kshift, x, lshift)
        kernels.shift_accumulate_numpy(b, coef, kshift, x, lshift)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_direct_definition(self, rng):
        N, M = 4, 5
        coef = crandn(rng, 2, M)
        kshift = np.array([1, -2], dtype=np.int64)
        x = crandn(rng, N, M)
        out = kernels.shift_accumulate(np.zeros((N, M), dtype=complex), coef, kshift, x, 3)
        for k in range(N):
            for l in range(M):
                ref = sum(coef[r, l] * x[(k - kshift[r]) % N, (l - 3) % M] for r in range(2))
                assert out[k, l] == pytest.approx(ref)

    @pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled backend not built")
    def test_rejects_non_contiguous_output(self, rng):
        out = np.zeros((4, 10), dtype=complex)[:, ::2]
        with pytest.raises(ValueError):
            kernels.shift_accumulate(out, crandn(rng, 1, 5), np.zeros(1, np.int64), crandn(rng, 4, 5), 0)


class TestOmpCore:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(4, 30), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_backends_agree(self, m, k, seed):
        rng = np.random.default_rng(seed)
        n = 2 * m
        A = crandn(rng, m, n)
        h = np.zeros(n, dtype=complex)
        h[rng.choice(n, size=min(k, m), replace=False)] = crandn(rng, min(k, m))
        y = A @ h + 1e-3 * crandn(rng, m)
        norms = np.linalg.norm(A, axis=0)
        s1, c1, r1, d1 = kernels.omp_core(A, y, norms, k + 2, 1e-9)
        s2, c2, r2, d2 = kernels.omp_core_numpy(A, y, norms, k + 2, 1e-9)
        np.testing.assert_array_equal(s1, s2)
        np.testing.assert_allclose(c1, c2, atol=1e-9)
        assert r1 == pytest.approx(r2, abs=1e-9) and d1 == d2

    def test_skips_zero_norm_columns(self, rng):
        A = crandn(rng, 6, 4)
        A[:, 1] = 0
        norms = np.linalg.norm(A, axis=0)
        s, _, _, _ = kernels.omp_core(A, A @ np.ones(4), norms, 4, 1e-12)
        assert 1 not in s

    def test_residual_orthogonal_to_support(self, rng):
        A = crandn(rng, 20, 30)
        y = crandn(rng, 20)
        s, c, r, _ = kernels.omp_core(A, y, np.linalg.norm(A, axis=0), 6, 0.0)
        res = y - A[:, s] @ c
        assert np.linalg.norm(res) == pytest.approx(r)
        assert np.max(np.abs(A[:, s].conj().T @ res)) < 1e-10


class TestBackendSelection:
    def test_pure_python_env_forces_numpy(self):
        env = dict(os.environ, MMOTFS_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "import mmotfs; print(mmotfs.BACKEND)"],
                             capture_output=True, text=True, env=env, check=True)
        assert out.stdout.strip() == "numpy"

    def test_fallback_runs_verify(self):
        env = dict(os.environ, MMOTFS_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-m", "mmotfs.cli", "verify"],
                             capture_output=True, text=True, env=env)
        assert out.returncode == 0, out.stdout + out.stderr
        assert "backend numpy" in out.stdout
