"""Compiled vs numpy kernels on desk-scale problem sizes.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times ``omp_core`` on the 368 x 384 sensing matrix of the default layout
and ``shift_accumulate`` on one 16 x 64 delay-Doppler operator, then a
full trial with each backend selected.
"""

import argparse
import os
import subprocess
import sys
import timeit
import warnings

import numpy as np

from mmotfs import kernels
from mmotfs.harness import ExperimentConfig
from mmotfs.pilots import assemble_frame, design_pilots
from mmotfs.sensing import build_phi_tilde, build_pilot_matrix


def omp_case():
    cfg = ExperimentConfig()
    grid, layout = cfg.grid(), cfg.layout()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        frame = assemble_frame(design_pilots(layout, grid.N_t), layout, None, grid)
    theta = build_pilot_matrix(frame, layout, grid) * build_phi_tilde(layout, grid)
    rng = np.random.default_rng(0)
    h = np.zeros(theta.shape[1], dtype=complex)
    h[rng.choice(theta.shape[1], 24, replace=False)] = rng.standard_normal(24) + 1j * rng.standard_normal(24)
    y = theta @ h + 0.01 * (rng.standard_normal(theta.shape[0]) + 1j * rng.standard_normal(theta.shape[0]))
    theta_f = np.asfortranarray(theta)
    return theta_f, y, np.linalg.norm(theta, axis=0)


def shift_case():
    rng = np.random.default_rng(1)
    N, M = 16, 64
    coef = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
    kshift = (np.arange(N) - N // 2).astype(np.int64)
    x = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
    return coef, kshift, x


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def trial_time(pure: bool, repeat: int) -> float:
    env = dict(os.environ)
    if pure:
        env["MMOTFS_PURE_PYTHON"] = "1"
    code = (
        "import timeit;from mmotfs.harness import ExperimentConfig, run_trial;"
        "cfg=ExperimentConfig(snr_db=[15.0], ber=True);run_trial(cfg,0,estimators=('msmce','ismce'));"
        f"print(min(timeit.repeat(lambda: run_trial(cfg,1,estimators=('msmce','ismce')),repeat={repeat},number=1)))"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rows = []
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the numpy backend can be timed")

    theta, y, norms = omp_case()
    for iters in (24, 96):
        t_np = best(lambda: kernels.omp_core_numpy(theta, y, norms, iters, 0.0), args.repeat, 3)
        t_c = best(lambda: kernels.omp_core(theta, y, norms, iters, 0.0), args.repeat, 3) \
            if kernels.BACKEND == "cython" else float("nan")
        rows.append((f"omp_core 368x384, {iters} atoms", t_np, t_c))

    coef, kshift, x = shift_case()
    out = np.zeros((16, 64), dtype=complex)
    t_np = best(lambda: kernels.shift_accumulate_numpy(out, coef, kshift, x, 3), args.repeat, 200)
    t_c = best(lambda: kernels.shift_accumulate(out, coef, kshift, x, 3), args.repeat, 200) \
        if kernels.BACKEND == "cython" else float("nan")
    rows.append(("shift_accumulate 16x64, 16 shifts", t_np, t_c))

    t_np = trial_time(True, args.repeat)
    t_c = trial_time(False, args.repeat) if kernels.BACKEND == "cython" else float("nan")
    rows.append(("run_trial desk scale + BER", t_np, t_c))

    print(f"{'kernel':<38}{'numpy [ms]':>12}{'cython [ms]':>13}{'speed-up':>10}")
    for name, a, b in rows:
        print(f"{name:<38}{1e3 * a:>12.3f}{1e3 * b:>13.3f}{a / b:>9.1f}x")


if __name__ == "__main__":
    main()
