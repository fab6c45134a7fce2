"""Self-checks run by ``mmotfs verify``: oracle equivalences and invariants."""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import kernels
from .channel import (
    DominantPath,
    ChannelRealization,
    Subpath,
    beam_channel_closed_form,
    beam_channel_tensor,
    generate_channel,
    ground_truth_hddb,
    representative_doppler,
)
from .estimator import PathInfo
from .lattice import OtfsGrid, isfft, sfft, xi_kernel
from .modem import dd_integer_limit, dd_oracle, dd_simplified, transmit
from .pilots import assemble_frame, beam_to_space, design_pilots, make_layout, space_to_beam
from .sensing import build_phi, build_pilot_matrix, extract_received

__all__ = ["run_checks"]


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _check_unitarity(rng):
    g = OtfsGrid(8, 6, 2)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
        worst = max(worst, _rel(sfft(isfft(x, g), g), x),
                    abs(np.linalg.norm(isfft(x, g)) - np.linalg.norm(x)) / np.linalg.norm(x))
    return worst <= 1e-12, f"max relative error {worst:.2e}"


def _check_xi(rng):
    ok = all(abs(xi_kernel(m, 8) - (1.0 if m % 8 == 0 else 0.0)) < 1e-12 for m in range(-16, 17))
    x = 0.37
    closed = abs(math.sin(math.pi * x) / (8 * math.sin(math.pi * x / 8)))
    return ok and abs(abs(xi_kernel(x, 8)) - closed) < 1e-12, "integer deltas and closed-form magnitude"


def _check_modem(rng):
    worst_chain, worst_simpl = 0.0, 0.0
    for i in range(10):
        n_t = 2 if i % 2 else 1
        g = OtfsGrid(16, 4, 4, N_t=n_t)
        ch = generate_channel(g, 1 + i % 3, 1 + i % 3, 500.0, 4e9, 3, rng)
        x = rng.standard_normal((n_t, 4, 16)) + 1j * rng.standard_normal((n_t, 4, 16))
        ref = dd_oracle(x, ch, g)
        worst_chain = max(worst_chain, float(np.max(np.abs(transmit(x, ch, g) - ref))))
        if all(len(p.subpaths) == 1 for p in ch.paths):
            worst_simpl = max(worst_simpl, float(np.max(np.abs(dd_simplified(x, ch, g) - ref))))
    return worst_chain <= 1e-8 and worst_simpl <= 1e-10, (
        f"chain vs oracle {worst_chain:.2e}, simplified vs oracle (S=1) {worst_simpl:.2e}"
    )


def _check_integer_limit(rng):
    g = OtfsGrid(16, 8, 4)
    nu = g.doppler_hz(np.array([2.0, -1.0]))
    ch = ChannelRealization(
        (DominantPath(0, (Subpath(0.8 + 0.1j, float(nu[0])),)), DominantPath(2, (Subpath(-0.3j, float(nu[1])),))),
        g,
    )
    x = rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16))
    err = float(np.max(np.abs(dd_integer_limit(x, ch, g) - dd_oracle(x, ch, g))))
    return err <= 1e-8, f"on-grid Doppler model vs oracle {err:.2e}"


def _check_beam_channel(rng):
    g = OtfsGrid(32, 8, 8, N_t=4)
    ch = generate_channel(g, 3, 4, 300.0, 4e9, 5, rng)
    a, b = beam_channel_tensor(ch), beam_channel_closed_form(ch)
    return _rel(b, a) <= 1e-9, f"closed form vs DFT route {_rel(b, a):.2e}"


def _check_beam_transform(rng):
    x = rng.standard_normal((8, 4, 5)) + 1j * rng.standard_normal((8, 4, 5))
    err = _rel(space_to_beam(beam_to_space(x)), x)
    return err <= 1e-12, f"beam/space round trip {err:.2e}"


def _check_model_fidelity(rng):
    g = OtfsGrid(32, 8, 8, N_t=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        layout = make_layout(g, 11, 8, 8, 4)
        pilots = design_pilots(layout, 4)
    ch = generate_channel(g, 2, 1, 400.0, 4e9, 3, rng)
    frame = assemble_frame(pilots, layout, None, g)
    y = extract_received(transmit(beam_to_space(frame), ch, g), layout)
    info = PathInfo([p.delay_tap for p in ch.paths], [representative_doppler(p, g) for p in ch.paths])
    theta = build_pilot_matrix(frame, layout, g) * build_phi(info, layout, g)
    err = _rel(theta @ ground_truth_hddb(ch, layout), y)
    return err <= 1e-6, f"Theta h vs received pilots {err:.2e}"


def _check_kernels(rng):
    A = rng.standard_normal((30, 60)) + 1j * rng.standard_normal((30, 60))
    h = np.zeros(60, dtype=complex)
    h[[4, 17, 40]] = [1.0, -0.5j, 0.7]
    y = A @ h
    norms = np.linalg.norm(A, axis=0)
    s1, c1, _, _ = kernels.omp_core(A, y, norms, 10, 1e-10)
    s2, c2, _, _ = kernels.omp_core_numpy(A, y, norms, 10, 1e-10)
    same = np.array_equal(np.sort(s1), np.sort(s2)) and np.allclose(c1, c2, atol=1e-10)
    return same, f"backend {kernels.BACKEND} agrees with numpy fallback"


CHECKS = {
    "transform unitarity": _check_unitarity,
    "xi kernel": _check_xi,
    "modem chain vs oracle": _check_modem,
    "on-grid Doppler limit": _check_integer_limit,
    "beam channel closed form": _check_beam_channel,
    "beam/space transform": _check_beam_transform,
    "sensing model fidelity": _check_model_fidelity,
    "compiled kernels": _check_kernels,
}


def run_checks(seed: int = 0):
    """Run every check; returns a list of ``(name, passed, detail)``."""
    rng = np.random.default_rng(seed)
    results = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # noqa: BLE001 -- reported as a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
