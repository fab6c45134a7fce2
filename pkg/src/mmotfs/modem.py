"""OFDM-based OTFS transceiver and delay-Doppler input-output operators.

Three delay-Doppler operators are provided, each usable as an oracle for
the others:

* :func:`dd_oracle` -- exact per-subpath relation (no approximation);
* :func:`dd_simplified` -- every subpath of a path shares one representative
  Doppler inside the intra-symbol phase term;
* :func:`dd_integer_limit` -- the phase term uses the Doppler grid index
  ``k'`` itself, which is exact for on-grid Doppler.

All transforms are unitary, so noise variance is the same in the time,
time-frequency and delay-Doppler domains.
"""

from __future__ import annotations

import math

import numpy as np

from .channel import ChannelRealization, representative_doppler
from .errors import ConfigurationError
from .kernels import shift_accumulate
from .lattice import OtfsGrid, doppler_values, isfft, sfft

__all__ = [
    "ofdm_modulate",
    "ofdm_demodulate",
    "apply_channel",
    "noise_variance",
    "add_noise",
    "dd_coefficients",
    "dd_oracle",
    "dd_simplified",
    "dd_integer_limit",
    "transmit",
]


def ofdm_modulate(x_tf, grid: OtfsGrid) -> np.ndarray:
    """Per-symbol unitary IDFT plus cyclic prefix.

    ``x_tf`` has shape ``(..., N, M)``; the result has shape
    ``(..., N * (M + M_CP))`` with symbols concatenated in time order.
    """
    x_tf = np.asarray(x_tf, dtype=complex)
    if x_tf.shape[-2:] != (grid.N, grid.M):
        raise ConfigurationError(f"TF grid shape {x_tf.shape} does not match ({grid.N}, {grid.M})")
    body = np.fft.ifft(x_tf, axis=-1, norm="ortho")
    with_cp = np.concatenate([body[..., grid.M - grid.M_CP :], body], axis=-1)
    return with_cp.reshape(*x_tf.shape[:-2], grid.frame_length)


def ofdm_demodulate(sig, grid: OtfsGrid) -> np.ndarray:
    """Drop each CP and apply a unitary DFT per symbol."""
    sig = np.asarray(sig, dtype=complex)
    if sig.shape[-1] != grid.frame_length:
        raise ConfigurationError(f"signal length {sig.shape[-1]} != {grid.frame_length}")
    blocks = sig.reshape(*sig.shape[:-1], grid.N, grid.symbol_length)[..., grid.M_CP :]
    return np.fft.fft(blocks, axis=-1, norm="ortho")


def apply_channel(sig, ch: ChannelRealization) -> np.ndarray:
    """Pass a transmit signal through the time-variant multipath channel.

    ``sig`` is ``(L,)`` for one antenna or ``(N_t, L)`` for an array; the
    antennas are combined through each subpath's steering phase. Samples
    before time zero are taken as zero.
    """
    sig = np.asarray(sig, dtype=complex)
    if sig.ndim == 1:
        sig = sig[None, :]
    n_ant, L = sig.shape
    g = ch.grid
    rho = np.arange(L)
    ant = np.arange(n_ant)
    out = np.zeros(L, dtype=complex)
    for p in ch.paths:
        li = p.delay_tap
        delayed = np.zeros_like(sig)
        delayed[:, li:] = sig[:, : L - li]
        # (S, L) Doppler rotation and (S, n_ant) steering
        rot = np.exp(2j * np.pi * np.outer(p.dopplers_hz, rho - li) * g.T_s)
        steer = np.exp(1j * np.pi * np.outer(np.sin(p.aods), ant))
        combined = (p.gains[:, None] * steer) @ delayed
        out += np.sum(rot * combined, axis=0)
    return out


def noise_variance(sig, snr_db: float) -> float:
    """Per-sample noise variance giving ``mean |sig|^2 / var = 10^(snr/10)``."""
    power = float(np.mean(np.abs(np.asarray(sig)) ** 2))
    if power <= 0:
        raise ConfigurationError("cannot set an SNR on a zero-power signal")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return power / 10 ** (snr_db / 10)


def add_noise(sig, snr_db: float, rng_seed=0) -> np.ndarray:
    """Add circular complex Gaussian noise at the given SNR.

    ``snr_db = inf`` returns a copy of the input.
    """
    sig = np.asarray(sig, dtype=complex)
    var = noise_variance(sig, snr_db)
    if var == 0.0:
        return sig.copy()
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    noise = rng.standard_normal(sig.shape) + 1j * rng.standard_normal(sig.shape)
    return sig + math.sqrt(var / 2) * noise


def _per_antenna(x_dd, grid):
    x = np.asarray(x_dd, dtype=complex)
    if x.ndim == 2:
        x = x[None]
    if x.shape[-2:] != (grid.N, grid.M):
        raise ConfigurationError(f"DD grid shape {x.shape} does not match ({grid.N}, {grid.M})")
    return x


def _doppler_weights(kappa, N):
    """``E[s, k'] = (1/N) sum_j exp(j 2 pi j (kappa_s - k') / N)`` over k' in storage order."""
    j = np.arange(N)
    diff = np.asarray(kappa, dtype=float)[:, None] - doppler_values(N)[None, :]
    return np.exp(2j * np.pi * diff[:, :, None] * j / N).mean(axis=-1)


def dd_coefficients(ch: ChannelRealization, grid: OtfsGrid, mode: str = "oracle", n_antennas: int = 1):
    """Twisted-convolution coefficients of the delay-Doppler channel.

    Returns a list of ``(delay_tap, coef)`` with ``coef`` of shape
    ``(n_antennas, N, M)``: the response is
    ``Y[k, l] = sum_{i, n_t, k'} coef_i[n_t, k', l] X_{n_t}[k - k', (l - l_i) mod M]``
    with ``k'`` in centred storage order. ``mode`` selects the exact
    (``"oracle"``), per-path (``"simplified"``) or on-grid (``"integer"``)
    intra-symbol phase.
    """
    if mode not in ("oracle", "simplified", "integer"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    N, M = grid.N, grid.M
    D = grid.phase_denominator
    k = doppler_values(N)
    l = np.arange(M)
    out = []
    for p in ch.paths:
        kappa = grid.doppler_taps(p.dopplers_hz)
        E = _doppler_weights(kappa, N)  # (S, N)
        base = p.gains * np.exp(2j * np.pi * (grid.M_CP - p.delay_tap) * grid.T_s * p.dopplers_hz)
        if mode == "oracle":
            lphase = np.exp(2j * np.pi * np.outer(kappa, l) / D)  # (S, M)
        elif mode == "simplified":
            rep = representative_doppler(p, grid)
            lphase = np.broadcast_to(np.exp(2j * np.pi * rep * l / D), (len(kappa), M))
        coef = np.empty((n_antennas, N, M), dtype=complex)
        for nt in range(n_antennas):
            w = base * np.exp(1j * np.pi * nt * np.sin(p.aods))
            if mode == "integer":
                coef[nt] = (w @ E)[:, None] * np.exp(2j * np.pi * np.outer(k, l) / D)
            else:
                # coef[k', l] = sum_s w_s E[s, k'] lphase[s, l]
                coef[nt] = (w[:, None] * E).T @ lphase
        out.append((p.delay_tap, coef))
    return out


def _dd_apply(x_dd, ch, grid, mode):
    x = _per_antenna(x_dd, grid)
    out = np.zeros((grid.N, grid.M), dtype=complex)
    kshift = doppler_values(grid.N).astype(np.int64)
    for tap, coef in dd_coefficients(ch, grid, mode, x.shape[0]):
        for nt in range(x.shape[0]):
            shift_accumulate(out, coef[nt], kshift, x[nt], tap)
    return out


def dd_oracle(x_dd_per_antenna, ch: ChannelRealization, grid: OtfsGrid) -> np.ndarray:
    """Exact noiseless delay-Doppler response of the OFDM-based OTFS link.

    ``x_dd_per_antenna`` is one ``(N, M)`` grid or a stack ``(N_t, N, M)``
    of per-antenna grids.
    """
    return _dd_apply(x_dd_per_antenna, ch, grid, "oracle")


def dd_simplified(x_dd_per_antenna, ch: ChannelRealization, grid: OtfsGrid) -> np.ndarray:
    """Per-path model: subpaths share the path's representative Doppler in the
    intra-symbol phase. Exact when every path has one subpath."""
    return _dd_apply(x_dd_per_antenna, ch, grid, "simplified")


def dd_integer_limit(x_dd_per_antenna, ch: ChannelRealization, grid: OtfsGrid) -> np.ndarray:
    """Model whose phase term uses the Doppler grid index; exact for on-grid Doppler."""
    return _dd_apply(x_dd_per_antenna, ch, grid, "integer")


def transmit(x_dd_per_antenna, ch: ChannelRealization, grid: OtfsGrid) -> np.ndarray:
    """Full noiseless chain: ISFFT, OFDM modulation, channel, demodulation, SFFT."""
    x = _per_antenna(x_dd_per_antenna, grid)
    r = apply_channel(ofdm_modulate(isfft(x, grid), grid), ch)
    return sfft(ofdm_demodulate(r, grid), grid)
