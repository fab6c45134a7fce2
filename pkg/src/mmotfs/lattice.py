"""Time-frequency and delay-Doppler lattices.

Delay-Doppler grids are stored as ``(N, M)`` arrays with the Doppler axis
centred: storage row ``r`` holds Doppler index ``k = r - N // 2``, so rows
cover ``ceil(-N/2) ... ceil(N/2) - 1``. Time-frequency grids are plain
``(N, M)`` arrays indexed ``[n, m]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "OtfsGrid",
    "isfft",
    "sfft",
    "xi_kernel",
    "recentered_mod",
    "doppler_row",
    "doppler_values",
    "beam_values",
    "row_index",
    "col_index",
    "row_coordinates",
    "col_coordinates",
]


@dataclass(frozen=True)
class OtfsGrid:
    """Lattice and sampling parameters of one OTFS frame.

    Parameters
    ----------
    M : int
        Number of subcarriers (delay bins).
    N : int
        Number of OFDM symbols per OTFS frame (Doppler bins).
    M_CP : int
        Cyclic prefix length in samples, one CP per OFDM symbol.
    delta_f : float
        Subcarrier spacing in Hz.
    N_t : int
        Number of BS antennas. Must be even, or 1 for a SISO link.
    """

    M: int
    N: int
    M_CP: int
    delta_f: float = 15e3
    N_t: int = 1

    def __post_init__(self):
        if self.M <= 0 or self.N <= 0:
            raise ConfigurationError(f"M and N must be positive, got M={self.M}, N={self.N}")
        if self.M_CP < 0:
            raise ConfigurationError(f"M_CP must be non-negative, got {self.M_CP}")
        if self.delta_f <= 0:
            raise ConfigurationError(f"delta_f must be positive, got {self.delta_f}")
        if self.N_t <= 0 or (self.N_t != 1 and self.N_t % 2):
            raise ConfigurationError(f"N_t must be even (or 1), got {self.N_t}")

    @property
    def T_s(self) -> float:
        """Sample interval 1/(M delta_f) in seconds."""
        return 1.0 / (self.M * self.delta_f)

    @property
    def T(self) -> float:
        """OFDM symbol duration without CP."""
        return self.M * self.T_s

    @property
    def T_sym(self) -> float:
        """OFDM symbol duration including CP."""
        return (self.M + self.M_CP) * self.T_s

    @property
    def symbol_length(self) -> int:
        return self.M + self.M_CP

    @property
    def frame_length(self) -> int:
        """Samples per antenna in one OTFS frame."""
        return self.N * (self.M + self.M_CP)

    @property
    def phase_denominator(self) -> int:
        """(M + M_CP) N, the denominator of every intra-frame Doppler phase."""
        return (self.M + self.M_CP) * self.N

    def doppler_taps(self, doppler_hz):
        """Doppler frequency in Hz expressed in (fractional) Doppler bins."""
        return np.asarray(doppler_hz) * self.N * self.T_sym

    def doppler_hz(self, taps):
        return np.asarray(taps) / (self.N * self.T_sym)


def _check_shape(x, grid, what):
    x = np.asarray(x)
    if x.shape[-2:] != (grid.N, grid.M):
        raise ConfigurationError(
            f"{what} has shape {x.shape}, expected (..., {grid.N}, {grid.M})"
        )
    return x


def isfft(x_dd, grid: OtfsGrid) -> np.ndarray:
    """Map delay-Doppler symbols to the time-frequency plane.

    Unitary; works on any leading batch axes (e.g. one grid per antenna).
    """
    x_dd = _check_shape(x_dd, grid, "delay-Doppler grid")
    natural = np.fft.ifftshift(x_dd, axes=-2)
    return np.fft.ifft(np.fft.fft(natural, axis=-1, norm="ortho"), axis=-2, norm="ortho")


def sfft(y_tf, grid: OtfsGrid) -> np.ndarray:
    """Inverse of :func:`isfft`."""
    y_tf = _check_shape(y_tf, grid, "time-frequency grid")
    natural = np.fft.ifft(np.fft.fft(y_tf, axis=-2, norm="ortho"), axis=-1, norm="ortho")
    return np.fft.fftshift(natural, axes=-2)


def xi_kernel(x, L: int):
    """Dirichlet-type kernel ``(1/L) sum_{i<L} exp(-j 2 pi x i / L)``.

    Accepts scalars or arrays; evaluated by direct summation.
    """
    if L <= 0:
        raise ConfigurationError(f"L must be positive, got {L}")
    x = np.asarray(x, dtype=float)
    i = np.arange(L)
    out = np.exp(-2j * np.pi * x[..., None] * i / L).mean(axis=-1)
    return out[()] if out.ndim == 0 else out


def recentered_mod(x, N: int):
    """``<x>_N``: x mod N mapped into ``[-floor(N/2), ceil(N/2) - 1]``."""
    return (np.asarray(x) + N // 2) % N - N // 2


def doppler_row(k, N: int):
    """Storage row of Doppler index k (any integer, taken mod N)."""
    return (np.asarray(k) + N // 2) % N


def doppler_values(N: int) -> np.ndarray:
    """Doppler indices in storage order."""
    return np.arange(N) - N // 2


def beam_values(N_t: int) -> np.ndarray:
    """Beam indices ``-N_t/2 ... N_t/2 - 1`` in storage order."""
    return np.arange(N_t) - N_t // 2


def row_index(k: int, l: int, layout) -> int:
    """Row of received symbol (k, l) in y and in the pilot/sensing matrices."""
    dk, dl = k - layout.k_p, l - layout.l_p
    if not (0 <= dk < layout.N_p and 0 <= dl < layout.M_p):
        raise IndexError(f"(k={k}, l={l}) outside the pilot block")
    return dl * layout.N_p + dk


def col_index(k_prime: int, l_prime: int, b: int, layout, grid: OtfsGrid) -> int:
    """Column of channel coefficient (k', l', b) in h and the sensing matrices."""
    N_g, M_g, N_t = layout.N_g, layout.M_g, grid.N_t
    k_lo = -(N_g // 2)
    if not (k_lo <= k_prime <= k_lo + N_g - 1):
        raise IndexError(f"k'={k_prime} outside [{k_lo}, {k_lo + N_g - 1}]")
    if not (0 <= l_prime < M_g):
        raise IndexError(f"l'={l_prime} outside [0, {M_g - 1}]")
    if not (-(N_t // 2) <= b <= N_t - N_t // 2 - 1):
        raise IndexError(f"b={b} outside the beam range for N_t={N_t}")
    return (b + N_t // 2) * M_g * N_g + l_prime * N_g + (k_prime + N_g // 2)


def row_coordinates(layout):
    """Arrays ``(k, l)`` of the received symbol behind every row, in row order."""
    r = np.arange(layout.M_p * layout.N_p)
    return layout.k_p + r % layout.N_p, layout.l_p + r // layout.N_p


def col_coordinates(layout, grid: OtfsGrid):
    """Arrays ``(k', l', b)`` of the channel coefficient behind every column."""
    N_g, M_g = layout.N_g, layout.M_g
    c = np.arange(M_g * N_g * grid.N_t)
    k_prime = c % N_g - N_g // 2
    l_prime = (c // N_g) % M_g
    b = c // (M_g * N_g) - grid.N_t // 2
    return k_prime, l_prime, b
