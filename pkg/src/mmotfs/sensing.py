"""Linear measurement model ``y = (Phi * X) h`` for the received pilot block.

Rows follow :func:`~mmotfs.lattice.row_index` and columns follow
:func:`~mmotfs.lattice.col_index` in every matrix built here, so ``y``,
the pilot matrix ``X``, the phase matrix ``Phi`` and ``Theta = Phi * X``
(elementwise) share one indexing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .errors import ConfigurationError, DegenerateColumnError
from .lattice import OtfsGrid, col_coordinates, doppler_row, row_coordinates

__all__ = [
    "build_pilot_matrix",
    "build_phi_tilde",
    "build_phi",
    "extract_received",
    "scatter_received",
    "coherence_profile",
    "welch_bound",
    "SensingProblem",
    "ImplicitSensingMatrix",
]


def _beams(frame):
    return frame.beams if hasattr(frame, "beams") else np.asarray(frame)


def build_pilot_matrix(frame, layout, grid: OtfsGrid) -> np.ndarray:
    """Pilot matrix with entry ``X_b[<k - k'>_N, (l - l')_M]`` at
    ``(row_index(k, l), col_index(k', l', b))``.

    ``frame`` is a :class:`~mmotfs.pilots.PilotFrame` or its ``(N_t, N, M)``
    beam array.
    """
    beams = _beams(frame)
    k, l = row_coordinates(layout)
    kp, lp, b = col_coordinates(layout, grid)
    b_idx = b + grid.N_t // 2
    rows = doppler_row(k[:, None] - kp[None, :], grid.N)
    cols = (l[:, None] - lp[None, :]) % grid.M
    return beams[b_idx[None, :], rows, cols]


def build_phi_tilde(layout, grid: OtfsGrid) -> np.ndarray:
    """Channel-agnostic phase matrix ``exp(j 2 pi l k' / ((M + M_CP) N))``."""
    _, l = row_coordinates(layout)
    kp, _, _ = col_coordinates(layout, grid)
    return np.exp(2j * np.pi * np.outer(l, kp) / grid.phase_denominator)


def build_phi(path_info, layout, grid: OtfsGrid) -> np.ndarray:
    """Path-aware phase matrix.

    Columns whose delay ``l'`` equals an extracted path delay carry
    ``exp(j 2 pi l nu / ((M + M_CP) N))`` with that path's real Doppler tap
    ``nu``; every other entry is 1. Values do not depend on ``k'`` or ``b``.
    """
    delays = list(path_info.delays)
    dops = list(path_info.dopplers)
    if len(set(delays)) != len(delays):
        raise ConfigurationError(f"duplicate delay taps in path info: {delays}")
    if len(delays) != len(dops):
        raise ConfigurationError("delays and Dopplers must pair up")
    _, l = row_coordinates(layout)
    _, lp, _ = col_coordinates(layout, grid)
    nu_col = np.zeros(len(lp))
    hit = np.zeros(len(lp), dtype=bool)
    for d, nu in zip(delays, dops):
        if not 0 <= d < layout.M_g:
            raise ConfigurationError(f"delay tap {d} outside [0, {layout.M_g - 1}]")
        sel = lp == d
        nu_col[sel] = nu
        hit |= sel
    phi = np.exp(2j * np.pi * np.outer(l, nu_col) / grid.phase_denominator)
    phi[:, ~hit] = 1.0
    return phi


def extract_received(y_dd, layout) -> np.ndarray:
    """Received pilot-block symbols in row order."""
    y_dd = np.asarray(y_dd)
    N = y_dd.shape[0]
    k, l = row_coordinates(layout)
    return y_dd[doppler_row(k, N), l]


def scatter_received(y, layout, grid: OtfsGrid) -> np.ndarray:
    """Place a row-ordered vector back on an otherwise zero ``(N, M)`` grid."""
    out = np.zeros((grid.N, grid.M), dtype=complex)
    k, l = row_coordinates(layout)
    out[doppler_row(k, grid.N), l] = y
    return out


def coherence_profile(A, bins: int = 50) -> dict:
    """Mutual coherence of the columns of ``A``.

    Returns ``max_offdiag``, the off-diagonal magnitudes ``values`` (upper
    triangle) and a ``histogram`` tuple ``(counts, edges)`` over ``[0, 1]``.
    """
    A = np.asarray(A)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise DegenerateColumnError(f"column {int(np.argmin(norms))} has zero norm")
    U = A / norms
    G = np.abs(U.conj().T @ U)
    iu = np.triu_indices(G.shape[0], k=1)
    values = G[iu]
    max_off = float(values.max()) if values.size else 0.0
    return {
        "max_offdiag": max_off,
        "values": values,
        "histogram": np.histogram(values, bins=bins, range=(0.0, 1.0)),
    }


def welch_bound(n_rows: int, n_cols: int) -> float:
    """Lower bound on the coherence of ``n_cols`` unit vectors in ``n_rows`` dimensions."""
    if n_cols <= n_rows:
        return 0.0
    return math.sqrt((n_cols - n_rows) / ((n_cols - 1) * n_rows))


@dataclass
class SensingProblem:
    """Received vector, pilot matrix and phase matrix of one estimation."""

    y: np.ndarray
    X: np.ndarray
    Phi: np.ndarray

    def __post_init__(self):
        if self.X.shape != self.Phi.shape:
            raise ConfigurationError(f"X {self.X.shape} and Phi {self.Phi.shape} differ")
        if self.y.shape != (self.X.shape[0],):
            raise ConfigurationError(f"y has shape {self.y.shape}, expected ({self.X.shape[0]},)")

    @property
    def Theta(self) -> np.ndarray:
        return self.X * self.Phi


class ImplicitSensingMatrix(LinearOperator):
    """``Theta`` without storing it; columns are generated on demand.

    Column ``c`` is read from the beam grids and multiplied by its phase,
    so memory is ``O(rows)`` per call instead of ``O(rows * cols)``.
    """

    def __init__(self, frame, layout, grid: OtfsGrid, path_info=None):
        self.beams = _beams(frame)
        self.layout = layout
        self.grid = grid
        self._k, self._l = row_coordinates(layout)
        self._kp, self._lp, b = col_coordinates(layout, grid)
        self._b_idx = b + grid.N_t // 2
        nu = self._kp.astype(float)
        if path_info is not None:
            # path-aware: phase depends on the path through l' only
            nu = np.zeros(len(self._lp))
            hit = np.zeros(len(self._lp), dtype=bool)
            for d, v in zip(path_info.delays, path_info.dopplers):
                nu[self._lp == d] = v
                hit |= self._lp == d
            nu[~hit] = 0.0
        self._nu = nu
        super().__init__(dtype=complex, shape=(len(self._k), len(self._kp)))

    def column(self, c: int) -> np.ndarray:
        g = self.grid
        rows = doppler_row(self._k - self._kp[c], g.N)
        cols = (self._l - self._lp[c]) % g.M
        x = self.beams[self._b_idx[c], rows, cols]
        return x * np.exp(2j * np.pi * self._l * self._nu[c] / g.phase_denominator)

    def column_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.column(c)) for c in range(self.shape[1])])

    def _matvec(self, h):
        h = np.asarray(h).reshape(-1)
        out = np.zeros(self.shape[0], dtype=complex)
        for c in np.flatnonzero(h):
            out += h[c] * self.column(c)
        return out

    def _rmatvec(self, r):
        r = np.asarray(r).reshape(-1)
        return np.array([np.vdot(self.column(c), r) for c in range(self.shape[1])])
