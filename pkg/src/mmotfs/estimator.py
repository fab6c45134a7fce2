"""Sparse channel recovery and path delay / fractional Doppler extraction.

``ismce`` recovers the channel with the channel-agnostic phase matrix only.
``msmce`` adds a second pass: it extracts each dominant path's delay and
real-valued Doppler from a first estimate, rebuilds the phase matrix from
them and solves again.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateColumnError
from .kernels import omp_core
from .lattice import OtfsGrid
from .sensing import build_phi, build_phi_tilde

log = logging.getLogger(__name__)

__all__ = [
    "PathInfo",
    "ChannelEstimate",
    "omp_solve",
    "extract_paths",
    "ismce",
    "msmce",
    "save_path_info",
    "load_path_info",
]


@dataclass
class PathInfo:
    """Extracted delay taps and paired real-valued Doppler taps."""

    delays: list = field(default_factory=list)
    dopplers: list = field(default_factory=list)
    comparisons: int = 0

    def __post_init__(self):
        self.delays = [int(d) for d in self.delays]
        self.dopplers = [float(v) for v in self.dopplers]
        if len(self.delays) != len(self.dopplers):
            raise ConfigurationError("delays and Dopplers must pair up")
        if len(set(self.delays)) != len(self.delays):
            raise ConfigurationError(f"duplicate delay taps: {self.delays}")

    def __len__(self):
        return len(self.delays)

    def as_dict(self) -> dict:
        return dict(zip(self.delays, self.dopplers))


@dataclass
class ChannelEstimate:
    h_hat: np.ndarray
    support: np.ndarray
    residual_norm: float
    rank_deficient: bool = False


def omp_solve(theta, y, max_iters: int | None = None, residual_ratio: float = 0.02,
              noise_var: float | None = None, expected_sparsity: int | None = None) -> ChannelEstimate:
    """Orthogonal matching pursuit.

    Parameters
    ----------
    theta : ndarray or ImplicitSensingMatrix
        Sensing matrix, rows x columns.
    y : ndarray
        Measurements.
    max_iters : int, optional
        Iteration cap; defaults to ``min(rows, 4 * expected_sparsity)`` or
        ``rows``.
    residual_ratio : float
        Stop once ``||r|| / ||y||`` reaches this value.
    noise_var : float, optional
        When given (and positive) the stop ratio becomes
        ``sqrt(noise_var * rows) / ||y||``, the expected noise residual.

    Notes
    -----
    A selected column that is numerically dependent on the current support
    is dropped and the iteration halts with ``rank_deficient`` set.
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    m, n = theta.shape
    if y.shape[0] != m:
        raise ConfigurationError(f"y has {y.shape[0]} entries, theta has {m} rows")
    if max_iters is None:
        max_iters = m if expected_sparsity is None else min(m, 4 * expected_sparsity)
    y_norm = float(np.linalg.norm(y))
    ratio = residual_ratio
    if noise_var is not None and noise_var > 0 and y_norm > 0:
        ratio = math.sqrt(noise_var * m) / y_norm
    tol = ratio * y_norm

    if hasattr(theta, "column"):
        support, coef, res, deficient = _omp_implicit(theta, y, max_iters, tol)
    else:
        theta = np.asarray(theta)
        norms = np.linalg.norm(theta, axis=0)
        if np.any(norms == 0):
            raise DegenerateColumnError(f"column {int(np.argmin(norms))} has zero norm")
        support, coef, res, deficient = omp_core(theta, y, norms, max_iters, tol)
    if deficient:
        log.warning("OMP halted on a rank-deficient support after %d atoms", len(support))
    h = np.zeros(n, dtype=complex)
    h[support] = coef
    return ChannelEstimate(h_hat=h, support=np.asarray(support, dtype=np.int64),
                           residual_norm=float(res), rank_deficient=bool(deficient))


def _omp_implicit(op, y, max_iters, tol):
    m, n = op.shape
    norms = op.column_norms()
    if np.any(norms == 0):
        raise DegenerateColumnError(f"column {int(np.argmin(norms))} has zero norm")
    available = np.ones(n, dtype=bool)
    cols, support = [], []
    coef = np.zeros(0, dtype=complex)
    r = y.copy()
    res = float(np.linalg.norm(r))
    while len(support) < min(max_iters, m) and res > tol:
        score = np.abs(op.rmatvec(r)) / norms
        score[~available] = -1.0
        j = int(np.argmax(score))
        a = op.column(j)
        if cols:
            Q, _ = np.linalg.qr(np.column_stack(cols))
            perp = a - Q @ (Q.conj().T @ a)
            if np.vdot(perp, perp).real <= 1e-10 * norms[j] ** 2:
                return np.array(support), coef, res, True
        cols.append(a)
        support.append(j)
        available[j] = False
        A = np.column_stack(cols)
        coef = np.linalg.lstsq(A, y, rcond=None)[0]
        r = y - A @ coef
        res = float(np.linalg.norm(r))
    return np.array(support, dtype=np.int64), coef, res, False


def extract_paths(h_hat, layout, grid: OtfsGrid, epsilon: float = 0.05) -> PathInfo:
    """Delay taps and fractional Doppler taps of the dominant paths.

    The magnitude of the estimate is summed over beams into a delay x
    Doppler map and over Doppler into a delay profile. Each round takes
    the strongest remaining delay bin, its two strongest Doppler bins
    ``k1``, ``k2`` and sets the Doppler to
    ``k1 + (k2 - k1) H[k2] / (H[k1] + H[k2])``. Rounds continue while the
    remaining delay-profile mass exceeds ``epsilon`` of the total.
    """
    h = h_hat.h_hat if isinstance(h_hat, ChannelEstimate) else np.asarray(h_hat)
    N_g, M_g = layout.N_g, layout.M_g
    mag = np.abs(h).reshape(-1, M_g, N_g).sum(axis=0)  # [l', k' storage]
    profile = mag.sum(axis=1)
    total = float(profile.sum())
    delays, dops = [], []
    comparisons = 0
    if total <= 0:
        return PathInfo()
    while profile.sum() / total > epsilon and len(delays) < M_g:
        l_tau = int(np.argmax(profile))
        comparisons += M_g
        row = mag[l_tau]
        order = np.argsort(-row, kind="stable")
        comparisons += 2 * N_g
        k1, k2 = int(order[0]), int(order[1]) if N_g > 1 else int(order[0])
        h1, h2 = row[k1], row[k2]
        frac = (k2 - k1) * h2 / (h1 + h2) if (h1 + h2) > 0 else 0.0
        delays.append(l_tau)
        dops.append(k1 - N_g // 2 + frac)
        profile[l_tau] = 0.0
    return PathInfo(delays, dops, comparisons)


def ismce(X, y, layout, grid: OtfsGrid, **omp_kwargs) -> ChannelEstimate:
    """Estimate with the channel-agnostic sensing matrix only."""
    theta = X * build_phi_tilde(layout, grid)
    return omp_solve(theta, y, **omp_kwargs)


def msmce(X, y, layout, grid: OtfsGrid, prior: PathInfo | None = None,
          epsilon: float = 0.05, **omp_kwargs):
    """Two-stage estimate with a path-aware sensing matrix.

    Without a (non-empty) ``prior`` the path information comes from an
    ISMCE first stage. If that stage finds no path, its estimate is
    returned unchanged. Returns ``(estimate, path_info)`` where
    ``path_info`` is re-extracted from the final estimate, ready to be
    passed as the prior for the next frame.
    """
    if prior is None or len(prior) == 0:
        first = ismce(X, y, layout, grid, **omp_kwargs)
        prior = extract_paths(first, layout, grid, epsilon)
        if len(prior) == 0:
            return first, prior
    theta = X * build_phi(prior, layout, grid)
    est = omp_solve(theta, y, **omp_kwargs)
    return est, extract_paths(est, layout, grid, epsilon)


def save_path_info(info: PathInfo, path) -> None:
    """One path per line: delay tap, real Doppler tap."""
    with open(path, "w") as fh:
        fh.write("# delay_tap doppler_tap\n")
        for d, v in zip(info.delays, info.dopplers):
            fh.write(f"{d} {v!r}\n")


def load_path_info(path) -> PathInfo:
    delays, dops = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            d, v = line.split()
            delays.append(int(d))
            dops.append(float(v))
    return PathInfo(delays, dops)
