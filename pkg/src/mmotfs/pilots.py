"""Zadoff-Chu pilots, pilot/guard placement and beam-space conversion.

The pilot block occupies Doppler rows ``k_p ... k_p + N_p - 1`` and delay
columns ``l_p ... l_p + M_p - 1``. It is extended periodically by ``e``
rows on each Doppler side and ``M_g`` columns before it in delay, where
``e = ceil(N_g / 2)`` (``e = 0`` when ``N_p = N``). Guards of the same
sizes surround the extended region (Doppler both sides, delay after).
Every index wraps modulo the grid, so a block at ``l_p = 0`` has its delay
extension at the end of the frame.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import CapacityError, ConfigurationError, InvalidRootError, LayoutError
from .lattice import OtfsGrid, beam_values, doppler_row

__all__ = [
    "PilotLayout",
    "make_layout",
    "CellType",
    "PilotFrame",
    "zc_sequence",
    "is_prime",
    "nearest_prime",
    "design_pilots",
    "max_supported_antennas",
    "random_pilots",
    "pilot_power_scale",
    "assemble_frame",
    "beam_to_space",
    "space_to_beam",
    "footprint_cells",
    "baseline_footprint_cells",
    "save_pilots",
    "load_pilots",
]


@dataclass(frozen=True)
class PilotLayout:
    """Pilot block position and size plus the channel support it must cover.

    Parameters
    ----------
    k_p, l_p : int
        Doppler and delay index of the first pilot.
    N_p, M_p : int
        Pilot block size along Doppler and delay.
    N_g, M_g : int
        Doppler and delay extent of the truncated channel support.
    """

    k_p: int
    l_p: int
    N_p: int
    M_p: int
    N_g: int
    M_g: int

    def __post_init__(self):
        if min(self.N_p, self.M_p, self.N_g, self.M_g) < 1:
            raise ConfigurationError(f"layout sizes must be positive: {self}")
        if self.M_p < self.M_g or self.N_p < self.N_g:
            raise ConfigurationError(
                f"pilot block ({self.N_p}x{self.M_p}) smaller than channel support "
                f"({self.N_g}x{self.M_g})"
            )

    @property
    def n_rows(self) -> int:
        return self.M_p * self.N_p

    def n_cols(self, n_t: int) -> int:
        return self.M_g * self.N_g * n_t

    def doppler_extension(self, grid: OtfsGrid) -> int:
        return 0 if self.N_p == grid.N else math.ceil(self.N_g / 2)

    def validate(self, grid: OtfsGrid) -> None:
        """Raise :class:`LayoutError` if the layout does not fit ``grid``."""
        k_lo, k_hi = -(grid.N // 2), grid.N - grid.N // 2 - 1
        if self.N_p > grid.N or not (k_lo <= self.k_p and self.k_p + self.N_p - 1 <= k_hi):
            raise LayoutError(
                f"pilot rows {self.k_p}..{self.k_p + self.N_p - 1} outside [{k_lo}, {k_hi}]"
            )
        if not (0 <= self.l_p and self.l_p + self.M_p - 1 <= grid.M - 1):
            raise LayoutError(
                f"pilot columns {self.l_p}..{self.l_p + self.M_p - 1} outside [0, {grid.M - 1}]"
            )
        e = self.doppler_extension(grid)
        if self.N_p + 4 * e > grid.N or self.M_p + 2 * self.M_g > grid.M:
            raise LayoutError(
                f"footprint {self.N_p + 4 * e}x{self.M_p + 2 * self.M_g} exceeds grid "
                f"{grid.N}x{grid.M}"
            )


def make_layout(grid: OtfsGrid, M_p: int, N_p: int, N_g: int, M_g: int,
                l_p: int | None = None, k_p: int | None = None) -> PilotLayout:
    """Layout with defaults ``l_p = M_g`` and the pilot block centred in Doppler."""
    if k_p is None:
        k_p = -(grid.N // 2) if N_p == grid.N else -(N_p // 2)
    if l_p is None:
        l_p = M_g
    layout = PilotLayout(k_p=k_p, l_p=l_p, N_p=N_p, M_p=M_p, N_g=N_g, M_g=M_g)
    layout.validate(grid)
    return layout


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % d for d in range(2, math.isqrt(n) + 1))


def nearest_prime(n: int) -> int:
    """Closest prime to ``n``; the smaller one on a tie."""
    for d in range(0, n + 2):
        if is_prime(n - d):
            return n - d
        if is_prime(n + d):
            return n + d
    return 2


def zc_sequence(L: int, r: int, c: int = 0) -> np.ndarray:
    """Unit-norm Zadoff-Chu sequence of length ``L`` and root ``r``, cyclically
    shifted by ``c``."""
    if L < 1:
        raise ConfigurationError(f"length must be positive, got {L}")
    if not (1 <= r < L) or math.gcd(r, L) != 1:
        raise InvalidRootError(f"root {r} is not a valid root for length {L}")
    kc = (np.arange(L) - c) % L
    return np.exp(1j * np.pi * r * kc * (kc + L % 2) / L) / math.sqrt(L)


def _roots(L: int):
    return [r for r in range(L - 1, 0, -1) if math.gcd(r, L) == 1]


def max_supported_antennas(layout: PilotLayout) -> int:
    """Largest ``N_t`` the deterministic design can serve for ``layout``."""
    groups = min(len(_roots(layout.M_p)), len(_roots(layout.N_p)))
    return groups * (layout.M_p // layout.M_g) * (layout.N_p // layout.N_g)


def design_pilots(layout: PilotLayout, n_t: int) -> np.ndarray:
    """Deterministic pilot matrix of shape ``(M_p N_p, n_t)``, one column per beam.

    Beams are packed into groups sharing a root pair; inside a group the
    beams take distinct cyclic shifts ``(i M_g, j N_g)`` and are exactly
    orthogonal. Roots start at ``L - 1`` and step down per group, skipping
    values not coprime with ``L``.
    """
    if n_t < 1:
        raise ConfigurationError(f"n_t must be positive, got {n_t}")
    M_p, N_p = layout.M_p, layout.N_p
    if not (is_prime(M_p) and is_prime(N_p)):
        warnings.warn(
            f"M_p={M_p}, N_p={N_p} not both prime; cross-group coherence is not "
            f"guaranteed (nearest primes {nearest_prime(M_p)}, {nearest_prime(N_p)})",
            stacklevel=2,
        )
    eta_del = M_p // layout.M_g
    eta_dop = N_p // layout.N_g
    per_group = eta_del * eta_dop
    roots_m, roots_n = _roots(M_p), _roots(N_p)
    n_groups = -(-n_t // per_group)
    if n_groups > min(len(roots_m), len(roots_n)):
        cap = max_supported_antennas(layout)
        raise CapacityError(f"deterministic design supports at most {cap} beams, got {n_t}", cap)
    out = np.empty((M_p * N_p, n_t), dtype=complex)
    for b in range(n_t):
        g, rem = divmod(b, per_group)
        i, j = divmod(rem, eta_dop)
        zm = zc_sequence(M_p, roots_m[g], i * layout.M_g)
        zn = zc_sequence(N_p, roots_n[g], j * layout.N_g)
        out[:, b] = np.kron(zm, zn)
    return out


def random_pilots(layout: PilotLayout, n_t: int, rng_seed=0) -> np.ndarray:
    """I.i.d. complex Gaussian pilots with unit-norm columns."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    shape = (layout.n_rows, n_t)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=0)


def pilot_power_scale(layout: PilotLayout, n_t: int) -> float:
    """Scale giving unit total pilot power per cell for unit-norm columns."""
    return math.sqrt(layout.n_rows / n_t)


class CellType(IntEnum):
    DATA = 0
    PILOT = 1
    EXTENSION = 2
    GUARD = 3


@dataclass
class PilotFrame:
    """Beam-domain transmit frame.

    Attributes
    ----------
    beams : ndarray, shape (N_t, N, M)
        Delay-Doppler grid per beam, Doppler rows in centred storage order.
    cells : ndarray, shape (N, M)
        :class:`CellType` code per cell, shared by all beams.
    pilots : ndarray, shape (M_p N_p, N_t)
        Unscaled pilot columns.
    scale : float
        Factor applied to the pilots when placed.
    """

    beams: np.ndarray
    cells: np.ndarray
    pilots: np.ndarray
    scale: float
    layout: PilotLayout
    grid: OtfsGrid

    @property
    def data_mask(self) -> np.ndarray:
        return self.cells == CellType.DATA

    def counts(self) -> dict:
        return {t.name.lower(): int(np.sum(self.cells == t)) for t in CellType}


def _region(layout, grid):
    """Storage rows/cols and relative offsets of the extended region and footprint."""
    e = layout.doppler_extension(grid)
    dk_ext = np.arange(-e, layout.N_p + e)
    dl_ext = np.arange(-layout.M_g, layout.M_p)
    dk_fp = np.arange(-2 * e, layout.N_p + 2 * e)
    dl_fp = np.arange(-layout.M_g, layout.M_p + layout.M_g)
    return e, dk_ext, dl_ext, dk_fp, dl_fp


def assemble_frame(pilots, layout: PilotLayout, data=None, grid: OtfsGrid | None = None,
                   scale: float | None = None) -> PilotFrame:
    """Place pilots, cyclic extensions, guards and data on every beam.

    Parameters
    ----------
    pilots : ndarray, shape (M_p N_p, N_t)
    data : ndarray, optional
        Either one ``(N, M)`` stream sent as ``d / sqrt(N_t)`` on every beam,
        or per-beam grids ``(N_t, N, M)``. Only data cells are read.
    scale : float, optional
        Pilot amplitude; defaults to :func:`pilot_power_scale`.
    """
    if grid is None:
        raise ConfigurationError("grid is required")
    pilots = np.asarray(pilots, dtype=complex)
    n_t = pilots.shape[1]
    if pilots.shape[0] != layout.n_rows:
        raise ConfigurationError(f"pilot matrix has {pilots.shape[0]} rows, expected {layout.n_rows}")
    if n_t != grid.N_t:
        raise ConfigurationError(f"pilot matrix has {n_t} columns but N_t={grid.N_t}")
    layout.validate(grid)
    scale = pilot_power_scale(layout, n_t) if scale is None else scale
    N, M = grid.N, grid.M
    cells = np.full((N, M), CellType.DATA, dtype=np.int8)
    beams = np.zeros((n_t, N, M), dtype=complex)

    e, dk_ext, dl_ext, dk_fp, dl_fp = _region(layout, grid)
    rows_fp = doppler_row(layout.k_p + dk_fp, N)
    cols_fp = (layout.l_p + dl_fp) % M
    cells[np.ix_(rows_fp, cols_fp)] = CellType.GUARD
    rows_ext = doppler_row(layout.k_p + dk_ext, N)
    cols_ext = (layout.l_p + dl_ext) % M
    cells[np.ix_(rows_ext, cols_ext)] = CellType.EXTENSION
    rows_p = doppler_row(layout.k_p + np.arange(layout.N_p), N)
    cols_p = layout.l_p + np.arange(layout.M_p)
    cells[np.ix_(rows_p, cols_p)] = CellType.PILOT

    # periodic extension: cell (dk, dl) carries block entry (dk mod N_p, dl mod M_p)
    block = pilots.reshape(layout.M_p, layout.N_p, n_t)  # [dl, dk, b]
    vals = block[np.ix_(dl_ext % layout.M_p, dk_ext % layout.N_p)]  # (len dl, len dk, N_t)
    for b in range(n_t):
        beams[b][np.ix_(rows_ext, cols_ext)] = scale * vals[:, :, b].T

    if data is not None:
        data = np.asarray(data, dtype=complex)
        mask = cells == CellType.DATA
        if data.shape == (N, M):
            beams[:, mask] = data[mask] / math.sqrt(n_t)
        elif data.shape == (n_t, N, M):
            beams[:, mask] = data[:, mask]
        else:
            raise ConfigurationError(f"data shape {data.shape} not (N, M) or (N_t, N, M)")
    return PilotFrame(beams=beams, cells=cells, pilots=pilots, scale=scale, layout=layout, grid=grid)


def _beam_matrix(n_t):
    b = beam_values(n_t)
    ant = np.arange(n_t)
    return np.exp(2j * np.pi * np.outer(b, ant) / n_t) / math.sqrt(n_t)  # [b, n_t]


def beam_to_space(beams) -> np.ndarray:
    """``X_space[n_t] = (1/sqrt(N_t)) sum_b exp(-j 2 pi b n_t / N_t) X_beam[b]``.

    Accepts a :class:`PilotFrame` or an ``(N_t, N, M)`` array.
    """
    x = beams.beams if isinstance(beams, PilotFrame) else np.asarray(beams, dtype=complex)
    F = _beam_matrix(x.shape[0])
    return np.einsum("bt,bkl->tkl", F.conj(), x)


def space_to_beam(space) -> np.ndarray:
    """Inverse of :func:`beam_to_space`."""
    x = np.asarray(space, dtype=complex)
    F = _beam_matrix(x.shape[0])
    return np.einsum("bt,tkl->bkl", F, x)


def footprint_cells(layout: PilotLayout, grid: OtfsGrid) -> int:
    """Cells taken by pilots, extensions and guards."""
    e = layout.doppler_extension(grid)
    return (layout.N_p + 4 * e) * (layout.M_p + 2 * layout.M_g)


def baseline_footprint_cells(layout: PilotLayout, grid: OtfsGrid) -> int:
    """Footprint of a plain pilot block with one guard band per side and no
    cyclic extension, at the same pilot count."""
    return min(layout.N_p + layout.N_g, grid.N) * (layout.M_p + 2 * layout.M_g)


def save_pilots(pilots, path) -> None:
    """CSV with columns row, col, re, im."""
    pilots = np.asarray(pilots)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for (r, c), v in np.ndenumerate(pilots):
            w.writerow([r, c, repr(float(v.real)), repr(float(v.imag))])


def load_pilots(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n_r = 1 + max(int(r["row"]) for r in rows)
    n_c = 1 + max(int(r["col"]) for r in rows)
    out = np.zeros((n_r, n_c), dtype=complex)
    for r in rows:
        out[int(r["row"]), int(r["col"])] = complex(float(r["re"]), float(r["im"]))
    return out
