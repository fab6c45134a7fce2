"""Sparse multipath channels with fractional Doppler and subpath spread.

A channel is ``P`` dominant paths; each path has one integer delay tap and
``S`` subpaths with their own gain, Doppler shift and angle of departure
(AoD) at a half-wavelength ULA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .lattice import OtfsGrid, beam_values, doppler_values, xi_kernel

SPEED_OF_LIGHT = 2.99792458e8

__all__ = [
    "SPEED_OF_LIGHT",
    "Subpath",
    "DominantPath",
    "ChannelRealization",
    "generate_channel",
    "default_guard_sizes",
    "max_doppler_hz",
    "trial_rng",
    "sample_gain",
    "beam_channel_tensor",
    "beam_channel_closed_form",
    "ground_truth_hddb",
    "representative_doppler",
    "save_channel",
    "load_channel",
]


@dataclass(frozen=True)
class Subpath:
    gain: complex
    doppler_hz: float
    aod_rad: float = 0.0

    def __post_init__(self):
        if not abs(self.aod_rad) < math.pi / 2:
            raise ConfigurationError(f"AoD must satisfy |aod| < pi/2, got {self.aod_rad}")


@dataclass(frozen=True)
class DominantPath:
    delay_tap: int
    subpaths: tuple

    def __post_init__(self):
        if self.delay_tap < 0:
            raise ConfigurationError(f"delay tap must be >= 0, got {self.delay_tap}")
        if len(self.subpaths) < 1:
            raise ConfigurationError("a dominant path needs at least one subpath")
        object.__setattr__(self, "subpaths", tuple(self.subpaths))

    @property
    def gains(self):
        return np.array([s.gain for s in self.subpaths], dtype=complex)

    @property
    def dopplers_hz(self):
        return np.array([s.doppler_hz for s in self.subpaths], dtype=float)

    @property
    def aods(self):
        return np.array([s.aod_rad for s in self.subpaths], dtype=float)


@dataclass(frozen=True)
class ChannelRealization:
    paths: tuple
    grid: OtfsGrid = field(compare=False)

    def __post_init__(self):
        paths = tuple(self.paths)
        object.__setattr__(self, "paths", paths)
        taps = [p.delay_tap for p in paths]
        if len(set(taps)) != len(taps):
            raise ConfigurationError(f"delay taps must be distinct, got {taps}")
        # tap 0 needs no CP
        if taps and max(taps) > 0 and max(taps) >= self.grid.M_CP:
            raise ConfigurationError(
                f"max delay tap {max(taps)} not covered by M_CP={self.grid.M_CP}"
            )

    @property
    def delay_taps(self):
        return [p.delay_tap for p in self.paths]

    @property
    def max_delay_tap(self):
        return max(self.delay_taps) if self.paths else 0

    def power(self):
        return float(sum(np.sum(np.abs(p.gains) ** 2) for p in self.paths))

    def subpath_table(self):
        """Flat arrays (path id, tap, gain, doppler_hz, aod) over all subpaths."""
        ids, taps, gains, dops, aods = [], [], [], [], []
        for i, p in enumerate(self.paths):
            for s in p.subpaths:
                ids.append(i)
                taps.append(p.delay_tap)
                gains.append(s.gain)
                dops.append(s.doppler_hz)
                aods.append(s.aod_rad)
        return (
            np.array(ids, dtype=int),
            np.array(taps, dtype=int),
            np.array(gains, dtype=complex),
            np.array(dops, dtype=float),
            np.array(aods, dtype=float),
        )


def max_doppler_hz(velocity_mps: float, carrier_hz: float) -> float:
    return velocity_mps * carrier_hz / SPEED_OF_LIGHT


def default_guard_sizes(grid: OtfsGrid, velocity_mps: float, carrier_hz: float, max_delay_tap: int):
    """Default ``(N_g, M_g)`` covering the Doppler spread and delay spread."""
    nu_max = max_doppler_hz(velocity_mps, carrier_hz)
    N_g = 2 * (math.ceil(nu_max * grid.N * grid.T_sym) + 1)
    return N_g, max_delay_tap + 1


def trial_rng(seed: int, trial: int = 0, stream: int = 0) -> np.random.Generator:
    """Generator for one (seed, trial, stream) triple.

    Streams used by the harness: 0 channel, 1 data bits, 2 noise,
    3 random pilots. Distinct triples give independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), int(stream)]))


def _as_rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def generate_channel(
    grid: OtfsGrid,
    p_paths: int,
    s_subpaths: int,
    velocity_mps: float,
    carrier_hz: float,
    max_delay_tap: int,
    rng_seed=0,
    angular_spread_deg: float = 2.0,
) -> ChannelRealization:
    """Draw a random geometric channel.

    Delay taps are drawn without replacement from ``0 ... max_delay_tap``.
    Each path has a travel angle and an AoD; subpaths perturb both with a
    Gaussian of ``angular_spread_deg`` and carry equal-magnitude gains with
    uniform phase, normalised to unit total power.
    """
    if max_delay_tap >= grid.M_CP:
        raise ConfigurationError(
            f"max_delay_tap={max_delay_tap} must be < M_CP={grid.M_CP}"
        )
    if p_paths < 1 or s_subpaths < 1:
        raise ConfigurationError("need at least one path and one subpath")
    if p_paths > max_delay_tap + 1:
        raise ConfigurationError(
            f"cannot place {p_paths} distinct taps in 0..{max_delay_tap}"
        )
    rng = _as_rng(rng_seed)
    nu_max = max_doppler_hz(velocity_mps, carrier_hz)
    sigma = math.radians(angular_spread_deg)
    aod_limit = math.pi / 2 - 1e-9
    amp = 1.0 / math.sqrt(s_subpaths * p_paths)

    taps = rng.choice(max_delay_tap + 1, size=p_paths, replace=False)
    paths = []
    for tap in taps:
        theta = rng.uniform(0.0, 2 * math.pi)
        aod = rng.uniform(-math.pi / 2, math.pi / 2)
        d_theta = rng.normal(0.0, sigma, size=s_subpaths)
        d_aod = rng.normal(0.0, sigma, size=s_subpaths)
        phases = rng.uniform(0.0, 2 * math.pi, size=s_subpaths)
        subs = [
            Subpath(
                gain=complex(amp * np.exp(1j * phases[s])),
                doppler_hz=float(nu_max * math.cos(theta + d_theta[s])),
                aod_rad=float(np.clip(aod + d_aod[s], -aod_limit, aod_limit)),
            )
            for s in range(s_subpaths)
        ]
        paths.append(DominantPath(int(tap), tuple(subs)))
    return ChannelRealization(tuple(paths), grid)


def sample_gain(ch: ChannelRealization, rho: int, l: int, antenna: int | None = None) -> complex:
    """Time-variant gain of delay tap ``l`` at sample ``rho``.

    With ``antenna`` given, each subpath is weighted by its steering phase
    at that antenna.
    """
    Ts = ch.grid.T_s
    total = 0j
    for p in ch.paths:
        if p.delay_tap != l:
            continue
        g = p.gains * np.exp(2j * np.pi * (rho - l) * Ts * p.dopplers_hz)
        if antenna is not None:
            g = g * np.exp(1j * np.pi * antenna * np.sin(p.aods))
        total += g.sum()
    return complex(total)


def beam_channel_tensor(ch: ChannelRealization, n_delay: int | None = None) -> np.ndarray:
    """Delay-Doppler-beam channel via explicit DFTs of the sampled gains.

    Returns ``H[b_idx, l, k_row]`` of shape ``(N_t, n_delay, N)`` with the
    Doppler axis in centred storage order. The delay-Doppler-space channel
    is the length-N DFT of the gains sampled at ``M_CP + j (M + M_CP)``,
    then a unitary DFT over antennas maps to beams.
    """
    g = ch.grid
    n_delay = g.M if n_delay is None else n_delay
    N, N_t = g.N, g.N_t
    j = np.arange(N)
    ant = np.arange(N_t)
    H_dds = np.zeros((N_t, n_delay, N), dtype=complex)
    for p in ch.paths:
        if p.delay_tap >= n_delay:
            continue
        rho = g.M_CP + j * g.symbol_length
        # (S, N) samples per subpath, (S, N_t) steering
        samples = p.gains[:, None] * np.exp(
            2j * np.pi * np.outer(p.dopplers_hz, rho - p.delay_tap) * g.T_s
        )
        steer = np.exp(1j * np.pi * np.outer(np.sin(p.aods), ant))
        per_ant = steer.T @ samples  # (N_t, N)
        spec = np.fft.fft(per_ant, axis=-1) / math.sqrt(N)
        H_dds[:, p.delay_tap, :] += np.fft.fftshift(spec, axes=-1)
    # beam b = b_idx - N_t/2 uses exp(-j 2 pi b n_t / N_t)
    b = beam_values(N_t)
    F = np.exp(-2j * np.pi * np.outer(b, ant) / N_t) / math.sqrt(N_t)
    return np.einsum("bt,tlk->blk", F, H_dds)


def beam_channel_closed_form(ch: ChannelRealization, n_delay: int | None = None) -> np.ndarray:
    """Same tensor as :func:`beam_channel_tensor`, from the Xi-kernel closed form."""
    g = ch.grid
    n_delay = g.M if n_delay is None else n_delay
    N, N_t = g.N, g.N_t
    k = doppler_values(N)
    b = beam_values(N_t)
    H = np.zeros((N_t, n_delay, N), dtype=complex)
    scale = math.sqrt(N * N_t)
    for p in ch.paths:
        if p.delay_tap >= n_delay:
            continue
        for s in p.subpaths:
            kappa = s.doppler_hz * N * g.T_sym
            phase = np.exp(2j * np.pi * (g.M_CP - p.delay_tap) * g.T_s * s.doppler_hz)
            dop = xi_kernel(k - kappa, N)
            beam = xi_kernel(b - N_t * math.sin(s.aod_rad) / 2, N_t)
            H[:, p.delay_tap, :] += scale * s.gain * phase * np.outer(beam, dop)
    return H


def ground_truth_hddb(ch: ChannelRealization, layout) -> np.ndarray:
    """Vectorised delay-Doppler-beam channel seen by the sensing model.

    Truncates to ``k' in [ceil(-N_g/2), ceil(N_g/2) - 1]``, ``l' < M_g`` and
    orders entries by :func:`~mmotfs.lattice.col_index`. The ``1/sqrt(N)``
    prefactor of the delay-Doppler input-output relation is folded in, so
    noiseless received pilots satisfy ``y = Theta h``.
    """
    g = ch.grid
    if ch.paths and layout.M_g <= ch.max_delay_tap:
        raise ConfigurationError(
            f"M_g={layout.M_g} must exceed the max delay tap {ch.max_delay_tap}"
        )
    if layout.N_g > g.N:
        raise ConfigurationError(f"N_g={layout.N_g} exceeds N={g.N}")
    H = beam_channel_tensor(ch, n_delay=layout.M_g)
    rows = (np.arange(layout.N_g) - layout.N_g // 2) + g.N // 2
    return H[:, :, rows].reshape(-1) / math.sqrt(g.N)


def representative_doppler(path: DominantPath, grid: OtfsGrid) -> float:
    """Per-path Doppler in bins: gain-weighted circular mean of its subpaths."""
    kappa = grid.doppler_taps(path.dopplers_hz)
    weights = np.abs(path.gains)
    z = np.sum(weights * np.exp(2j * np.pi * kappa / grid.N))
    if abs(z) <= 1e-12 * max(weights.sum(), 1e-300):
        return float(np.mean(kappa))
    # unwrap around the arithmetic mean so the result stays near the subpaths
    ref = float(np.average(kappa, weights=weights)) if weights.sum() > 0 else float(np.mean(kappa))
    centre = grid.N * np.angle(z) / (2 * np.pi)
    return float(centre + grid.N * np.round((ref - centre) / grid.N))


def save_channel(ch: ChannelRealization, path) -> None:
    """Write one subpath per line: path id, tap, gain re, gain im, Doppler Hz, AoD rad."""
    g = ch.grid
    lines = [
        f"# grid M={g.M} N={g.N} M_CP={g.M_CP} delta_f={g.delta_f!r} N_t={g.N_t}",
        "# path_id delay_tap gain_re gain_im doppler_hz aod_rad",
    ]
    for i, p in enumerate(ch.paths):
        for s in p.subpaths:
            lines.append(
                f"{i} {p.delay_tap} {s.gain.real!r} {s.gain.imag!r} {s.doppler_hz!r} {s.aod_rad!r}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_channel(path, grid: OtfsGrid | None = None) -> ChannelRealization:
    """Read a file written by :func:`save_channel`."""
    header = {}
    by_path: dict[int, tuple[int, list]] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# grid"):
                for tok in line.split()[2:]:
                    key, val = tok.split("=")
                    header[key] = float(val) if key == "delta_f" else int(val)
                continue
            if line.startswith("#"):
                continue
            pid, tap, re, im, dop, aod = line.split()
            entry = by_path.setdefault(int(pid), (int(tap), []))
            entry[1].append(Subpath(complex(float(re), float(im)), float(dop), float(aod)))
    if grid is None:
        if not header:
            raise ConfigurationError("channel file has no grid header; pass grid explicitly")
        grid = OtfsGrid(**header)
    paths = tuple(DominantPath(tap, tuple(subs)) for _, (tap, subs) in sorted(by_path.items()))
    return ChannelRealization(paths, grid)
