"""Monte-Carlo experiments: metrics, MMSE detection, trials and sweeps.

Every random draw comes from :func:`~mmotfs.channel.trial_rng` keyed by
``(seed, trial, stream)``, so a sweep is a pure function of its config.
Channel and data streams depend on the trial only, which gives common
random numbers across the values of a sweep.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import (
    ChannelRealization,
    default_guard_sizes,
    generate_channel,
    ground_truth_hddb,
    representative_doppler,
    trial_rng,
)
from .errors import ConfigurationError, UndefinedMetricError
from .estimator import ChannelEstimate, PathInfo, extract_paths, ismce, msmce
from .kernels import shift_accumulate
from .lattice import OtfsGrid, col_coordinates, doppler_values, isfft, sfft
from .modem import (
    add_noise,
    apply_channel,
    dd_coefficients,
    dd_oracle,
    noise_variance,
    ofdm_demodulate,
    ofdm_modulate,
)
from .pilots import (
    PilotFrame,
    assemble_frame,
    beam_to_space,
    design_pilots,
    make_layout,
    random_pilots,
)
from .sensing import build_pilot_matrix, extract_received

log = logging.getLogger(__name__)

__all__ = [
    "nmse",
    "approximation_error_zeta",
    "pilot_overhead_ratio",
    "qam4_modulate",
    "qam4_demodulate",
    "estimated_coefficients",
    "true_coefficients",
    "model_response",
    "operator_matrix",
    "pilot_beams",
    "mmse_detect",
    "ExperimentConfig",
    "ResultRow",
    "SweepFailedError",
    "run_trial",
    "run_sweep",
    "rows_to_csv",
    "write_csv",
]

SWEEP_VARIABLES = ("snr", "velocity", "overhead", "estimator", "pilot_type", "l_p", "subpaths")
ESTIMATORS = ("msmce", "ismce", "perfect")


def nmse(h_hat, h_true) -> float:
    """``||h_hat - h||^2 / ||h||^2``."""
    h_hat = np.asarray(h_hat)
    h_true = np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ConfigurationError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    ref = float(np.sum(np.abs(h_true) ** 2))
    if ref == 0:
        raise UndefinedMetricError("NMSE undefined for an all-zero reference")
    return float(np.sum(np.abs(h_hat - h_true) ** 2) / ref)


def approximation_error_zeta(ch: ChannelRealization, l: int, grid: OtfsGrid, representative=None) -> float:
    """Phase error of giving all subpaths of a path one Doppler, at delay index ``l``.

    ``representative`` lists one Doppler tap per path; it defaults to
    :func:`~mmotfs.channel.representative_doppler`.
    """
    if representative is None:
        representative = [representative_doppler(p, grid) for p in ch.paths]
    if len(representative) != len(ch.paths):
        raise ConfigurationError("need one representative Doppler per path")
    D = grid.phase_denominator
    total = 0.0
    for p, rep in zip(ch.paths, representative):
        kappa = grid.doppler_taps(p.dopplers_hz)
        total += float(np.sum(np.abs(np.exp(2j * np.pi * l * (kappa - rep) / D) - 1)))
    return total


def pilot_overhead_ratio(layout, grid: OtfsGrid) -> float:
    return layout.M_p * layout.N_p / (grid.M * grid.N)


def qam4_modulate(bits) -> np.ndarray:
    """Gray-mapped unit-power 4QAM; ``bits`` has a trailing axis of length 2."""
    bits = np.asarray(bits)
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / math.sqrt(2)


def qam4_demodulate(symbols) -> np.ndarray:
    symbols = np.asarray(symbols)
    return np.stack([symbols.real < 0, symbols.imag < 0], axis=-1).astype(np.int8)


# A delay-Doppler model is a list of terms (kshift, lshift, coef, beam):
#   Y[k, l] += sum_r coef[r, l] X_beam[k - kshift[r], (l - lshift) mod M]
# with beam=None meaning "the single data stream" (antenna 0).


def true_coefficients(ch: ChannelRealization, grid: OtfsGrid):
    """Exact model of the stream sent on antenna 0."""
    kshift = doppler_values(grid.N).astype(np.int64)
    return [(kshift, tap, coef[0], None) for tap, coef in dd_coefficients(ch, grid, "oracle", 1)]


def estimated_coefficients(h_hat, layout, grid: OtfsGrid, path_info: PathInfo | None = None):
    """Model terms per beam from a beam-domain estimate.

    ``path_info=None`` uses the channel-agnostic phase ``exp(j 2 pi l k' / D)``;
    otherwise delays in ``path_info`` get their extracted Doppler and all
    other delays no phase.
    """
    h = np.asarray(h_hat.h_hat if isinstance(h_hat, ChannelEstimate) else h_hat)
    kp, lp, b = col_coordinates(layout, grid)
    D = grid.phase_denominator
    l = np.arange(grid.M)
    dop = None if path_info is None else path_info.as_dict()
    terms = []
    for b_val in np.unique(b):
        for l_val in range(layout.M_g):
            sel = (b == b_val) & (lp == l_val)
            coefs = h[sel]
            if not np.any(coefs):
                continue
            ks = kp[sel].astype(np.int64)
            if dop is None:
                phase = np.exp(2j * np.pi * np.outer(ks, l) / D)
            elif l_val in dop:
                phase = np.broadcast_to(np.exp(2j * np.pi * dop[l_val] * l / D), (len(ks), grid.M))
            else:
                phase = np.ones((len(ks), grid.M))
            terms.append((ks, l_val, coefs[:, None] * phase, int(b_val + grid.N_t // 2)))
    return terms


def model_response(terms, beams, grid: OtfsGrid) -> np.ndarray:
    """Apply model terms to per-beam grids ``(N_t, N, M)`` (or one stream ``(N, M)``)."""
    beams = np.asarray(beams, dtype=complex)
    out = np.zeros((grid.N, grid.M), dtype=complex)
    for kshift, lshift, coef, beam in terms:
        x = beams if beams.ndim == 2 else beams[0 if beam is None else beam]
        shift_accumulate(out, np.ascontiguousarray(coef), kshift, np.ascontiguousarray(x), lshift)
    return out


def operator_matrix(terms, grid: OtfsGrid, beam_weights=None) -> np.ndarray:
    """Dense ``(N M) x (N M)`` matrix of the model acting on one data stream.

    The stream is sent on every beam with weight ``beam_weights[b]``
    (ignored for terms with ``beam=None``). Rows and columns use the
    flattened storage order of an ``(N, M)`` grid.
    """
    N, M = grid.N, grid.M
    A = np.zeros((N * M, N * M), dtype=complex)
    k = np.arange(N)[:, None, None]
    l = np.arange(M)[None, None, :]
    for kshift, lshift, coef, beam in terms:
        w = 1.0 if beam is None or beam_weights is None else beam_weights[beam]
        ks = np.asarray(kshift)[None, :, None]
        rows = np.broadcast_to(k * M + l, (N, len(kshift), M))
        cols = np.broadcast_to(((k - ks) % N) * M + (l - lshift) % M, (N, len(kshift), M))
        vals = np.broadcast_to(w * coef[None, :, :], (N, len(kshift), M))
        np.add.at(A, (rows.ravel(), cols.ravel()), vals.ravel())
    return A


def pilot_beams(frame: PilotFrame) -> np.ndarray:
    """Frame beams with the data cells zeroed."""
    return np.where(frame.data_mask[None], 0, frame.beams)


def mmse_detect(y_dd, terms, frame: PilotFrame, noise_var: float, bits=None, beam_weights=None,
                pilot_response=None):
    """Linear MMSE detection of the data cells over the whole frame.

    The pilot contribution (``pilot_response``, or the one predicted by
    ``terms`` from the frame's pilot beams) is subtracted first. Returns a
    dict with the soft estimates, hard bits, ``ber`` (when ``bits`` of
    shape ``(n_data, 2)`` is given) and a ``failed`` flag.
    """
    grid = frame.grid
    has_beams = any(t[3] is not None for t in terms)
    if pilot_response is None:
        if not has_beams:
            raise ConfigurationError("stream-only terms need an explicit pilot_response")
        pilot_response = model_response(terms, pilot_beams(frame), grid)
    y_eff = np.asarray(y_dd) - pilot_response
    if beam_weights is None and has_beams:
        beam_weights = np.full(grid.N_t, 1 / math.sqrt(grid.N_t))
    A = operator_matrix(terms, grid, beam_weights)[:, frame.data_mask.ravel()]
    AhA = A.conj().T @ A
    reg = noise_var if noise_var > 0 else 1e-12 * max(np.trace(AhA).real / AhA.shape[0], 1e-300)
    failed = False
    try:
        x_hat = scipy.linalg.solve(AhA + reg * np.eye(AhA.shape[0]), A.conj().T @ y_eff.ravel(),
                                   assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        failed = True
        x_hat = np.zeros(A.shape[1], dtype=complex)
    hard = qam4_demodulate(x_hat)
    out = {"symbols": x_hat, "bits": hard, "failed": failed, "ber": None}
    if bits is not None:
        out["ber"] = float(np.mean(hard != np.asarray(bits)))
    return out


@dataclass
class ExperimentConfig:
    """All knobs of a Monte-Carlo run. ``None`` sizes take their defaults."""

    M: int = 64
    N: int = 16
    M_CP: int = 16
    delta_f: float = 15e3
    N_t: int = 8
    M_p: int = 23
    N_p: int = 16
    l_p: int | None = None
    k_p: int | None = None
    N_g: int | None = None
    M_g: int | None = None
    pilot_type: str = "deterministic"
    paths: int = 4
    subpaths: int = 20
    velocity: float = 100.0
    carrier: float = 4e9
    max_delay_tap: int = 7
    angular_spread_deg: float = 2.0
    fixed_channel: bool = False
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    trials: int = 200
    seed: int = 0
    estimator: str = "msmce"
    sweep: str = "snr"
    sweep_values: list | None = None
    ber: bool = False
    epsilon: float = 0.05
    residual_ratio: float = 0.02
    carry_path_info: bool = False
    record_time: bool = False
    max_failure_rate: float = 0.01

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if self.pilot_type not in ("deterministic", "random"):
            raise ConfigurationError(f"unknown pilot_type {self.pilot_type!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigurationError(f"unknown sweep variable {self.sweep!r}")
        if not self.snr_db:
            raise ConfigurationError("snr_db must list at least one value")
        if self.sweep == "snr":
            self.layout(self.grid())
            return
        for v in self.values():
            self.at(v)  # validates the derived config

    def values(self) -> list:
        if self.sweep_values is not None:
            return list(self.sweep_values)
        if self.sweep == "snr":
            return list(self.snr_db)
        if self.sweep == "estimator":
            return list(ESTIMATORS[:2])
        if self.sweep == "pilot_type":
            return ["deterministic", "random"]
        raise ConfigurationError(f"sweep over {self.sweep!r} needs sweep_values")

    def at(self, value) -> "ExperimentConfig":
        """Config with the sweep variable set to ``value`` (snr is a list head)."""
        key = {"snr": "snr_db", "overhead": "M_p"}.get(self.sweep, self.sweep)
        if key == "snr_db":
            value = [float(value)]
        elif key in ("M_p", "l_p", "subpaths"):
            value = int(value)
        elif key == "velocity":
            value = float(value)
        return dataclasses.replace(self, **{key: value, "sweep": "snr", "sweep_values": None})

    def grid(self) -> OtfsGrid:
        return OtfsGrid(self.M, self.N, self.M_CP, self.delta_f, self.N_t)

    def layout(self, grid: OtfsGrid | None = None):
        grid = grid or self.grid()
        N_g, M_g = default_guard_sizes(grid, self.velocity, self.carrier, self.max_delay_tap)
        N_g = min(N_g if self.N_g is None else self.N_g, grid.N)
        M_g = M_g if self.M_g is None else self.M_g
        return make_layout(grid, self.M_p, self.N_p, N_g, M_g, l_p=self.l_p, k_p=self.k_p)


@dataclass
class ResultRow:
    sweep_value: object
    nmse_mean: float
    nmse_std: float
    ber_mean: float
    zeta_mean: float
    trials: int
    failed: int
    wall_time: float | None = None


class SweepFailedError(RuntimeError):
    pass


_PILOT_CACHE: dict = {}


def _pilots(cfg, layout, trial):
    if cfg.pilot_type == "random":
        return random_pilots(layout, cfg.N_t, trial_rng(cfg.seed, trial, 3))
    key = (layout, cfg.N_t)
    if key not in _PILOT_CACHE:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _PILOT_CACHE[key] = design_pilots(layout, cfg.N_t)
    return _PILOT_CACHE[key]


def run_trial(cfg: ExperimentConfig, trial: int, estimators=None, prior: PathInfo | None = None) -> dict:
    """One end-to-end frame at ``cfg.snr_db[0]``.

    Returns a dict with the channel, truth, per-estimator estimates, NMSE,
    BER (when ``cfg.ber``), path information and ``zeta``.
    """
    estimators = estimators or (cfg.estimator,)
    grid = cfg.grid()
    layout = cfg.layout(grid)
    snr = cfg.snr_db[0]
    ch_trial = 0 if cfg.fixed_channel else trial
    ch = generate_channel(grid, cfg.paths, cfg.subpaths, cfg.velocity, cfg.carrier, cfg.max_delay_tap,
                          trial_rng(cfg.seed, ch_trial, 0), cfg.angular_spread_deg)
    bits = trial_rng(cfg.seed, trial, 1).integers(0, 2, size=(grid.N, grid.M, 2))
    data = qam4_modulate(bits)
    frame = assemble_frame(_pilots(cfg, layout, trial), layout, data, grid)
    r = apply_channel(ofdm_modulate(isfft(beam_to_space(frame), grid), grid), ch)
    nv = noise_variance(r, snr)
    r = add_noise(r, snr, trial_rng(cfg.seed, trial, 2))
    y_dd = sfft(ofdm_demodulate(r, grid), grid)
    y = extract_received(y_dd, layout)
    X = build_pilot_matrix(frame, layout, grid)
    h = ground_truth_hddb(ch, layout)
    omp = dict(residual_ratio=cfg.residual_ratio, noise_var=nv,
               expected_sparsity=cfg.paths * layout.N_g * 2)

    out = {"channel": ch, "h_true": h, "layout": layout, "grid": grid, "noise_var": nv,
           "estimates": {}, "nmse": {}, "ber": {}, "path_info": {}}
    zeta_l = layout.l_p + layout.M_p - 1
    out["zeta"] = approximation_error_zeta(ch, zeta_l, grid)

    need_ismce = any(e in ("ismce", "msmce") for e in estimators)
    if need_ismce:
        est_i = ismce(X, y, layout, grid, **omp)
        out["estimates"]["ismce"] = est_i
        out["path_info"]["ismce"] = extract_paths(est_i, layout, grid, cfg.epsilon)
    if "msmce" in estimators:
        first = prior if prior is not None and len(prior) else out["path_info"]["ismce"]
        if len(first):
            est_m, info = msmce(X, y, layout, grid, prior=first, epsilon=cfg.epsilon, **omp)
        else:
            est_m, info = out["estimates"]["ismce"], first
        out["estimates"]["msmce"] = est_m
        out["phi_info"] = first
        out["path_info"]["msmce"] = info
    for name in estimators:
        if name == "perfect":
            out["nmse"][name] = 0.0
        else:
            out["nmse"][name] = nmse(out["estimates"][name].h_hat, h)

    if cfg.ber:
        data_bits = bits[frame.data_mask]
        for name in estimators:
            pilot_resp = None
            eff_var = nv
            if name == "perfect":
                terms = true_coefficients(ch, grid)
                pilot_resp = dd_oracle(beam_to_space(pilot_beams(frame)), ch, grid)
            else:
                pi = out["phi_info"] if name == "msmce" else None
                terms = estimated_coefficients(out["estimates"][name], layout, grid,
                                               pi if pi is not None and len(pi) else None)
                # estimation error acts as extra noise; the pilot-fit residual measures both
                eff_var = max(nv, out["estimates"][name].residual_norm ** 2 / len(y))
            det = mmse_detect(y_dd, terms, frame, eff_var, data_bits, pilot_response=pilot_resp)
            if det["failed"]:
                raise RuntimeError(f"MMSE detection failed for {name}")
            out["ber"][name] = det["ber"]
    return out


def run_sweep(cfg: ExperimentConfig, progress=None) -> list:
    """Run every sweep value for ``cfg.trials`` trials and aggregate.

    A trial that raises is logged and counted; more than
    ``max_failure_rate`` failed trials at any sweep value aborts the run
    with :class:`SweepFailedError`.
    """
    rows = []
    for value in cfg.values():
        sub = cfg.at(value)
        est = sub.estimator
        t0 = time.perf_counter()
        nmses, bers, zetas = [], [], []
        failed = 0
        prior = None
        for trial in range(cfg.trials):
            try:
                res = run_trial(sub, trial, estimators=(est,), prior=prior if cfg.carry_path_info else None)
            except Exception as exc:  # noqa: BLE001 -- counted and reported below
                failed += 1
                log.warning("trial %d at %s=%r failed: %s", trial, cfg.sweep, value, exc)
                continue
            nmses.append(res["nmse"][est])
            zetas.append(res["zeta"])
            if sub.ber:
                bers.append(res["ber"][est])
            if est in res["path_info"]:
                prior = res["path_info"][est]
            if progress is not None:
                progress(value, trial)
        if failed > cfg.max_failure_rate * cfg.trials:
            raise SweepFailedError(f"{failed}/{cfg.trials} trials failed at {cfg.sweep}={value!r}")
        rows.append(
            ResultRow(
                sweep_value=value,
                nmse_mean=float(np.mean(nmses)) if nmses else float("nan"),
                nmse_std=float(np.std(nmses)) if nmses else float("nan"),
                ber_mean=float(np.mean(bers)) if bers else float("nan"),
                zeta_mean=float(np.mean(zetas)) if zetas else float("nan"),
                trials=len(nmses),
                failed=failed,
                wall_time=time.perf_counter() - t0 if cfg.record_time else None,
            )
        )
    return rows


def rows_to_csv(rows) -> str:
    """CSV text with one header row named after :class:`ResultRow` fields."""
    buf = io.StringIO()
    names = [f.name for f in dataclasses.fields(ResultRow)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in rows:
        vals = []
        for name in names:
            v = getattr(row, name)
            if v is None:
                vals.append("")
            elif isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        w.writerow(vals)
    return buf.getvalue()


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
