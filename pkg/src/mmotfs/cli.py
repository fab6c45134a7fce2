"""Command line interface: ``mmotfs pilots|simulate|sweep|verify``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np
import yaml

from .channel import save_channel
from .errors import ConfigurationError
from .estimator import save_path_info
from .harness import ExperimentConfig, pilot_overhead_ratio, rows_to_csv, run_sweep, run_trial
from .pilots import design_pilots, random_pilots, save_pilots
from .sensing import coherence_profile, welch_bound

log = logging.getLogger("mmotfs")

_LIST_FIELDS = {"snr_db": float, "sweep_values": str}
_INT_FIELDS = {"M", "N", "M_CP", "N_t", "M_p", "N_p", "l_p", "k_p", "N_g", "M_g", "paths",
               "subpaths", "max_delay_tap", "trials", "seed"}
_BOOL_FIELDS = {"ber", "carry_path_info", "record_time", "fixed_channel"}


def _coerce(value):
    """Sweep values from the command line: numbers when they parse as numbers."""
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _add_config_args(p):
    p.add_argument("--config", help="YAML or JSON file with ExperimentConfig keys")
    for f in dataclasses.fields(ExperimentConfig):
        name = f"--{f.name}"
        if f.name in _BOOL_FIELDS:
            p.add_argument(name, action=argparse.BooleanOptionalAction, default=None)
        elif f.name in _LIST_FIELDS:
            p.add_argument(name, nargs="+", type=_LIST_FIELDS[f.name], default=None)
        elif f.name in _INT_FIELDS:
            p.add_argument(name, type=int, default=None)
        elif isinstance(f.default, float):
            p.add_argument(name, type=float, default=None)
        else:
            p.add_argument(name, default=None)


def load_config(args) -> ExperimentConfig:
    """Config file values, overridden by any flag given on the command line."""
    values = {}
    if args.config:
        with open(args.config) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{args.config} must hold a mapping")
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = [_coerce(x) for x in v] if f.name == "sweep_values" else v
    return ExperimentConfig(**values)


def _cmd_pilots(args):
    cfg = load_config(args)
    grid = cfg.grid()
    layout = cfg.layout(grid)
    if cfg.pilot_type == "random":
        P = random_pilots(layout, cfg.N_t, cfg.seed)
    else:
        P = design_pilots(layout, cfg.N_t)
    prof = coherence_profile(P)
    n_rows, n_cols = P.shape
    print(f"pilot matrix {n_rows} x {n_cols} ({cfg.pilot_type}), overhead {pilot_overhead_ratio(layout, grid):.4f}")
    print(f"layout k_p={layout.k_p} l_p={layout.l_p} N_p={layout.N_p} M_p={layout.M_p} "
          f"N_g={layout.N_g} M_g={layout.M_g}")
    print(f"max coherence {prof['max_offdiag']:.6f}")
    print(f"1/sqrt(M_p N_p) {1 / np.sqrt(n_rows):.6f}")
    sens_cols = layout.n_cols(cfg.N_t)
    print(f"Welch bound ({n_rows}, {sens_cols}) {welch_bound(n_rows, sens_cols):.6f}")
    vals = np.round(prof["values"], 10)
    uniq, counts = np.unique(vals, return_counts=True)
    if len(uniq) <= 10:
        for u, c in zip(uniq, counts):
            print(f"  |<c_i, c_j>| = {u:.10f}: {c} pairs")
    if args.out:
        save_pilots(P, args.out)
        log.info("pilot matrix written to %s", args.out)
    return 0


def _cmd_simulate(args):
    cfg = load_config(args)
    res = run_trial(cfg, args.trial, estimators=("msmce", "ismce") + (("perfect",) if cfg.ber else ()))
    ch = res["channel"]
    print(f"SNR {cfg.snr_db[0]} dB, trial {args.trial}, seed {cfg.seed}")
    print(f"zeta (l = l_p + M_p - 1) {res['zeta']:.6e}")
    for i, p in enumerate(ch.paths):
        kap = res["grid"].doppler_taps(p.dopplers_hz)
        print(f"path {i}: tap {p.delay_tap}, Doppler taps {kap.min():+.3f} .. {kap.max():+.3f}")
    for name in ("ismce", "msmce"):
        info = res["path_info"][name]
        pairs = ", ".join(f"({d}, {v:+.3f})" for d, v in zip(info.delays, info.dopplers))
        print(f"{name}: NMSE {res['nmse'][name]:.6e}, support {len(res['estimates'][name].support)}, "
              f"paths [{pairs}]")
        if cfg.ber:
            print(f"{name}: BER {res['ber'][name]:.6f}")
    if cfg.ber:
        print(f"perfect CSI: BER {res['ber']['perfect']:.6f}")
    if args.save_channel:
        save_channel(ch, args.save_channel)
    if args.save_path_info:
        save_path_info(res["path_info"]["msmce"], args.save_path_info)
    return 0


def _cmd_sweep(args):
    cfg = load_config(args)
    if args.seed is None:
        raise ConfigurationError("--seed is required for sweep")

    def progress(value, trial):
        if (trial + 1) % max(1, cfg.trials // 4) == 0:
            log.info("%s=%r: %d/%d trials", cfg.sweep, value, trial + 1, cfg.trials)

    rows = run_sweep(cfg, progress=progress)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        log.info("wrote %d rows to %s", len(rows), args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_verify(args):
    from .verify import run_checks

    results = run_checks(args.seed or 0)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmotfs", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pilots", help="build a pilot matrix and report its coherence")
    _add_config_args(p)
    p.add_argument("--out", help="write the pilot matrix as CSV (row, col, re, im)")
    p.set_defaults(func=_cmd_pilots)

    p = sub.add_parser("simulate", help="one end-to-end frame with diagnostics")
    _add_config_args(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--save-channel", help="write the channel realization as text")
    p.add_argument("--save-path-info", help="write the extracted path information as text")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    _add_config_args(p)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="run oracle-equivalence and invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
