"""Command-line front end: ``fpsqkd {analyze,simulate,sidechannel,source}``.

Settings are resolved as built-in defaults < ``--config`` file < ``--set
key=value`` < dedicated flags such as ``--distance`` or ``--pulses``.
Exit codes: 0 success, 2 input error, 3 numerical/estimator failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import math
import sys
from pathlib import Path
from typing import Sequence, TextIO

from . import decoy_rates as dr
from . import montecarlo as mc
from . import sidechannel as sc
from . import source_model as sm
from .config import RunConfig, apply_overrides, dump_config, known_keys, load_config
from .errors import ConfigError, DomainError, EstimatorError, FormatError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    """Bad command-line values that argparse itself cannot catch."""


def _writer(fh: TextIO) -> csv.writer:
    return csv.writer(fh, lineterminator="\n")


@contextlib.contextmanager
def _open_out(path: str | None, default: TextIO):
    if path is None:
        yield default
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _fmt(x: float) -> str:
    return repr(float(x))


def resolve_config(args: argparse.Namespace) -> RunConfig:
    rc = load_config(args.config)
    if args.set:
        rc = apply_overrides(rc, args.set)
    return rc


def parse_sweep(text: str) -> list[float]:
    """``start:stop:step`` inclusive of stop (within half a step)."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--sweep expects start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError("--sweep needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 0.5)) + 1
    return [start + k * step for k in range(n)]


# --------------------------------------------------------------------------
# analyze


def cmd_analyze(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    rc = resolve_config(args)
    if args.sweep is not None:
        distances = parse_sweep(args.sweep)
    elif args.distance is not None:
        distances = [args.distance]
    else:
        distances = [rc.link.distance]
    rows = dr.distance_sweep(rc.decoy, rc.link, distances, mode=args.mode)
    with _open_out(args.out, out) as fh:
        w = _writer(fh)
        w.writerow(dr.SWEEP_CSV_HEADER)
        for row in rows:
            w.writerow(row.csv_row())
    for row in rows:
        if math.isclose(row.distance, 20.0):
            err.write("# comparison with the published 20 km simulation results\n")
            err.write(dr.format_comparison(dr.compare_published(row)) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def format_mc_report(r: mc.MCResult, rc: RunConfig, rate: dr.KeyRateResult | None,
                     estimator_error: str | None) -> str:
    lines = [f"pulses: {r.n_pulses}  seed: {r.seed}"]
    lines.append(f"{'class':<6}{'sent':>12}{'detected':>12}{'sifted':>12}{'sift_err':>12}")
    for k, name in enumerate(mc.CLASS_NAMES):
        lines.append(
            f"{name:<6}{r.sent[k]:>12d}{r.detected[k]:>12d}{r.sifted[k]:>12d}{r.sifted_errors[k]:>12d}"
        )
    lines.append(f"sifted key length: {r.sifted_key_length}")
    lines.append(f"{'quantity':<16}{'empirical':>24}{'analytic':>24}{'z':>10}")
    for c in mc.compare_with_model(r, rc.link, rc.decoy):
        lines.append(f"{c.quantity:<16}{c.empirical:>24.15g}{c.analytic:>24.15g}{c.z:>+10.3f}")
    if rate is not None:
        lines.append(f"raw sifted rate [b/s]: {rate.raw_sifted_rate:.15g}")
        lines.append(f"secure rate (decoy bound) [b/s]: {rate.secure_rate:.15g}"
                     + ("  (clamped at 0)" if rate.clamped else ""))
    if estimator_error is not None:
        lines.append(f"secure rate: estimator failure: {estimator_error}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    rc = resolve_config(args)
    if args.pulses < 1:
        raise UsageError("--pulses must be >= 1")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    cfg = mc.MCConfig(args.pulses, args.seed, rc.link, rc.decoy, rc.source)
    r = mc.run(cfg, workers=args.workers)
    rate, failure = None, None
    try:
        rate = mc.estimate_key_rate(r, rc.decoy)
    except EstimatorError as exc:
        failure = str(exc)
    out.write(format_mc_report(r, rc, rate, failure))
    if args.out is not None:
        with open(args.out, "w", newline="") as fh:
            w = _writer(fh)
            w.writerow(["quantity", "empirical", "analytic", "stderr", "z"])
            for c in mc.compare_with_model(r, rc.link, rc.decoy):
                w.writerow([c.quantity, _fmt(c.empirical), _fmt(c.analytic), _fmt(c.stderr), _fmt(c.z)])
    return EXIT_NUMERIC if failure is not None else EXIT_OK


# --------------------------------------------------------------------------
# sidechannel


def cmd_sidechannel(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    paths = args.waveforms
    if len(paths) < 2:
        raise UsageError("sidechannel needs at least two waveform files")
    labels = args.labels if args.labels else [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise UsageError(f"{len(labels)} labels given for {len(paths)} waveform files")
    waves = [sc.normalize(sc.read_waveform_csv(p)) for p in paths]
    for lab, wv in zip(labels, waves):
        if wv.intensity_only:
            err.write(f"# {lab}: intensity-only trace, chirp unobservable\n")
    with _open_out(args.out, out) as fh:
        w = _writer(fh)
        w.writerow(sc.OVERLAP_CSV_HEADER)
        for i in range(len(waves)):
            for j in range(i + 1, len(waves)):
                w.writerow(sc.overlap(waves[i], waves[j], labels[i], labels[j]).csv_row())
    return EXIT_OK


# --------------------------------------------------------------------------
# source


def parse_protocol(text: str, cfg: sm.SourceConfig, n: int, seed: int) -> list[tuple[str, str]]:
    if text == "random":
        return sm.random_choices(cfg, n, seed)
    if text.startswith("fixed:"):
        level, _, pol = text[len("fixed:"):].partition("/")
        if not pol:
            raise UsageError(f"--protocol fixed expects fixed:LEVEL/POL, got {text!r}")
        cfg.am_attenuation(level)
        cfg.pm_gamma(pol)
        return [(level, pol)] * n
    raise UsageError(f"--protocol must be 'random' or 'fixed:LEVEL/POL', got {text!r}")


def format_source_report(rc: RunConfig) -> str:
    cfg = rc.source
    n_ph = sm.photons_per_pulse(cfg)
    formula = sm.coherence_suppression(cfg)
    stated = sm.coherence_suppression(cfg, rtt=cfg.stated_rtt)
    budget = sm.power_budget(cfg)
    lines = [
        f"photons per pulse: {n_ph:.6g}",
        f"VOA attenuation for mu = {rc.decoy.mu:g}: {sm.voa_for_target_mu(cfg, rc.decoy.mu):.4f} dB",
        f"cavity round-trip time (2 L n / c0): {formula.rtt_s * 1e12:.4f} ps",
        f"  round trips per period: {formula.passes_per_period}, "
        f"suppression >= {formula.suppression_dB_lower_bound:g} dB",
        f"cavity round-trip time (quoted): {cfg.stated_rtt * 1e12:.4f} ps "
        f"[DISCREPANCY: differs from the formula value by a factor "
        f"{cfg.stated_rtt / formula.rtt_s:.3f}]",
        f"  round trips per period: {stated.passes_per_period}, "
        f"suppression >= {stated.suppression_dB_lower_bound:g} dB",
        f"LD DC bias dissipation: {budget.ld_dc_mW:.4f} mW",
        f"LD RF drive dissipation: {budget.ld_rf_mW:.4f} mW",
    ]
    for label, mv, att in cfg.am_levels:
        lines.append(f"AM level {label}: {mv:g} mV, {att:g} dB -> mu = {sm.mu_for_level(rc.decoy.mu, att):.6g}")
    for label, volts, gamma in cfg.pm_states:
        st = sm.pm_voltage_to_state(volts, cfg.pm_v_pi)
        lines.append(
            f"PM state {label}: {volts:g} V, nominal gamma {gamma:.6g} rad, "
            f"gamma at V/V_pi {math.pi * volts / cfg.pm_v_pi:.6g} rad ({st.label})"
        )
    return "\n".join("# " + ln for ln in lines) + "\n"


def cmd_source(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    rc = resolve_config(args)
    if args.pulses < 1:
        raise UsageError("--pulses must be >= 1")
    cfg = rc.source
    choices = parse_protocol(args.protocol, cfg, args.pulses, args.seed)
    train = sm.generate_pulse_train(cfg, args.pulses, choices, args.seed)
    err.write(format_source_report(rc))
    with _open_out(args.out, out) as fh:
        w = _writer(fh)
        w.writerow(["i", "level", "atten_dB", "pol_label", "gamma_rad", "phi_rad"])
        for p in train:
            w.writerow([p.index, p.level, _fmt(cfg.am_attenuation(p.level)), p.pol,
                        _fmt(p.pm_relative_phase), _fmt(p.global_phase)])
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable); beats the file")
    common.add_argument("--dump-config", action="store_true",
                        help="print the merged configuration and exit")

    p = argparse.ArgumentParser(
        prog="fpsqkd",
        description=__doc__.split("\n\n")[0],
        epilog="Precedence: defaults < --config < --set < subcommand flags. "
               "Known keys: " + ", ".join(known_keys()),
    )
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="analytic decoy-state rates (CSV)")
    g = a.add_mutually_exclusive_group()
    g.add_argument("--distance", type=float, help="single distance in km")
    g.add_argument("--sweep", help="start:stop:step in km, stop inclusive")
    a.add_argument("--mode", choices=("exact", "decoy"), default="exact",
                   help="single-photon terms from the model or from the decoy bound")
    a.add_argument("--out", help="write CSV here instead of stdout")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", parents=[common], help="pulse-level Monte Carlo")
    s.add_argument("--pulses", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1, help="processes; results do not depend on it")
    s.add_argument("--distance", type=float, help="override distance_km")
    s.add_argument("--out", help="also write the empirical/analytic comparison CSV here")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sidechannel", help="pairwise pulse-mode overlaps (CSV)")
    w.add_argument("waveforms", nargs="+", help="CSV files: time_s,re,im or time_s,intensity")
    w.add_argument("--labels", nargs="+")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sidechannel, config=None, set=None, dump_config=False)

    o = sub.add_parser("source", parents=[common], help="pulse train CSV and budget report")
    o.add_argument("--pulses", type=int, default=16)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--protocol", default="random", help="'random' or 'fixed:LEVEL/POL'")
    o.add_argument("--out")
    o.set_defaults(func=cmd_source)
    return p


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "distance", None) is not None and args.command == "simulate":
            args.set = [*(args.set or []), f"distance_km={args.distance!r}"]
        if args.dump_config:
            out.write(dump_config(resolve_config(args)))
            return EXIT_OK
        return args.func(args, out, err)
    except (ConfigError, FormatError, DomainError, UsageError) as exc:
        err.write(f"fpsqkd {args.command}: error: {exc}\n")
        return EXIT_INPUT
    except EstimatorError as exc:
        err.write(f"fpsqkd {args.command}: estimator failure: {exc}\n")
        return EXIT_NUMERIC


def run_captured(argv: Sequence[str]) -> tuple[int, str, str]:
    """Run the CLI in-process, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stderr(err):
        code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


if __name__ == "__main__":
    sys.exit(main())
