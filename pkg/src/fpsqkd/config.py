"""Shared ``key = value`` configuration file for all subcommands.

Keys carry their unit as a suffix (``pulse_energy_pJ = 1.4``).  AM and PM
tables are repeated ``am_level = label,drive_mV,atten_dB`` and
``pm_state = label,drive_V,gamma_rad`` lines; the first such line in a file
replaces the built-in table.
"""
from __future__ import annotations

import math
from decimal import Decimal, InvalidOperation
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .decoy_rates import DecoyParams
from .errors import ConfigError
from .link_channel import LinkParams
from .source_model import SourceConfig

# key -> (section, field, exponent); SI value = file value * 10**-exponent
SCALAR_KEYS: dict[str, tuple[str, str, int]] = {
    "rep_rate_Hz": ("shared", "rep_rate", 0),
    "pulse_energy_pJ": ("source", "pulse_energy", 12),
    "wavelength_nm": ("source", "wavelength", 9),
    "pulse_fwhm_ps": ("source", "pulse_fwhm", 12),
    "bias_current_mA": ("source", "bias_current", 3),
    "threshold_current_mA": ("source", "threshold_current", 3),
    "mirror_reflectivity": ("source", "mirror_reflectivity", 0),
    "cavity_length_um": ("source", "cavity_length", 6),
    "refractive_index": ("source", "refractive_index", 0),
    "voa_attenuation_dB": ("source", "voa_attenuation", 0),
    "pm_v_pi_V": ("source", "pm_v_pi", 0),
    "round_trip_loss_dB": ("source", "round_trip_loss_dB", 0),
    "stated_rtt_ps": ("source", "stated_rtt", 12),
    "ld_dc_resistance_ohm": ("source", "ld_dc_resistance", 0),
    "rf_current_mA": ("source", "rf_current", 3),
    "rf_load_ohm": ("source", "rf_load", 0),
    "rf_pulse_width_ns": ("source", "rf_pulse_width", 9),
    "distance_km": ("link", "distance", 0),
    "atmosphere_loss_dB_per_km": ("link", "atmosphere_loss", 0),
    "optics_loss_dB": ("link", "optics_loss", 0),
    "detector_efficiency": ("link", "detector_efficiency", 0),
    "background_yield": ("link", "background_yield", 0),
    "misalignment_error": ("link", "misalignment", 0),
    "mu": ("decoy", "mu", 0),
    "nu1": ("decoy", "nu1", 0),
    "nu2": ("decoy", "nu2", 0),
    "prob_mu": ("decoy", "prob_mu", 0),
    "prob_nu1": ("decoy", "prob_nu1", 0),
    "prob_nu2": ("decoy", "prob_nu2", 0),
    "q": ("decoy", "q", 0),
    "f_ec": ("decoy", "f_ec", 0),
    "duration_s": ("decoy", "duration", 0),
}
TABLE_KEYS = {"am_level": "am_levels", "pm_state": "pm_states"}


@dataclass(frozen=True)
class RunConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    link: LinkParams = field(default_factory=LinkParams)
    decoy: DecoyParams = field(default_factory=DecoyParams)


def _parse_float(text: str, key: str, lineno: int | None, path: str | None) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {text!r}", lineno, path) from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: value must be finite", lineno, path)
    return v


def _parse_row(text: str, key: str, lineno: int | None, path: str | None) -> tuple[str, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3 or not parts[0]:
        raise ConfigError(f"{key}: expected 'label,number,number', got {text!r}", lineno, path)
    return (parts[0], _parse_float(parts[1], key, lineno, path), _parse_float(parts[2], key, lineno, path))


def parse_lines(
    lines: Iterable[str], path: str | None = None, base: RunConfig | None = None
) -> RunConfig:
    """Apply ``key = value`` lines on top of ``base`` (defaults if None)."""
    values: dict[str, dict[str, object]] = {"source": {}, "link": {}, "decoy": {}}
    tables: dict[str, list] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, text = (s.strip() for s in line.split("=", 1))
        if key in TABLE_KEYS:
            tables.setdefault(TABLE_KEYS[key], []).append(_parse_row(text, key, lineno, path))
            continue
        if key not in SCALAR_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, path)
        seen[key] = lineno
        section, name, exponent = SCALAR_KEYS[key]
        v = _scale(_parse_float(text, key, lineno, path), text, -exponent)
        if section == "shared":
            values["source"][name] = v
            values["decoy"][name] = v
        else:
            values[section][name] = v
    values["source"].update({k: tuple(v) for k, v in tables.items()})

    base = base or RunConfig()
    try:
        return RunConfig(
            source=replace(base.source, **values["source"]),
            link=replace(base.link, **values["link"]),
            decoy=replace(base.decoy, **values["decoy"]),
        )
    except ConfigError as exc:
        raise ConfigError(str(exc), None, path) from None


def load_config(path: str | Path | None, base: RunConfig | None = None) -> RunConfig:
    if path is None:
        return base or RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", None, str(p)) from None
    return parse_lines(text.splitlines(), str(p), base)


def apply_overrides(rc: RunConfig, assignments: Iterable[str]) -> RunConfig:
    """``key=value`` strings from the command line, same syntax as the file."""
    return parse_lines(list(assignments), "--set", rc)


def _scale(v: float, text: str, exponent: int) -> float:
    """Shift a decimal literal by a power of ten with a single rounding."""
    if exponent == 0:
        return v
    try:
        return float(Decimal(text).scaleb(exponent))
    except InvalidOperation:
        return v * 10.0**exponent


def _encode(v: float, exponent: int) -> str:
    if exponent == 0:
        return repr(v)
    d = Decimal(repr(v)).scaleb(exponent).normalize()
    return format(d, "f") if -12 < d.adjusted() < 16 else str(d)


def dump_config(rc: RunConfig) -> str:
    """Serialize every setting; ``parse_lines(dump_config(rc))`` reproduces ``rc``."""
    sections = {"source": rc.source, "link": rc.link, "decoy": rc.decoy, "shared": rc.source}
    if rc.source.rep_rate != rc.decoy.rep_rate:
        raise ConfigError("source and decoy repetition rates differ; cannot share rep_rate_Hz")
    out = ["# fpsqkd configuration"]
    for key, (section, name, exponent) in SCALAR_KEYS.items():
        out.append(f"{key} = {_encode(getattr(sections[section], name), exponent)}")
    for label, mv, db in rc.source.am_levels:
        out.append(f"am_level = {label},{mv!r},{db!r}")
    for label, volts, gamma in rc.source.pm_states:
        out.append(f"pm_state = {label},{volts!r},{gamma!r}")
    return "\n".join(out) + "\n"


def known_keys() -> list[str]:
    return [*SCALAR_KEYS, *TABLE_KEYS]


__all__ = [
    "RunConfig", "load_config", "parse_lines", "apply_overrides", "dump_config", "known_keys",
]
