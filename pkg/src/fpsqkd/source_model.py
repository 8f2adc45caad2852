"""Faint-pulse transmitter model: photon budget, AM/PM tables, pulse trains."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import constants

from .errors import ConfigError, DomainError
from .sidechannel import Waveform, gaussian_pulse

TWO_PI = 2.0 * math.pi

# (label, drive_mV, attenuation_dB)
DEFAULT_AM_LEVELS: tuple[tuple[str, float, float], ...] = (
    ("High", 460.0, 0.0),
    ("Medium", 745.0, 4.65),
    ("Low", 920.0, 14.76),
)
# (label, drive_V, gamma_rad): nominal relative phase with the measured drive
DEFAULT_PM_STATES: tuple[tuple[str, float, float], ...] = (
    ("P45", 0.0, 0.0),
    ("M45", 1.56, math.pi),
    ("RHC", 0.81, math.pi / 2),
    ("LHC", -0.76, -math.pi / 2),
)

POLARIZATION_LABELS = ("P45", "M45", "RHC", "LHC", "custom")
_LABEL_PHASES = {"P45": 0.0, "M45": math.pi, "RHC": math.pi / 2, "LHC": -math.pi / 2}


@dataclass(frozen=True)
class SourceConfig:
    """Transmitter calibration.  SI units throughout."""

    rep_rate: float = 1e8
    pulse_energy: float = 1.4e-12
    wavelength: float = 850e-9
    pulse_fwhm: float = 400e-12
    bias_current: float = 24e-3
    threshold_current: float = 36e-3
    mirror_reflectivity: float = 0.30
    cavity_length: float = 300e-6
    refractive_index: float = 3.6
    voa_attenuation: float = 0.0
    am_levels: tuple[tuple[str, float, float], ...] = DEFAULT_AM_LEVELS
    pm_states: tuple[tuple[str, float, float], ...] = DEFAULT_PM_STATES
    pm_v_pi: float = 1.56
    round_trip_loss_dB: float = 1.0
    # round-trip time quoted for the laser cavity, kept beside the formula value
    stated_rtt: float = 20e-12
    ld_dc_resistance: float = 3.0
    rf_current: float = 50e-3
    rf_load: float = 50.0
    rf_pulse_width: float = 1e-9

    def __post_init__(self) -> None:
        object.__setattr__(self, "am_levels", tuple(tuple(x) for x in self.am_levels))
        object.__setattr__(self, "pm_states", tuple(tuple(x) for x in self.pm_states))
        positive = (
            "rep_rate", "pulse_energy", "wavelength", "pulse_fwhm", "threshold_current",
            "cavity_length", "refractive_index", "pm_v_pi", "stated_rtt",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("bias_current", "voa_attenuation", "round_trip_loss_dB",
                     "ld_dc_resistance", "rf_current", "rf_load", "rf_pulse_width"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not 0 < self.mirror_reflectivity < 1:
            raise ConfigError("mirror_reflectivity must lie in (0, 1)")
        if not self.bias_current < self.threshold_current:
            raise ConfigError("bias_current must be below threshold_current")
        if not self.am_levels:
            raise ConfigError("at least one AM level is required")
        if any(a < 0 for _, _, a in self.am_levels):
            raise ConfigError("AM attenuations must be >= 0 dB")
        refs = [lab for lab, _, a in self.am_levels if a == 0]
        if len(refs) != 1:
            raise ConfigError(f"exactly one AM level must be the 0 dB reference, found {len(refs)}")
        for table, what in ((self.am_levels, "AM level"), (self.pm_states, "PM state")):
            labels = [row[0] for row in table]
            if len(set(labels)) != len(labels):
                raise ConfigError(f"duplicate {what} labels: {labels}")
        if not self.pm_states:
            raise ConfigError("at least one PM state is required")

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate

    def am_attenuation(self, label: str) -> float:
        for lab, _, att in self.am_levels:
            if lab == label:
                return att
        raise ConfigError(f"unknown AM level {label!r}; known: {[r[0] for r in self.am_levels]}")

    def pm_gamma(self, label: str) -> float:
        for lab, _, gamma in self.pm_states:
            if lab == label:
                return gamma
        raise ConfigError(f"unknown PM state {label!r}; known: {[r[0] for r in self.pm_states]}")


@dataclass(frozen=True, eq=False)
class PolarizationState:
    jones: np.ndarray
    label: str = "custom"

    def __post_init__(self) -> None:
        j = np.asarray(self.jones, dtype=complex).reshape(2)
        norm = float(np.sum(np.abs(j) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise DomainError(f"Jones vector must have unit norm, got {norm!r}")
        if self.label not in POLARIZATION_LABELS:
            raise DomainError(f"unknown polarization label {self.label!r}")
        object.__setattr__(self, "jones", j)

    @property
    def stokes(self) -> np.ndarray:
        """Normalized (S1, S2, S3); S3 > 0 for the +pi/2 (RHC) state."""
        ex, ey = self.jones
        cross = np.conj(ex) * ey
        return np.array([abs(ex) ** 2 - abs(ey) ** 2, 2 * cross.real, 2 * cross.imag])

    def same_as(self, other: PolarizationState, tol: float = 1e-9) -> bool:
        """Equality up to a global phase."""
        return abs(abs(np.vdot(self.jones, other.jones)) - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class PulseSpec:
    index: int
    amplitude_scale: float
    intensity_transmission: float
    global_phase: float
    am_phase: float
    pm_relative_phase: float
    shape: Waveform
    period: float
    level: str = ""
    pol: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.intensity_transmission <= 1.0:
            raise DomainError("intensity_transmission must lie in [0, 1]")


class CoherenceSuppression(NamedTuple):
    rtt_s: float
    passes_per_period: int
    suppression_dB_lower_bound: float


class PowerBudget(NamedTuple):
    ld_dc_mW: float
    ld_rf_mW: float


def photon_energy(wavelength: float) -> float:
    return constants.h * constants.c / wavelength


def photons_per_pulse(cfg: SourceConfig) -> float:
    return photons_from_energy(cfg.pulse_energy, cfg.wavelength)


def photons_from_energy(energy: float, wavelength: float) -> float:
    if not (energy > 0 and wavelength > 0):
        raise DomainError("pulse energy and wavelength must be positive")
    return energy / photon_energy(wavelength)


def voa_for_target_mu(cfg: SourceConfig, target_mu: float) -> float:
    """Attenuation (dB) bringing the source output down to ``target_mu``."""
    n = photons_per_pulse(cfg)
    if not target_mu > 0:
        raise DomainError("target_mu must be positive")
    if target_mu > n:
        raise DomainError(f"target_mu={target_mu!r} exceeds source output {n:.4g} photons/pulse")
    return 10.0 * math.log10(n / target_mu)


def mu_for_level(signal_mu: float, attenuation_dB: float) -> float:
    if attenuation_dB < 0:
        raise DomainError("attenuation must be >= 0 dB")
    return signal_mu * 10.0 ** (-attenuation_dB / 10.0)


def _wrap(phase: float) -> float:
    """Reduce to (-pi, pi]."""
    w = math.remainder(phase, TWO_PI)
    return math.pi if w == -math.pi else w


def pm_voltage_to_state(drive_V: float, v_pi: float, tol: float = 0.1) -> PolarizationState:
    """Polarization after the phase modulator, gamma = pi * V / V_pi.

    The label is the nearest of the four BB84 states when gamma lies within
    ``tol`` radians of it, else ``custom``.
    """
    if not v_pi > 0:
        raise DomainError("v_pi must be positive")
    gamma = math.pi * drive_V / v_pi
    jones = np.array([1.0, np.exp(1j * gamma)]) / math.sqrt(2.0)
    label = "custom"
    for name, target in _LABEL_PHASES.items():
        if abs(_wrap(gamma - target)) <= tol:
            label = name
            break
    return PolarizationState(jones, label)


def state_for_gamma(gamma: float, label: str = "custom") -> PolarizationState:
    return PolarizationState(np.array([1.0, np.exp(1j * gamma)]) / math.sqrt(2.0), label)


def default_pulse_shape(cfg: SourceConfig, dt: float | None = None) -> Waveform:
    return gaussian_pulse(cfg.pulse_fwhm, dt=dt)


def generate_pulse_train(
    cfg: SourceConfig,
    n: int,
    protocol_choices: Sequence[tuple[str, str]],
    rng_seed: int,
    shape: Waveform | None = None,
    random_phase: bool = True,
) -> list[PulseSpec]:
    """Build ``n`` pulses following the source field model.

    Every pulse gets an independent phase uniform on [0, 2pi) (all zero when
    ``random_phase`` is False, a coherent control case) and the same shape
    object.  Amplitudes are in sqrt(photons) after the VOA.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if len(protocol_choices) != n:
        raise DomainError(f"need {n} protocol choices, got {len(protocol_choices)}")
    if shape is None:
        shape = default_pulse_shape(cfg)
    rng = np.random.default_rng(rng_seed)
    phases = rng.uniform(0.0, TWO_PI, size=n) if random_phase else np.zeros(n)
    amplitude = math.sqrt(photons_per_pulse(cfg) * 10.0 ** (-cfg.voa_attenuation / 10.0))
    # resolve each distinct label once
    atten = {lab: cfg.am_attenuation(lab) for lab in {c[0] for c in protocol_choices}}
    gammas = {lab: cfg.pm_gamma(lab) for lab in {c[1] for c in protocol_choices}}
    train = []
    for i, (level, pol) in enumerate(protocol_choices):
        train.append(
            PulseSpec(
                index=i,
                amplitude_scale=amplitude,
                intensity_transmission=10.0 ** (-atten[level] / 10.0),
                global_phase=float(phases[i]) % TWO_PI,
                am_phase=0.0,
                pm_relative_phase=gammas[pol] % TWO_PI,
                shape=shape,
                period=cfg.period,
                level=level,
                pol=pol,
            )
        )
    return train


def random_choices(cfg: SourceConfig, n: int, seed: int) -> list[tuple[str, str]]:
    """Uniformly random (level, polarization) labels from the config tables."""
    rng = np.random.default_rng([seed, 1])
    levels = [r[0] for r in cfg.am_levels]
    pols = [r[0] for r in cfg.pm_states]
    li = rng.integers(0, len(levels), size=n)
    pi = rng.integers(0, len(pols), size=n)
    return [(levels[a], pols[b]) for a, b in zip(li, pi)]


def coherence_suppression(cfg: SourceConfig, rtt: float | None = None) -> CoherenceSuppression:
    """Cavity round-trip time, round trips per period, and a loss lower bound.

    ``rtt`` overrides the 2 L n / c0 estimate (e.g. with a quoted value).
    """
    if rtt is None:
        rtt = 2.0 * cfg.cavity_length * cfg.refractive_index / constants.c
    if not rtt > 0:
        raise DomainError("rtt must be positive")
    # guard against 10 ns / 20 ps landing at 499.999...
    passes = int(math.floor(cfg.period / rtt + 1e-9))
    return CoherenceSuppression(rtt, passes, passes * cfg.round_trip_loss_dB)


def power_budget(cfg: SourceConfig) -> PowerBudget:
    """Laser diode DC bias and RF drive dissipation in mW."""
    ld_dc = cfg.bias_current**2 * cfg.ld_dc_resistance
    duty = cfg.rf_pulse_width * cfg.rep_rate
    if duty > 1:
        raise DomainError(f"RF duty cycle {duty:g} exceeds 1")
    ld_rf = cfg.rf_current**2 * cfg.rf_load * duty
    return PowerBudget(ld_dc * 1e3, ld_rf * 1e3)
