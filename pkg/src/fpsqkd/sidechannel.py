"""Pulse-mode distinguishability: overlaps, spectra, PER floors and g1.

Pulse shapes are handled in normalized field units, so that a unit-energy
waveform satisfies ``trapezoid(|samples|**2, dx=dt) == 1``.  The photon/field
scaling constant cancels in every quantity computed here and is fixed to 1.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError, FormatError

if TYPE_CHECKING:
    from .source_model import PulseSpec, SourceConfig

# Largest common grid we are willing to build when resampling two waveforms.
MAX_RESAMPLED_POINTS = 1 << 21
# Relative tolerance for treating two grid steps or offsets as identical.
_GRID_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled complex envelope.

    Attributes:
        t0: abscissa of the first sample (s, or Hz for spectra).
        dt: sample spacing.
        samples: complex amplitudes.
        intensity_only: True when the samples were reconstructed from an
            intensity trace, so the phase is unknown (set to zero).
    """

    t0: float
    dt: float
    samples: np.ndarray
    intensity_only: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt!r}")
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1 or s.size < 2:
            raise FormatError("waveform needs a 1-D array of at least 2 samples")
        if not np.all(np.isfinite(s)):
            raise FormatError("waveform samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def energy(self) -> float:
        return float(trapezoid(np.abs(self.samples) ** 2, dx=self.dt))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def scaled(self, factor: complex) -> Waveform:
        return Waveform(self.t0, self.dt, self.samples * factor, self.intensity_only)

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """Linear interpolation of the envelope at arbitrary times, zero outside."""
        t = np.asarray(t, dtype=float)
        x = self.times
        re = np.interp(t, x, self.samples.real, left=0.0, right=0.0)
        im = np.interp(t, x, self.samples.imag, left=0.0, right=0.0)
        return re + 1j * im

    @classmethod
    def from_intensity(cls, t0: float, dt: float, intensity: np.ndarray) -> Waveform:
        """Zero-phase amplitude estimate sqrt(I) of a measured intensity trace."""
        intensity = np.asarray(intensity, dtype=float)
        # small negative readings are detector noise
        amp = np.sqrt(np.clip(intensity, 0.0, None))
        return cls(t0, dt, amp.astype(complex), intensity_only=True)


@dataclass(frozen=True)
class OverlapReport:
    label_a: str
    label_b: str
    s_lm: complex
    abs_s_sq: float
    temporal_rms_residual: float
    spectral_rms_residual: float
    chirp_unobservable: bool = False

    @property
    def abs_s(self) -> float:
        return abs(self.s_lm)

    def csv_row(self) -> list[str]:
        return [
            self.label_a,
            self.label_b,
            repr(self.abs_s),
            repr(self.abs_s_sq),
            repr(self.temporal_rms_residual),
            repr(self.spectral_rms_residual),
        ]


OVERLAP_CSV_HEADER = ["label_a", "label_b", "abs_s", "abs_s_sq", "temporal_rms", "spectral_rms"]


def gaussian_pulse(
    fwhm: float,
    dt: float | None = None,
    center: float = 0.0,
    span: float = 8.0,
    chirp: float = 0.0,
) -> Waveform:
    """Normalized Gaussian envelope with the given intensity FWHM.

    ``chirp`` adds a quadratic phase ``chirp * (t - center)**2`` (rad/s^2).
    The grid covers ``center +- span * fwhm``; ``dt`` defaults to fwhm/40.
    """
    if fwhm <= 0:
        raise DomainError("fwhm must be positive")
    if dt is None:
        dt = fwhm / 40.0
    sigma = fwhm / (2.0 * math.sqrt(math.log(2.0)))  # amplitude exp(-t^2/(2 sigma^2))
    n_half = int(math.ceil(span * fwhm / dt))
    u = dt * np.arange(-n_half, n_half + 1)
    amp = np.exp(-(u**2) / (2 * sigma**2) + 1j * chirp * u**2)
    return normalize(Waveform(center - n_half * dt, dt, amp))


def normalize(w: Waveform) -> Waveform:
    e = w.energy
    if not e > 0:
        raise DomainError("cannot normalize a zero-energy waveform")
    return w.scaled(1.0 / math.sqrt(e))


def _sinc_resample(w: Waveform, t: np.ndarray) -> np.ndarray:
    """Whittaker-Shannon interpolation of ``w`` at times ``t``."""
    u = (t[:, None] - w.times[None, :]) / w.dt
    return np.sinc(u) @ w.samples


def _sinc_resample_chunked(w: Waveform, t: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(t.size, dtype=complex)
    for k in range(0, t.size, chunk):
        out[k : k + chunk] = _sinc_resample(w, t[k : k + chunk])
    return out


def _is_multiple(x: float, step: float) -> bool:
    r = x / step
    return abs(r - round(r)) <= 1e-6


def align(a: Waveform, b: Waveform) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Put two waveforms on one uniform grid.

    Returns ``(xa, xb, t0, dt)``.  Identical steps with commensurate offsets
    are aligned by zero padding; anything else is band-limited resampled onto
    the finer of the two steps.
    """
    lo = min(a.t0, b.t0)
    hi = max(a.times[-1], b.times[-1])
    same_dt = math.isclose(a.dt, b.dt, rel_tol=_GRID_RTOL)
    if same_dt and _is_multiple(b.t0 - a.t0, a.dt):
        dt = a.dt
        n = int(round((hi - lo) / dt)) + 1
        if n > MAX_RESAMPLED_POINTS:
            raise FormatError(f"aligned grid would need {n} points")
        xa = np.zeros(n, dtype=complex)
        xb = np.zeros(n, dtype=complex)
        ia = int(round((a.t0 - lo) / dt))
        ib = int(round((b.t0 - lo) / dt))
        xa[ia : ia + a.samples.size] = a.samples
        xb[ib : ib + b.samples.size] = b.samples
        return xa, xb, lo, dt

    dt = min(a.dt, b.dt)
    n = int(math.ceil((hi - lo) / dt)) + 1
    if n > MAX_RESAMPLED_POINTS or n * max(a.samples.size, b.samples.size) > 1 << 32:
        raise FormatError(
            f"grids dt={a.dt:g}/{b.dt:g} spanning {hi - lo:g} cannot be resampled "
            f"({n} points)"
        )
    t = lo + dt * np.arange(n)
    xa = a.samples if _grid_matches(a, lo, dt, n) else _sinc_resample_chunked(a, t)
    xb = b.samples if _grid_matches(b, lo, dt, n) else _sinc_resample_chunked(b, t)
    return xa, xb, lo, dt


def _grid_matches(w: Waveform, t0: float, dt: float, n: int) -> bool:
    return (
        w.samples.size == n
        and math.isclose(w.dt, dt, rel_tol=_GRID_RTOL)
        and abs(w.t0 - t0) <= 1e-6 * dt
    )


def _rms_residual(pa: np.ndarray, pb: np.ndarray) -> float:
    scale = max(pa.max(), pb.max())
    if scale == 0:
        return 0.0
    return float(np.sqrt(np.mean((pa - pb) ** 2)) / scale)


def overlap(a: Waveform, b: Waveform, label_a: str = "a", label_b: str = "b") -> OverlapReport:
    """Mode overlap S = integral of conj(a) * b over a common grid.

    |S|^2 is the ratio of photon counts an eavesdropper registers in mode
    ``a`` for a pulse prepared in mode ``b`` versus one prepared in ``a``.
    Both inputs are expected to be normalized.
    """
    xa, xb, t0, dt = align(a, b)
    s = complex(trapezoid(np.conj(xa) * xb, dx=dt))
    temporal = _rms_residual(np.abs(xa) ** 2, np.abs(xb) ** 2)
    fa = spectrum(Waveform(t0, dt, xa))
    fb = spectrum(Waveform(t0, dt, xb))
    spectral = _rms_residual(fa.intensity, fb.intensity)
    return OverlapReport(
        label_a,
        label_b,
        s,
        abs(s) ** 2,
        temporal,
        spectral,
        chirp_unobservable=a.intensity_only or b.intensity_only,
    )


def _looks_intensity_only(w: Waveform) -> bool:
    s = w.samples
    return w.intensity_only or (np.all(s.imag == 0) and np.all(s.real >= 0))


@dataclass(frozen=True)
class ChirpSensitivity:
    value: float
    chirp_unobservable: bool
    intensity_mismatch: float


def chirp_sensitivity(a: Waveform, b: Waveform) -> ChirpSensitivity:
    """Distinguishability left over once intensity profiles agree.

    Returns ``1 - |S|``.  Real non-negative inputs carry no phase
    information, so chirp cannot be seen in them; that case is flagged.
    """
    xa, xb, _, _ = align(a, b)
    pa, pb = np.abs(xa) ** 2, np.abs(xb) ** 2
    mismatch = float(np.max(np.abs(pa - pb)) / max(pa.max(), pb.max()))
    unobservable = _looks_intensity_only(a) and _looks_intensity_only(b)
    s = overlap(a, b)
    return ChirpSensitivity(1.0 - abs(s.s_lm), unobservable, mismatch)


def spectrum(w: Waveform) -> Waveform:
    """Continuous Fourier transform X(f) = integral x(t) exp(-2j pi f t) dt.

    Sampled at f_k = k / (N dt), k = -N//2 .. N - N//2 - 1, returned as a
    Waveform over frequency (Hz).  The discrete transform is unitary under
    the dt / df weights, so energy is preserved.
    """
    n = w.samples.size
    df = 1.0 / (n * w.dt)
    k = np.arange(n) - n // 2
    f = k * df
    raw = np.fft.fftshift(np.fft.fft(w.samples))
    x = w.dt * raw * np.exp(-2j * np.pi * f * w.t0)
    return Waveform(float(f[0]), df, x, w.intensity_only)


def rect_energy(w: Waveform) -> float:
    """Energy by the rectangle rule, which makes Parseval exact for DFTs."""
    return float(np.sum(np.abs(w.samples) ** 2) * w.dt)


def spectral_rms_width(w: Waveform) -> float:
    """RMS width of |samples|^2 about its centroid, in abscissa units."""
    p = w.intensity
    x = w.times
    m = np.sum(p * x) / np.sum(p)
    return float(np.sqrt(np.sum(p * (x - m) ** 2) / np.sum(p)))


def coherence_length(w: Waveform) -> float:
    """c / (FWHM of the power spectrum) for a frequency-domain waveform (m)."""
    p = w.intensity
    half = p.max() / 2.0
    above = np.nonzero(p >= half)[0]
    width = (above[-1] - above[0] + 1) * w.dt
    return 299_792_458.0 / width


def per_to_qber_floor(per_dB: float) -> float:
    """Cross-polarized leakage fraction 1/(1 + 10^(PER/10))."""
    if per_dB < 0 or math.isnan(per_dB):
        raise DomainError(f"PER must be >= 0 dB, got {per_dB!r}")
    if math.isinf(per_dB):
        return 0.0
    return 1.0 / (1.0 + 10.0 ** (per_dB / 10.0))


@dataclass
class G1Estimate:
    value: complex
    n_realizations: int
    warnings: list[str] = field(default_factory=list)


MIN_G1_REALIZATIONS = 100


def _pulse_coefficients(train: Sequence[PulseSpec]) -> tuple[np.ndarray, np.ndarray]:
    amp = np.array(
        [
            p.amplitude_scale * math.sqrt(p.intensity_transmission) * np.exp(1j * (p.global_phase + p.am_phase))
            for p in train
        ]
    )
    pol = np.array([[1.0, np.exp(1j * p.pm_relative_phase)] for p in train]) / math.sqrt(2.0)
    return amp, pol


def estimate_g1(
    train: Sequence[PulseSpec],
    cfg: SourceConfig,
    tau: float,
    n_realizations: int,
    seed: int = 0,
    samples_per_period: int = 256,
) -> G1Estimate:
    """Ensemble estimate of <E*(t).E(t+tau)> / <|E(t)|^2> for a pulse train.

    The field is synthesized from the train (amplitude, random phase, AM
    phase, Jones vector, common shape).  Each realization is one pulse slot
    of length T; ``n_realizations`` slots are chosen with ``seed`` and the
    products integrated over each slot are summed.
    """
    if tau < 0:
        raise DomainError("tau must be >= 0")
    if len(train) == 0:
        raise DomainError("empty pulse train")
    period = train[0].period
    shape = train[0].shape
    notes: list[str] = []
    if n_realizations < MIN_G1_REALIZATIONS:
        notes.append(
            f"only {n_realizations} realizations (< {MIN_G1_REALIZATIONS}); "
            "estimate is statistically unreliable"
        )

    amp, pol = _pulse_coefficients(train)
    n = len(train)
    shift = int(math.floor(tau / period + 0.5))
    # slots whose lagged partner still lies inside the train
    available = np.arange(0, max(n - shift, 0))
    if available.size == 0:
        raise DomainError(f"tau={tau:g} exceeds the train duration")
    if n_realizations < available.size:
        rng = np.random.default_rng(seed)
        slots = np.sort(rng.choice(available, size=n_realizations, replace=False))
    else:
        slots = available
        if n_realizations > available.size:
            notes.append(f"requested {n_realizations} realizations, train provides {available.size}")

    du = period / samples_per_period
    u = -period / 2 + du * np.arange(samples_per_period)
    centre = _shape_centre(shape)
    # all pulses share one shape, so the slot integrals factor into a Gram
    # matrix of shifted envelopes times products of pulse coefficients
    offsets = (-1, 0, 1)
    env_t = [shape.evaluate(u - k * period + centre) for k in offsets]
    env_tau = [shape.evaluate(u + tau - (k + shift) * period + centre) for k in offsets]
    coef_t = [_slot_coefficients(amp, pol, slots + k) for k in offsets]
    coef_tau = [_slot_coefficients(amp, pol, slots + k + shift) for k in offsets]
    num = 0j
    den = 0.0
    for a in range(len(offsets)):
        for b in range(len(offsets)):
            g_num = np.sum(np.conj(env_t[a]) * env_tau[b]) * du
            g_den = np.sum(np.conj(env_t[a]) * env_t[b]) * du
            num += g_num * np.sum(np.conj(coef_t[a]) * coef_tau[b])
            den += (g_den * np.sum(np.conj(coef_t[a]) * coef_t[b])).real
    if den == 0:
        raise DomainError("field has zero energy in the sampled slots")
    return G1Estimate(complex(num / den), int(slots.size), notes)


def _slot_coefficients(amp: np.ndarray, pol: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Jones amplitudes amp[j] * pol[j] for pulse indices idx, zero outside the train."""
    out = np.zeros((idx.size, 2), dtype=complex)
    ok = (idx >= 0) & (idx < amp.size)
    out[ok] = amp[idx[ok], None] * pol[idx[ok]]
    return out


def _shape_centre(w: Waveform) -> float:
    p = w.intensity
    return float(np.sum(p * w.times) / np.sum(p))


# --------------------------------------------------------------------------
# CSV I/O


def read_waveform_csv(path: str | Path) -> Waveform:
    """Read ``time_s,re,im`` or ``time_s,intensity`` rows after a header line.

    Intensity traces become zero-phase amplitudes flagged ``intensity_only``.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc.strerror})") from exc
    times: list[float] = []
    cols: list[list[float]] = []
    ncol = None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if ncol is None:
                ncol = len(row)
                if ncol not in (2, 3):
                    raise FormatError(f"{path}:{lineno}: expected 2 or 3 columns, got {ncol}")
            if len(row) != ncol:
                raise FormatError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
            times.append(vals[0])
            cols.append(vals[1:])
    if len(times) < 2:
        raise FormatError(f"{path}: need at least 2 data rows")
    t = np.asarray(times)
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise FormatError(f"{path}: time column is not uniformly increasing")
    data = np.asarray(cols)
    try:
        if ncol == 2:
            if np.any(data[:, 0] < -1e-12 * max(1.0, np.abs(data).max())):
                warnings.warn(f"{path}: negative intensity samples clipped to zero", stacklevel=2)
            return Waveform.from_intensity(float(t[0]), dt, data[:, 0])
        return Waveform(float(t[0]), dt, data[:, 0] + 1j * data[:, 1])
    except (DomainError, FormatError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_waveform_csv(path: str | Path, w: Waveform, intensity: bool = False) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        if intensity:
            wr.writerow(["time_s", "intensity"])
            for t, p in zip(w.times, w.intensity):
                wr.writerow([repr(float(t)), repr(float(p))])
        else:
            wr.writerow(["time_s", "re", "im"])
            for t, s in zip(w.times, w.samples):
                wr.writerow([repr(float(t)), repr(float(s.real)), repr(float(s.imag))])
