"""Analytic decoy-state BB84 key-rate engine.

Gains and error rates follow the usual Poisson-source channel model:

    Q_s = Y0 + 1 - exp(-eta s)
    E_s Q_s = e0 Y0 + e_d (1 - exp(-eta s))

Single-photon quantities come either straight from the model ("exact") or
from the three-intensity decoy estimator ("decoy"), and the secure rate is

    R = q (N_mu / t) [ -Q_mu f H2(E_mu) + Q1 (1 - H2(e1)) ]

with N_mu / t the number of signal pulses sent per second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from .errors import ConfigError, DegenerateLinkError, DomainError, EstimatorError
from .link_channel import LinkParams, transmittance, yield_n

Mode = Literal["exact", "decoy"]
MODES = ("exact", "decoy")


@dataclass(frozen=True)
class DecoyParams:
    mu: float = 0.5
    nu1: float = 0.125
    nu2: float = 0.0167
    prob_mu: float = 0.85
    prob_nu1: float = 0.10
    prob_nu2: float = 0.05
    q: float = 0.5
    f_ec: float = 1.16
    rep_rate: float = 1e8
    duration: float = 1.0

    def __post_init__(self) -> None:
        if not self.mu > self.nu1 > self.nu2 >= 0:
            raise ConfigError(f"need mu > nu1 > nu2 >= 0, got {self.mu}, {self.nu1}, {self.nu2}")
        probs = self.probs
        if any(p < 0 for p in probs):
            raise ConfigError("intensity probabilities must be >= 0")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ConfigError(f"intensity probabilities must sum to 1, got {sum(probs)!r}")
        if not 0 < self.q <= 1:
            raise ConfigError("sifting factor q must lie in (0, 1]")
        if not self.f_ec >= 1:
            raise ConfigError("error-correction efficiency f_ec must be >= 1")
        if not (self.rep_rate > 0 and self.duration > 0):
            raise ConfigError("rep_rate and duration must be positive")

    @property
    def intensities(self) -> tuple[float, float, float]:
        return (self.mu, self.nu1, self.nu2)

    @property
    def probs(self) -> tuple[float, float, float]:
        return (self.prob_mu, self.prob_nu1, self.prob_nu2)


@dataclass(frozen=True)
class GainStats:
    """Observed (or modelled) gains and QBERs plus single-photon quantities.

    ``y1``/``q1``/``e1`` are the model values; the ``*_lower``/``*_upper``
    fields are the decoy-estimator bounds and stay None when not computed.
    """

    q_mu: float
    q_nu1: float
    q_nu2: float
    e_mu: float
    e_nu1: float
    e_nu2: float
    y1: float | None = None
    q1: float | None = None
    e1: float | None = None
    y1_lower: float | None = None
    q1_lower: float | None = None
    e1_upper: float | None = None

    @property
    def gains(self) -> tuple[float, float, float]:
        return (self.q_mu, self.q_nu1, self.q_nu2)

    @property
    def qbers(self) -> tuple[float, float, float]:
        return (self.e_mu, self.e_nu1, self.e_nu2)


@dataclass(frozen=True)
class KeyRateResult:
    raw_sifted_rate: float
    secure_rate: float
    qber: float
    clamped: bool = False
    mode: str = "exact"
    unclamped_rate: float = 0.0
    stats: GainStats | None = field(default=None, compare=False)


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy needs 0 <= x <= 1, got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def gain_and_qber(link: LinkParams, intensity: float) -> tuple[float, float]:
    if intensity < 0:
        raise DomainError("intensity must be >= 0")
    y0 = link.background_yield
    detected = -math.expm1(-transmittance(link) * intensity)
    gain = y0 + detected
    if gain == 0:
        return 0.0, 0.0
    errors = link.vacuum_error * y0 + link.misalignment * detected
    return gain, errors / gain


def single_photon_exact(link: LinkParams, d: DecoyParams) -> tuple[float, float, float]:
    """(Y1, Q1, e1) of the channel model itself."""
    y1 = yield_n(link, 1)
    if y1 <= 0:
        raise DegenerateLinkError("single-photon yield is zero")
    q1 = y1 * d.mu * math.exp(-d.mu)
    e1 = (link.vacuum_error * link.background_yield + link.misalignment * transmittance(link)) / y1
    return y1, q1, e1


def background_lower_bound(stats: GainStats, d: DecoyParams) -> float:
    """Y0 lower bound from the two decoys; equals Q_nu2 when nu2 = 0."""
    num = d.nu1 * stats.q_nu2 * math.exp(d.nu2) - d.nu2 * stats.q_nu1 * math.exp(d.nu1)
    return max(num / (d.nu1 - d.nu2), 0.0)


def single_photon_decoy_bound(stats: GainStats, d: DecoyParams) -> tuple[float, float]:
    """Lower bound on Y1 and upper bound on e1 from three intensities.

    Only the measured quantities of ``stats`` (gains and QBERs) are used.
    Raises EstimatorError when the estimator has no valid solution.
    """
    mu, nu1, nu2 = d.intensities
    denom = mu * (nu1 - nu2) - nu1**2 + nu2**2
    if denom <= 0:
        raise EstimatorError(f"decoy estimator needs mu > nu1 + nu2 (denominator {denom:g})")
    y0 = background_lower_bound(stats, d)
    y1_lower = (mu / denom) * (
        stats.q_nu1 * math.exp(nu1)
        - stats.q_nu2 * math.exp(nu2)
        - (nu1**2 - nu2**2) / mu**2 * (stats.q_mu * math.exp(mu) - y0)
    )
    if not y1_lower > 0:
        raise EstimatorError(f"single-photon yield lower bound is non-positive ({y1_lower:g})")
    e1_upper = (
        stats.e_nu1 * stats.q_nu1 * math.exp(nu1) - stats.e_nu2 * stats.q_nu2 * math.exp(nu2)
    ) / ((nu1 - nu2) * y1_lower)
    # an error rate above 1/2 carries no more information than 1/2
    e1_upper = min(max(e1_upper, 0.0), 0.5)
    return y1_lower, e1_upper


def model_stats(link: LinkParams, d: DecoyParams, bounds: bool = True) -> GainStats:
    """Noiseless gains of the channel model, with exact and bounded Y1/e1."""
    (q_mu, e_mu), (q_nu1, e_nu1), (q_nu2, e_nu2) = (gain_and_qber(link, s) for s in d.intensities)
    y1, q1, e1 = single_photon_exact(link, d)
    stats = GainStats(q_mu, q_nu1, q_nu2, e_mu, e_nu1, e_nu2, y1, q1, e1)
    if not bounds:
        return stats
    return with_decoy_bounds(stats, d)


def with_decoy_bounds(stats: GainStats, d: DecoyParams) -> GainStats:
    y1_lower, e1_upper = single_photon_decoy_bound(stats, d)
    q1_lower = y1_lower * d.mu * math.exp(-d.mu)
    return GainStats(
        stats.q_mu, stats.q_nu1, stats.q_nu2, stats.e_mu, stats.e_nu1, stats.e_nu2,
        stats.y1, stats.q1, stats.e1, y1_lower, q1_lower, e1_upper,
    )


def raw_sifted_rate(stats: GainStats, d: DecoyParams) -> float:
    return d.q * d.rep_rate * sum(p * g for p, g in zip(d.probs, stats.gains))


def rate_from_terms(q_mu: float, e_mu: float, q1: float, e1: float, d: DecoyParams) -> float:
    """Unclamped secure rate (b/s) for given signal and single-photon terms."""
    signal_per_s = d.rep_rate * d.prob_mu
    bracket = -q_mu * d.f_ec * binary_entropy(e_mu) + q1 * (1.0 - binary_entropy(e1))
    return d.q * signal_per_s * bracket


def key_rate_from_stats(stats: GainStats, d: DecoyParams, mode: Mode = "exact") -> KeyRateResult:
    if mode == "exact":
        if stats.q1 is None or stats.e1 is None:
            raise EstimatorError("exact mode needs model single-photon values")
        q1, e1 = stats.q1, stats.e1
    elif mode == "decoy":
        if stats.q1_lower is None:
            stats = with_decoy_bounds(stats, d)
        q1, e1 = stats.q1_lower, stats.e1_upper
    else:
        raise DomainError(f"unknown mode {mode!r}; use one of {MODES}")
    rate = rate_from_terms(stats.q_mu, stats.e_mu, q1, e1, d)
    clamped = rate < 0
    return KeyRateResult(
        raw_sifted_rate=raw_sifted_rate(stats, d),
        secure_rate=max(rate, 0.0),
        qber=stats.e_mu,
        clamped=clamped,
        mode=mode,
        unclamped_rate=rate,
        stats=stats,
    )


def secure_key_rate(link: LinkParams, d: DecoyParams, mode: Mode = "exact") -> KeyRateResult:
    stats = model_stats(link, d, bounds=(mode == "decoy"))
    return key_rate_from_stats(stats, d, mode)


@dataclass(frozen=True)
class SweepRow:
    distance: float
    stats: GainStats
    result: KeyRateResult

    @property
    def single_photon(self) -> tuple[float, float, float]:
        s = self.stats
        if self.result.mode == "decoy":
            return s.y1_lower, s.q1_lower, s.e1_upper
        return s.y1, s.q1, s.e1

    def csv_row(self) -> list[str]:
        s = self.stats
        y1, q1, e1 = self.single_photon
        vals = [self.distance, s.q_mu, s.q_nu1, s.q_nu2, s.e_mu, y1, q1, e1,
                self.result.raw_sifted_rate, self.result.secure_rate]
        return [repr(float(v)) for v in vals] + [str(int(self.result.clamped))]


SWEEP_CSV_HEADER = [
    "distance_km", "Q_mu", "Q_nu1", "Q_nu2", "E_mu", "Y1", "Q1", "e1",
    "raw_bps", "secure_bps", "clamped",
]


def distance_sweep(
    d: DecoyParams, link: LinkParams, distances: Iterable[float], mode: Mode = "exact"
) -> list[SweepRow]:
    """One row per distance, in input order."""
    distances = list(distances)
    if not distances:
        raise DomainError("distance list is empty")
    rows = []
    for km in distances:
        if km < 0:
            raise DomainError(f"distance must be >= 0, got {km!r}")
        lk = link.at(float(km))
        r = secure_key_rate(lk, d, mode)
        rows.append(SweepRow(float(km), r.stats, r))
    return rows


def cutoff_distance(d: DecoyParams, link: LinkParams, mode: Mode = "exact",
                    hi: float = 500.0, tol: float = 1e-6) -> float:
    """Smallest distance (km) at which the secure rate reaches zero, by bisection."""

    def positive(km: float) -> bool:
        try:
            return secure_key_rate(link.at(km), d, mode).unclamped_rate > 0
        except EstimatorError:
            return False

    lo = 0.0
    if not positive(lo):
        return 0.0
    if positive(hi):
        raise DomainError(f"secure rate still positive at {hi} km")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return hi


# Published 20 km simulation results, for side-by-side reporting.
PUBLISHED_20KM: dict[str, float] = {
    "Q_mu": 4.87e-2,
    "Q_nu1": 1.70e-2,
    "Q_nu2": 1.68e-3,
    "E_mu": 1.01e-2,
    "Q1": 3.47e-2,
    "e1": 1.01e-2,
    "secure_bps": 559.80e3,
}
# Relative divergence above which a computed value is reported as a discrepancy.
DISCREPANCY_RTOL = 0.02


@dataclass(frozen=True)
class ComparisonRow:
    quantity: str
    published: float
    computed: float

    @property
    def rel_diff(self) -> float:
        return (self.computed - self.published) / self.published

    @property
    def discrepant(self) -> bool:
        return abs(self.rel_diff) > DISCREPANCY_RTOL


def compare_published(row: SweepRow) -> list[ComparisonRow]:
    s = row.stats
    _, q1, e1 = row.single_photon
    computed = {
        "Q_mu": s.q_mu, "Q_nu1": s.q_nu1, "Q_nu2": s.q_nu2, "E_mu": s.e_mu,
        "Q1": q1, "e1": e1, "secure_bps": row.result.secure_rate,
    }
    return [ComparisonRow(k, v, computed[k]) for k, v in PUBLISHED_20KM.items()]


def format_comparison(rows: Sequence[ComparisonRow]) -> str:
    lines = [f"{'quantity':<11}{'published':>14}{'computed':>22}{'rel_diff':>12}  status"]
    for c in rows:
        status = "DISCREPANCY" if c.discrepant else "ok"
        lines.append(
            f"{c.quantity:<11}{c.published:>14.6g}{c.computed:>22.15g}{c.rel_diff:>+12.4%}  {status}"
        )
    return "\n".join(lines)
