"""Pulse-level BB84 + decoy Monte Carlo.

Randomness is counter based: pulses are grouped in fixed-size blocks and
block ``b`` draws from a Philox stream keyed by the seed with counter word
``b``.  The outcome of a pulse therefore depends only on (seed, index), and
any split of the blocks across workers gives bit-identical totals.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .decoy_rates import (
    DecoyParams,
    EstimatorError,
    GainStats,
    KeyRateResult,
    gain_and_qber,
    key_rate_from_stats,
)
from .errors import ConfigError
from .link_channel import LinkParams, transmittance
from .source_model import SourceConfig

BLOCK_SIZE = 1 << 16
CLASS_NAMES = ("mu", "nu1", "nu2")
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class MCConfig:
    n_pulses: int
    seed: int = 0
    link: LinkParams = field(default_factory=LinkParams)
    decoy: DecoyParams = field(default_factory=DecoyParams)
    source: SourceConfig = field(default_factory=SourceConfig)

    def __post_init__(self) -> None:
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be >= 1")
        if not 0 <= self.seed <= _SEED_MASK:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class MCResult:
    """Integer tallies per intensity class (order mu, nu1, nu2)."""

    sent: np.ndarray
    detected: np.ndarray
    errors: np.ndarray  # bit errors among all detections
    sifted: np.ndarray
    sifted_errors: np.ndarray
    n_pulses: int
    seed: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MCResult):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("sent", "detected", "errors", "sifted", "sifted_errors")
        ) and (self.n_pulses, self.seed) == (other.n_pulses, other.seed)

    @property
    def gains(self) -> np.ndarray:
        return _ratio(self.detected, self.sent)

    @property
    def qbers(self) -> np.ndarray:
        return _ratio(self.sifted_errors, self.sifted)

    @property
    def gain_stderr(self) -> np.ndarray:
        q = self.gains
        return np.sqrt(q * (1 - q) / np.maximum(self.sent, 1))

    @property
    def qber_stderr(self) -> np.ndarray:
        e = self.qbers
        return np.sqrt(e * (1 - e) / np.maximum(self.sifted, 1))

    @property
    def sifted_key_length(self) -> int:
        return int(self.sifted.sum())

    @property
    def sifted_fraction(self) -> float:
        det = int(self.detected.sum())
        return self.sifted_key_length / det if det else 0.0


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, block]))


def simulate_block(cfg: MCConfig, block: int) -> np.ndarray:
    """Tallies (5, 3) for pulses [block * BLOCK_SIZE, ...) of the run."""
    start = block * BLOCK_SIZE
    n = min(BLOCK_SIZE, cfg.n_pulses - start)
    rng = _block_generator(cfg.seed, block)
    d, link = cfg.decoy, cfg.link
    eta = transmittance(link)

    cls = np.searchsorted(np.cumsum(d.probs)[:-1], rng.random(n), side="right")
    photons = rng.poisson(np.asarray(d.intensities)[cls])
    arrived = rng.binomial(photons, eta)  # independent loss per photon
    signal = arrived > 0  # threshold detector
    background = rng.random(n) < link.background_yield
    click = signal | background
    p_err = np.where(signal, link.misalignment, link.vacuum_error)
    flip = rng.random(n) < p_err
    alice_basis = rng.integers(0, 2, n)
    alice_bit = rng.integers(0, 2, n)
    bob_basis = rng.integers(0, 2, n)
    # matched basis: Bob reads Alice's bit unless flipped; otherwise a coin toss
    coin = rng.integers(0, 2, n)
    matched = alice_basis == bob_basis
    bob_bit = np.where(matched, alice_bit ^ flip, coin)

    sifted = click & matched
    wrong = bob_bit != alice_bit
    out = np.empty((5, 3), dtype=np.int64)
    out[0] = np.bincount(cls, minlength=3)
    out[1] = np.bincount(cls[click], minlength=3)
    out[2] = np.bincount(cls[click & flip], minlength=3)
    out[3] = np.bincount(cls[sifted], minlength=3)
    out[4] = np.bincount(cls[sifted & wrong], minlength=3)
    return out


def _run_blocks(cfg: MCConfig, blocks: range) -> np.ndarray:
    total = np.zeros((5, 3), dtype=np.int64)
    for b in blocks:
        total += simulate_block(cfg, b)
    return total


def run(cfg: MCConfig, workers: int = 1) -> MCResult:
    n_blocks = math.ceil(cfg.n_pulses / BLOCK_SIZE)
    if workers <= 1 or n_blocks == 1:
        total = _run_blocks(cfg, range(n_blocks))
    else:
        # contiguous block ranges, one per worker
        edges = np.linspace(0, n_blocks, min(workers, n_blocks) + 1).astype(int)
        parts = [range(a, b) for a, b in zip(edges[:-1], edges[1:])]
        with ProcessPoolExecutor(max_workers=len(parts)) as ex:
            total = sum(ex.map(_run_blocks, [cfg] * len(parts), parts))
    sent, detected, errors, sifted, sifted_errors = total
    return MCResult(sent, detected, errors, sifted, sifted_errors, cfg.n_pulses, cfg.seed)


def empirical_stats(r: MCResult) -> GainStats:
    q = r.gains
    e = r.qbers
    return GainStats(q[0], q[1], q[2], e[0], e[1], e[2])


def estimate_key_rate(r: MCResult, d: DecoyParams) -> KeyRateResult:
    """Decoy-bounded secure rate from the empirical gains and QBERs."""
    if int(r.detected.sum()) == 0:
        return KeyRateResult(0.0, 0.0, 0.0, clamped=True, mode="decoy")
    missing = [name for name, n in zip(CLASS_NAMES, r.sent) if n == 0]
    if missing:
        raise EstimatorError(f"no pulses sent in intensity class(es) {missing}")
    return key_rate_from_stats(empirical_stats(r), d, mode="decoy")


@dataclass(frozen=True)
class Comparison:
    quantity: str
    empirical: float
    analytic: float
    stderr: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.empirical == self.analytic else math.inf
        return (self.empirical - self.analytic) / self.stderr


def compare_with_model(r: MCResult, link: LinkParams, d: DecoyParams) -> list[Comparison]:
    """Empirical gains/QBERs against the analytic model, with binomial z-scores."""
    rows = []
    for k, (name, s) in enumerate(zip(CLASS_NAMES, d.intensities)):
        q, e = gain_and_qber(link, s)
        rows.append(Comparison(f"Q_{name}", float(r.gains[k]), q, _stderr(q, r.sent[k])))
        rows.append(Comparison(f"E_{name}", float(r.qbers[k]), e, _stderr(e, r.sifted[k])))
    det = int(r.detected.sum())
    rows.append(Comparison("sifted_fraction", r.sifted_fraction, d.q, _stderr(d.q, det)))
    return rows


def _stderr(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n) if n > 0 else math.inf
