"""Free-space link budget and detection-layer parameters."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError, DomainError

# error probability of a click caused by background alone (random bit)
VACUUM_ERROR = 0.5


@dataclass(frozen=True)
class LinkParams:
    distance: float = 20.0  # km
    atmosphere_loss: float = 0.1  # dB/km
    optics_loss: float = 5.0  # dB, transmitter + receiver optics
    detector_efficiency: float = 0.5
    background_yield: float = 1e-5
    misalignment: float = 0.01

    def __post_init__(self) -> None:
        for name in ("distance", "atmosphere_loss", "optics_loss"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        for name in ("detector_efficiency", "background_yield", "misalignment"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {getattr(self, name)!r}")

    @property
    def vacuum_error(self) -> float:
        return VACUUM_ERROR

    def at(self, distance: float) -> LinkParams:
        return replace(self, distance=distance)


def transmittance(p: LinkParams) -> float:
    """Overall single-photon detection probability, detector included."""
    loss_dB = p.distance * p.atmosphere_loss + p.optics_loss
    return p.detector_efficiency * 10.0 ** (-loss_dB / 10.0)


def yield_n(p: LinkParams, n: int) -> float:
    """Click probability given ``n`` photons leave the transmitter."""
    if n < 0:
        raise DomainError("photon number must be >= 0")
    y0 = p.background_yield
    if n == 0:
        return y0
    eta_n = 1.0 - (1.0 - transmittance(p)) ** n
    return y0 + eta_n - y0 * eta_n
