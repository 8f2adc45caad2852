"""Faint-pulse-source decoy-state BB84 simulator and analysis toolkit."""

from .decoy_rates import DecoyParams, GainStats, KeyRateResult, secure_key_rate
from .link_channel import LinkParams, transmittance
from .sidechannel import OverlapReport, Waveform
from .source_model import PolarizationState, PulseSpec, SourceConfig

__all__ = [
    "DecoyParams", "GainStats", "KeyRateResult", "LinkParams", "OverlapReport",
    "PolarizationState", "PulseSpec", "SourceConfig", "Waveform",
    "secure_key_rate", "transmittance",
]
__version__ = "0.1.0"
