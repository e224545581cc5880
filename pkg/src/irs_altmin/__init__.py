"""Robust alternating MSE minimisation for wideband IRS-aided multiuser MIMO."""

from .config import NoiseModel, SystemConfig, load_config, power_per_subcarrier
from .errors import ConfigError, DegenerateStateError, IrsAltminError, ReportingError
from .model import ChannelSet, IrsPhases, assemble_equivalent_channel

__version__ = "0.1.0"

__all__ = ["SystemConfig", "NoiseModel", "load_config", "power_per_subcarrier",
           "ChannelSet", "IrsPhases", "assemble_equivalent_channel",
           "ConfigError", "DegenerateStateError", "IrsAltminError",
           "ReportingError"]
