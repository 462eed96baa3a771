"""Point-to-point LoRa text messaging: PHY, framing, channel, nodes, experiments, telemetry."""

from .channel import LinkBudget, PathLossModel, SnrThresholdTable
from .link import decode_frame, encode_frame
from .phy import RadioConfig, SymbolBlock, demodulate, modulate, time_on_air
from .scenarios import Scenario, load_scenario
from .sim import monte_carlo_ser, run_point_to_point, sweep_distance

__all__ = [
    "LinkBudget",
    "PathLossModel",
    "RadioConfig",
    "Scenario",
    "SnrThresholdTable",
    "SymbolBlock",
    "decode_frame",
    "demodulate",
    "encode_frame",
    "load_scenario",
    "modulate",
    "monte_carlo_ser",
    "run_point_to_point",
    "sweep_distance",
    "time_on_air",
]
