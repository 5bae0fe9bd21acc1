"""Power-control game for directional multi-operator downlinks with drift-plus-penalty scheduling."""
from .channel import AntennaPattern, FadingParams, NoiseModel, noise_power
from .engine import RunTrace, SimConfig, run, sweep
from .game import GameInstance, NEResult, best_response, parallel_update
from .mac import ContentionConfig
from .topology import Scenario, generate_scenario

__all__ = [
    "AntennaPattern",
    "ContentionConfig",
    "FadingParams",
    "GameInstance",
    "NEResult",
    "NoiseModel",
    "RunTrace",
    "Scenario",
    "SimConfig",
    "best_response",
    "generate_scenario",
    "noise_power",
    "parallel_update",
    "run",
    "sweep",
]

__version__ = "0.1.0"
