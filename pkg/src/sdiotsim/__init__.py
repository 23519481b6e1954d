"""Discrete-event simulator of a two-layer SD-IoT control plane.

Main controllers elect a leader; base controllers serve switch Packet_in
traffic and rebalance it when one of them becomes overloaded or fails.
"""

from .kernels import BACKEND
from .scenario import parse_scenario
from .simnet import Engine, EngineConfig

__version__ = "0.1.0"

__all__ = ["BACKEND", "Engine", "EngineConfig", "parse_scenario", "__version__"]
