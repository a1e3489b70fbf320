"""Deterministic simulation loop, wire protocol service, and CLI."""

from .config import ConfigError, SimConfig, default_config
from .sim import PROTOCOL_VERSION, ScriptError, Simulation, run_headless
from .server import ConductorServer, serve

__all__ = [
    "ConfigError", "SimConfig", "default_config",
    "PROTOCOL_VERSION", "ScriptError", "Simulation", "run_headless",
    "ConductorServer", "serve",
]
