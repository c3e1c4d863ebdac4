"""Discrete-event simulator for rack-scale disaggregated memory."""

from .config import RunConfig, load_config
from .engine import Simulation, run
from .metrics import MetricsReport

__all__ = ["RunConfig", "load_config", "Simulation", "run", "MetricsReport"]
__version__ = "0.1.0"
