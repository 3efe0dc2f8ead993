"""Probe-and-block reservation MAC for CDMA mobile ad hoc voice networks: a frame-level simulator."""

from .config import SimConfig, load_config, save_config
from .engine import Simulation, run
from .metrics import MetricsRecord, finalize

__all__ = ["SimConfig", "Simulation", "MetricsRecord", "finalize", "load_config", "run", "save_config"]
__version__ = "0.1.0"
