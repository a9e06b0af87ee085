"""Packet-level discrete-event simulator for multipath transport.

Coupled BBR congestion control, the AR&P scheduler, and the usual
baselines, driven by scenario files.
"""

from .engine import NS_PER_MS, NS_PER_S, SchedulingError, Simulator, ms, seconds
from .scenario import Run, Scenario, ScenarioError, load, loads, from_dict, run_scenario

__version__ = "0.1.0"

__all__ = [
    "NS_PER_MS", "NS_PER_S", "Run", "Scenario", "ScenarioError", "SchedulingError", "Simulator",
    "from_dict", "load", "loads", "ms", "run_scenario", "seconds",
]
