"""Modified FXLMS active noise control with mode-switching online
secondary-path modeling."""

from msanc.anc_engine import Mode, ModeSwitchingController, SwitchMonitor
from msanc.errors import (
    AncError,
    ConfigurationError,
    DivergenceFault,
    SequencingError,
    SignalChainError,
)
from msanc.harness import Scenario, case1, case2, load_scenario, run_scenario

__all__ = [
    "AncError",
    "ConfigurationError",
    "DivergenceFault",
    "Mode",
    "ModeSwitchingController",
    "Scenario",
    "SequencingError",
    "SignalChainError",
    "SwitchMonitor",
    "case1",
    "case2",
    "load_scenario",
    "run_scenario",
]
