"""Passivity analysis and simulation of sampled-data bilateral teleoperation."""

from .control import DiscreteTransfer, controller_pair, discretize, eval_transfer
from .freq import (
    FrequencyGrid,
    PassivityReport,
    closed_form_bound,
    passivity_margin_sweep,
    passivity_rhs,
)
from .model import (
    REFERENCE_ROBOT,
    PDDissipation,
    PDLike,
    PLike,
    RobotParams,
    Scenario,
    ScenarioError,
    validate_scenario,
)
from .sim import SimulationTrace, energy_monitor, run_simulation, tracking_metrics

__version__ = "0.1.0"
