"""Two-rate ACC platoon simulator and string-stability analysis."""
from .core import (
    ActuatorModel,
    ControllerConfig,
    LinearPlannerParams,
    MpcParams,
    NoiseConfig,
    Scenario,
    ScenarioError,
    TimingConfig,
    VehicleConfig,
    VehicleState,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from .sim import PlatoonTrace, run_platoon

__version__ = "0.1.0"
