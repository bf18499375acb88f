"""Two-stage versus multi-stage risk-averse unit commitment on scenario trees."""

from .instance import Instance, InstanceError, load_bundled, load_instance, validate_instance
from .risk import RiskSpec, composite_risk, conditional_musd
from .scenario_tree import ScenarioTree, build_tree

__version__ = "0.1.0"

__all__ = [
    "Instance", "InstanceError", "RiskSpec", "ScenarioTree", "build_tree", "composite_risk",
    "conditional_musd", "load_bundled", "load_instance", "validate_instance",
]
