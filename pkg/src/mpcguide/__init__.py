"""Two-stage trajectory planning: visibility-graph guidance and a lateral MPC stabilizer."""
from .harness import RunResult, compare_weight_profiles, run_scenario
from .scenario import Scenario, load_scenario

__all__ = ["RunResult", "Scenario", "compare_weight_profiles", "load_scenario", "run_scenario"]
