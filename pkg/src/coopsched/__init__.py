"""Cooperative localization of planar robot teams with local measurement scheduling."""

from coopsched.belief import JointBelief, RobotTruth, SensorParams, check_validity, init_joint_belief
from coopsched.fusion import ekf_update_single, sequential_update
from coopsched.harness import ScenarioConfig, Window, run_monte_carlo, run_replay, run_scenario
from coopsched.scheduling import PolicyInput, policy_input, select_alg1

__all__ = [
    "JointBelief", "RobotTruth", "SensorParams", "check_validity", "init_joint_belief",
    "ekf_update_single", "sequential_update",
    "ScenarioConfig", "Window", "run_monte_carlo", "run_replay", "run_scenario",
    "PolicyInput", "policy_input", "select_alg1",
]
