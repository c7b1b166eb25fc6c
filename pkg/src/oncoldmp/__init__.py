"""Skill-library DMPs with an optimized normalized potential field and phase coupling for multi-arm execution."""
from .collab import PhaseCoupling, phase_rate
from .dmp import DmpGains, DmpModel, fit_lwr, rollout
from .dualquat import DualQuaternion, Pose, Quaternion, featurize, semantic_similarity
from .field import EllipsoidObstacle, FieldParams, field_force, isopotential, potential
from .fieldopt import OptimizerConfig, optimize
from .normalize import NormalizationFrame, frame_from_trajectory
from .planner import Demonstration, PlannedTrajectory, QAgent, TaskSpec, plan, train
from .sim import ArmConfig, RunLog, Scenario, max_deviation, minimum_clearance, run

__version__ = "0.1.0"
