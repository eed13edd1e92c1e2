"""Penalizing shaking and spinning behavior in policy learning, with adaptive cost weights."""

from .costs import (CostDetector, CostSignal, HorizontalAction, ShakeWindow, SpinTracker,
                    combined_cost, shaking_cost, spin_step, trace_costs)
from .env import CollectorEnv, EnvConfig, JointAction
from .lagrangian import (LagrangianParams, ObjectiveSample, augmented_lagrangian,
                         inner_min_closed_form, lambda_update, penalty_weight,
                         sigmoid_approx_error, sigmoid_weight, verify_prop1)
from .learner import CostConfig, LearnerConfig, PolicyParams, run_training
from .schedulers import SchedulerConfig, SchedulerKind, SchedulerState, begin_episode, end_episode

__version__ = "0.1.0"
