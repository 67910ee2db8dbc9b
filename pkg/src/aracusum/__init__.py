"""Adaptive test allocation for multi-region binomial CUSUM surveillance."""

from .allocators import POLICY_KINDS, AllocatorPolicy, allocate
from .model import (
    AlarmReport,
    CusumState,
    ModelParams,
    ObservationBatch,
    check_alarm,
    cusum_step,
    llr_increment,
)
from .planner import AllocationVector, brute_force_allocate, greedy_allocate, objective, reward, reward_increment
from .posterior import PosteriorState, PriorConfig, posterior_from_history, posterior_init, posterior_update
from .replay import DataError, RateMatrix, ReplayReport, load_rate_matrix, replay
from .sim import (
    GENERATOR_ID,
    CalibrationError,
    CalibrationResult,
    MetricsReport,
    RunOutcome,
    SimulationConfig,
    behavior_study,
    calibrate_threshold,
    monte_carlo,
    run_once,
    sample_observations,
)

__version__ = "0.1.0"
