"""Slice-aware O-RAN resource allocation: system model, exhaustive oracle and learned allocators."""
from .channel import ChannelTensor, add_channel_noise, generate_channel, generate_contrastive_pair
from .config import ConfigError, NetworkConfig, load_config, save_config
from .dataset import Dataset, build_labeled_dataset, load_dataset, save_dataset
from .dqn import DQNAllocator, DqnHyper, SlicingEnv, greedy_rollout, train_dqn
from .esa import (BudgetExceeded, PowerGrid, SolveResult, enumerate_allocations, solve_esa,
                  structural_count)
from .harness import ComparisonReport, ScenarioSweep, load_sweep, run_sweep, write_report
from .metrics import association_error, regression_report
from .ssvae import (SSVAEAllocator, SsvaeHyper, SsvaeModel, predict_allocation, project_feasible,
                    train_ssvae)
from .system import (Allocation, RateReport, Violation, check_feasible, delay, is_feasible,
                     objective, rate_report, rate_ue, ru_power_and_fronthaul, sinr)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "BudgetExceeded", "ChannelTensor", "ComparisonReport", "ConfigError",
    "DQNAllocator", "Dataset", "DqnHyper", "NetworkConfig", "PowerGrid", "RateReport",
    "SSVAEAllocator", "ScenarioSweep", "SlicingEnv", "SolveResult", "SsvaeHyper", "SsvaeModel",
    "Violation", "add_channel_noise", "association_error", "build_labeled_dataset",
    "check_feasible", "delay", "enumerate_allocations", "generate_channel",
    "generate_contrastive_pair", "greedy_rollout", "is_feasible", "load_config", "load_dataset",
    "load_sweep", "objective", "predict_allocation", "project_feasible", "rate_report", "rate_ue",
    "regression_report", "ru_power_and_fronthaul", "run_sweep", "save_config", "save_dataset",
    "sinr", "solve_esa", "structural_count", "train_dqn", "train_ssvae", "write_report",
]
