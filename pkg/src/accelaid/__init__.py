"""INS/GNSS error-state EKF with a GNSS-derived acceleration update."""

from .config import RunConfig, load_config, parse_config
from .dataset import DatasetBundle, load_dataset, write_dataset
from .ekf import ErrorStateEKF, ProcessNoiseParams
from .evaluation import ComparisonRow, RunResult, aggregate, improvement_pct, prmse
from .gnss_accel import FixWindow, GnssFix, extract_accel
from .runner import RunPlan, run_batch, run_filter, simulate_scenario
from .strapdown import ImuSample, NavState, propagate

__all__ = [
    "ComparisonRow",
    "DatasetBundle",
    "ErrorStateEKF",
    "FixWindow",
    "GnssFix",
    "ImuSample",
    "NavState",
    "ProcessNoiseParams",
    "RunConfig",
    "RunPlan",
    "RunResult",
    "aggregate",
    "extract_accel",
    "improvement_pct",
    "load_config",
    "load_dataset",
    "parse_config",
    "prmse",
    "propagate",
    "run_batch",
    "run_filter",
    "simulate_scenario",
    "write_dataset",
]
