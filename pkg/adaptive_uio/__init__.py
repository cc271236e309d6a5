from .base import (
    AssumptionError,
    AssumptionReport,
    ConfigError,
    DivergenceError,
    GainDesignError,
    UIOError,
)
from .harness import RunReport, compute_metrics, emit_csv, read_csv, run_scenario, sweep
from .loop import PipelineEvent, run_pipeline
from .plant import ExoGenerator, HarmonicDisturbance, NoiseModel, Plant, check_assumptions, simulate_plant
from .scenario import Scenario, builtin_scenario, load_scenario

__all__ = [
    "AssumptionError",
    "AssumptionReport",
    "ConfigError",
    "DivergenceError",
    "ExoGenerator",
    "GainDesignError",
    "HarmonicDisturbance",
    "NoiseModel",
    "PipelineEvent",
    "Plant",
    "RunReport",
    "Scenario",
    "UIOError",
    "builtin_scenario",
    "check_assumptions",
    "compute_metrics",
    "emit_csv",
    "load_scenario",
    "read_csv",
    "run_pipeline",
    "run_scenario",
    "simulate_plant",
    "sweep",
]
