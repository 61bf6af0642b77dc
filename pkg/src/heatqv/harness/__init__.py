"""Experiment configuration, Monte Carlo statistics, runner and CLI."""

from .config import ExperimentConfig, load_config, parse_config, shipped_configs
from .runner import Criterion, RunReport, run, scaling_limit_check, summarize
from .stats import Aggregate, RateFit, mc_aggregate, rate_fit, trend_violations

__all__ = [
    "ExperimentConfig", "load_config", "parse_config", "shipped_configs",
    "Criterion", "RunReport", "run", "scaling_limit_check", "summarize",
    "Aggregate", "RateFit", "mc_aggregate", "rate_fit", "trend_violations",
]
