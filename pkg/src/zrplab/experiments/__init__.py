"""Experiment configs, scenario runners, reports and the Riemann oracle."""

from .config import ConfigError, SCENARIOS, canonical_json, config_digest, parse_config, parse_config_text
from .report import ExperimentReport, Row, report_schema
from .riemann import lax_entropy_ok, profile, riemann_solution, shock_speed
from .runner import SEED_RULE, resolve_parallelism, run_experiment, unit_rng, unit_seed
from .scenarios import get_scenario

__all__ = [
    "ConfigError", "SCENARIOS", "canonical_json", "config_digest", "parse_config", "parse_config_text",
    "ExperimentReport", "Row", "report_schema",
    "lax_entropy_ok", "profile", "riemann_solution", "shock_speed",
    "SEED_RULE", "resolve_parallelism", "run_experiment", "unit_rng", "unit_seed", "get_scenario",
]
