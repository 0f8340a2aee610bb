"""Experiment configuration and Monte Carlo campaigns."""

from .campaigns import (
    CampaignResult,
    run_campaign,
    run_gross_error_study,
    run_pmis_campaign,
    run_solver_benchmark,
    write_outputs,
)
from .config import ExperimentConfig, load_config
