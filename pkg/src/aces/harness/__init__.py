from .config import ExperimentConfig, boundary_fraction, evaluation_grid
from .experiment import (RunState, TrialRecord, offline_evaluate, run_episode,
                         run_experiment, run_single)

__all__ = ["ExperimentConfig", "RunState", "TrialRecord", "boundary_fraction",
           "evaluation_grid", "offline_evaluate", "run_episode", "run_experiment",
           "run_single"]
