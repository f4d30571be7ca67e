"""Multi-task optimisation by balancing per-task parameter updates."""

from .harness import ExperimentConfig, run_grid, run_toy, run_training
from .solvers import SolverConfig, WeightSolution, solve_bargaining

__version__ = "0.1.0"
__all__ = ["ExperimentConfig", "SolverConfig", "WeightSolution", "run_grid", "run_toy",
           "run_training", "solve_bargaining"]
