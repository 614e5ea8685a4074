"""One-bit compressed sensing with binary sparse Bayesian learning (BSBL)."""

from .baselines import BihtConfig, biht_run
from .bsbl import NumericalBreakdown, SolverConfig, e_step, run_mmv, run_smv
from .doa import Algorithm, Scenario, run_monte_carlo
from .model import ComplexLinearModel, RealStackedModel, csgn, stack_model, synthesize

__all__ = [
    "Algorithm",
    "BihtConfig",
    "ComplexLinearModel",
    "NumericalBreakdown",
    "RealStackedModel",
    "Scenario",
    "SolverConfig",
    "biht_run",
    "csgn",
    "e_step",
    "run_mmv",
    "run_monte_carlo",
    "run_smv",
    "stack_model",
    "synthesize",
]
