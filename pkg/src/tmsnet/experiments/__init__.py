"""Grid experiments over the network model with resumable, deterministic output."""
from .backends import ResourceGuardError, RoutingWarning, evaluate, qubit_state
from .io import Dataset
from .optimize import OptimumResult, maximize
from .runners import (
    delay_study,
    optimize,
    pulsed_rate_trajectory,
    run,
    run_contour,
    run_sweep,
    spectra_dump,
    truncation_study,
)
from .spec import ExperimentSpec, SpecError, make_params

__all__ = [
    "Dataset", "ExperimentSpec", "OptimumResult", "ResourceGuardError", "RoutingWarning",
    "SpecError", "delay_study", "evaluate", "make_params", "maximize", "optimize",
    "pulsed_rate_trajectory", "qubit_state", "run", "run_contour", "run_sweep",
    "spectra_dump", "truncation_study",
]
