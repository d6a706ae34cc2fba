"""L0-regularised compressed sensing with coherent-Ising-machine support search."""

from .alternating import AlternationResult, Backend, RunHistory, alternating_minimize
from .cdp import cdp_minimize
from .datagen import gen_instance
from .estimator import L0CimRegressor
from .exceptions import ConfigError, DivergenceError, SingularDiagonalError
from .mfz import LocalFieldMode, run_mfz
from .model import (
    CouplingForm,
    HyperParams,
    ProblemInstance,
    brute_force_l0rbcs,
    coupling_from_observation,
    hamiltonian,
    hamming_loss,
    lam_from_eta,
    objective,
    rmse,
)
from .positive_p import run_pp
from .schedules import eta_schedule, extract_support, pump_schedule

__version__ = "0.1.0"
