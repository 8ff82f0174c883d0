"""Structured sparse PCA: dictionary learning with overlapping-group quasi-norm penalties."""

from .groups import GridSpec, Group, GroupStructure, make_halfspace_groups, make_singletons, validate
from .kernels import BACKEND
from .regularizer import (
    EtaState,
    Partition,
    RegularizerParams,
    eta_minimizer,
    omega_alpha,
    shared_omega_alpha,
    update_eta,
    variational_penalty,
)
from .solver import FactorModel, FitResult, NumericalError, SolverConfig, encode, fit, objective

__version__ = "0.1.0"
