"""Robust interior-point method over block barriers."""

from .barriers import (barrier_grad_hess, compute_delta_mu, compute_gamma, compute_mu, log_potential,
                       potential)
from .centering import reference_centering, run_centering
from .cpm import CentralPathMaintenance
from .exactds import ExactDS, FastStructure
from .approxds import ApproxDS
from .params import CenteringParams, SolverOptions, iteration_budget
from .program import BlockBarrier, GeneralProgram, Geometry
from .reference import ReferenceEngine
from .robust import SolveResult, robust_ipm

__all__ = [
    "ApproxDS", "BlockBarrier", "CenteringParams", "CentralPathMaintenance", "ExactDS", "FastStructure",
    "GeneralProgram", "Geometry", "ReferenceEngine", "SolveResult", "SolverOptions", "barrier_grad_hess",
    "compute_delta_mu", "compute_gamma", "compute_mu", "iteration_budget", "log_potential", "potential",
    "reference_centering", "robust_ipm", "run_centering",
]
