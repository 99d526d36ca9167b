"""Interior-point solvers for linear and semidefinite programs of small treewidth."""

from . import _threads  # noqa: F401  (must run before numpy is imported)
from .errors import (CompletionFailure, DisconnectedBagSet, IterationBudgetExceeded, Infeasible,
                     InconsistentMinors, InvalidDecomposition, ParseError, TreesolveError, UncoveredSupport,
                     UnsupportedConstraint)
from .ipm import GeneralProgram, SolveResult, SolverOptions, robust_ipm
from .reduce import (BagProgram, Graph, SdpInstance, add_inequality_slacks, build_box_lp, build_lovasz_theta,
                     build_matrix_completion, build_maxcut_sdp, decomposable_sdp_to_bag_program, psd_complete,
                     sdp_to_bag_program)
from .treewidth import TreeDecomposition, min_degree_decomposition, validate_decomposition

__version__ = "0.1.0"

__all__ = [
    "BagProgram", "CompletionFailure", "DisconnectedBagSet", "GeneralProgram", "Graph", "InconsistentMinors",
    "Infeasible", "InvalidDecomposition", "IterationBudgetExceeded", "ParseError", "SdpInstance", "SolveResult",
    "SolverOptions", "TreeDecomposition", "TreesolveError", "UncoveredSupport", "UnsupportedConstraint",
    "add_inequality_slacks", "build_box_lp", "build_lovasz_theta", "build_matrix_completion", "build_maxcut_sdp",
    "decomposable_sdp_to_bag_program", "min_degree_decomposition", "psd_complete", "robust_ipm",
    "sdp_to_bag_program", "validate_decomposition",
]
