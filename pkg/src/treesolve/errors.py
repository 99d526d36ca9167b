"""Exception hierarchy shared by every module."""


class TreesolveError(Exception):
    """Base class for all package errors."""


class NumericalError(TreesolveError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class DecompositionError(TreesolveError):
    pass


class InvalidDecomposition(DecompositionError):
    pass


class UnsupportedSparsity(DecompositionError):
    pass


class ParseError(TreesolveError):
    pass


class StructureViolation(TreesolveError):
    pass


class SupportViolation(TreesolveError):
    pass


class MissingSnapshot(TreesolveError):
    pass


class NotInterior(NumericalError):
    pass


class NonpositiveT(TreesolveError):
    pass


class CentralPathLost(NumericalError):
    pass


class Infeasible(TreesolveError):
    pass


class IterationBudgetExceeded(TreesolveError):
    pass


class UnsupportedConstraint(TreesolveError):
    pass


class DisconnectedBagSet(TreesolveError):
    pass


class UncoveredSupport(TreesolveError):
    pass


class InconsistentMinors(TreesolveError):
    pass


class CompletionFailure(TreesolveError):
    pass
