"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class CodesignError(Exception):
    """Base class for all package errors."""


class NotFactorizable(CodesignError):
    """Cholesky factorization failed: the matrix is indefinite (or numerically so)."""


class NoConvergence(CodesignError):
    """An iterative kernel hit its iteration cap."""


class RankDeficient(CodesignError):
    """Covariate matrix does not have full column rank."""


class Singular(CodesignError):
    """A matrix that must be inverted is numerically singular."""


class SingularSubPrecision(Singular):
    """Leading block of the precision matrix is singular in the greedy loop."""


class UnequalSigmas(CodesignError):
    """A closed form that assumes equal experiment variances was given unequal ones."""


class InfeasibleNumerics(CodesignError):
    """Row normalization in the SDP solver collapsed."""


class TimeLimitExceeded(CodesignError):
    """A solver ran out of time. Solvers flag this rather than raise by default."""


class IncompatibleDimensions(CodesignError):
    """Requested design cannot be built for the given N and K."""
