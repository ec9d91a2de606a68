"""Exception types shared across the toolkit."""


class DrccpError(Exception):
    """Base class for all toolkit errors."""


class DegenerateDirection(DrccpError):
    """The dual norm of the uncertainty direction vanished (b = A x)."""


class DimensionMismatch(DrccpError):
    """Inconsistent array shapes in problem data."""


class UnboundedDomain(DrccpError):
    """A domain-based big-M was requested but the domain box is unbounded."""


class InvalidQuantile(DrccpError):
    """A quantile bound would produce a negative indicator coefficient."""


class AllInfeasible(DrccpError):
    """Every single-scenario subproblem was infeasible."""


class SupportMismatch(DrccpError):
    """Scenario coefficient vectors do not share a common support."""


class SignViolation(DrccpError):
    """Row data breaks the covering/packing sign pattern."""


class RedundantIndex(DrccpError):
    """Base inequality requested for a sorted index that is redundant."""


class TooManySubsets(DrccpError):
    """Cut enumeration guard tripped (too many candidate index sets)."""


class TooManyScenarios(DrccpError):
    """Enumeration oracle guard tripped (N too large)."""


class NotDegenerate(DrccpError):
    """Extraneous-set classification requested away from b = A x."""


class NoIncumbent(DrccpError):
    """Root gap requested without a finite incumbent."""


class NumericalFailure(DrccpError):
    """The LP engine failed to converge within its limits."""
