"""Exception types raised across the solver suite.

Everything derives from CapfolioError so callers can catch the whole family
with one clause. Solver failures carry the final report when one exists.
"""


class CapfolioError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CapfolioError):
    """Coefficient arrays disagree on the number of assets or segments."""


class NonpositiveHorizon(CapfolioError):
    """The horizon is zero or negative."""


class DegenerateVolatility(CapfolioError):
    """sigma(t) sigma(t)' has an eigenvalue below the nondegeneracy floor."""


class SingularVolatility(CapfolioError):
    """The linear solve against sigma(t) failed."""


class DomainError(CapfolioError):
    """Argument outside the mathematical domain of the function."""


class TargetOutOfRange(CapfolioError):
    """Inversion target lies outside the attainable range of the function."""


class NoSignChange(CapfolioError):
    """Root bracket endpoints have the same sign."""


class MaxIterations(CapfolioError):
    """Iteration budget exhausted before convergence."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularJacobian(CapfolioError):
    """Newton step hit a numerically singular Jacobian."""


class InfeasibleBudget(CapfolioError):
    """Initial capital cannot be carried to the cap: x0 >= B * E[z(T)]."""


class TargetTooHigh(CapfolioError):
    """Expected-wealth target d is at or above the upper bound d_upper."""


class SolverDiverged(CapfolioError):
    """Multiplier solve failed to converge; the last report is attached."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class PolicyUndefinedAtTerminal(CapfolioError):
    """The portfolio policy has no limit at t = T; evaluate wealth instead."""


class EmptySample(CapfolioError):
    """An estimator was fed an empty sample array."""


class NumericalBreakdown(CapfolioError):
    """The simplex could not recover a stable basis."""


class ConfigError(CapfolioError):
    """Run configuration is missing fields or has inconsistent values."""
