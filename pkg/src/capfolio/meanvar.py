"""Dynamic mean-variance benchmark with a bankruptcy floor at zero.

Minimize Var[X] over terminal payoffs X >= 0 subject to E[X] = d and the
budget E[z(T) X] = x0.  The optimal payoff is the truncated linear rule
X* = (lam - eta z)/2 on {z <= lam/eta} and 0 beyond, so everything reduces
to lognormal partial moments of z(T).  No wealth cap applies here; the
module exists as a comparison point for the capped downside-risk policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PolicyUndefinedAtTerminal, SolverDiverged
from .kernels import (
    PartialMomentContext,
    partial_moment_H,
    std_normal_cdf,
    truncated_exp_moment,
)
from .lpm import TERMINAL_NU, Multipliers, _gram_inverse_excess
from .market import MarketModel, deflator_moments, expected_deflator
from .solvers import solve_2d

MEAN_VARIANCE = "MeanVariance"


@dataclass(frozen=True, slots=True)
class MvProblem:
    """Mean-variance problem data: budget x0, mean target d, horizon.

    Requires d strictly above the risk-free growth of the budget, which is
    checked against the market in solve_mv (the model is not known here).
    """

    x0: float
    d: float
    horizon: float

    def __post_init__(self):
        if self.x0 <= 0.0:
            raise DomainError(f"initial budget must be positive, got {self.x0}")
        if self.d <= 0.0:
            raise DomainError(f"mean target must be positive, got {self.d}")
        if self.horizon <= 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")


def _context(model: MarketModel) -> PartialMomentContext:
    mom = deflator_moments(model, 0.0)
    return PartialMomentContext(m0=mom.m, nu0=mom.nu)


def _residuals(ctx, x0, d, lam, eta):
    delta = lam / eta
    h0 = partial_moment_H(ctx, 0.0, delta)
    h1 = partial_moment_H(ctx, 1.0, delta)
    h2 = partial_moment_H(ctx, 2.0, delta)
    mean_gap = 0.5 * (lam * h0 - eta * h1) - d
    budget_gap = 0.5 * (lam * h1 - eta * h2) - x0
    return mean_gap / max(1.0, abs(d)), budget_gap / max(1.0, x0)


def solve_mv(problem: MvProblem, model: MarketModel) -> Multipliers:
    """Find the multipliers (lam, eta) of the truncated linear payoff.

    The 2x2 system matches the mean and budget constraints.  Newton runs in
    log coordinates so both multipliers stay positive; the starting point is
    the solution of the unconstrained linear problem (no positive part),
    which is exact when the truncation barely binds.

    Raises SolverDiverged if the residuals cannot be pushed below 1e-8 and
    DomainError when d does not exceed risk-free growth of the budget.
    """
    if abs(problem.horizon - model.horizon) > 1e-12:
        raise DomainError(
            f"problem horizon {problem.horizon} != market horizon {model.horizon}"
        )
    ctx = _context(model)
    ez = expected_deflator(model, 0.0, model.horizon)
    if problem.d * ez <= problem.x0:
        raise DomainError(
            "mean target d must exceed the risk-free growth of the budget "
            f"(d={problem.d}, x0/E[z]={problem.x0 / ez:.6g})"
        )
    x0, d = problem.x0, problem.d
    # E[z] and E[z^2] give the linear (untruncated) solve in closed form
    a_mom = partial_moment_H(ctx, 1.0, math.inf)
    c_mom = partial_moment_H(ctx, 2.0, math.inf)
    eta0 = 2.0 * (d * a_mom - x0) / (c_mom - a_mom * a_mom)
    lam0 = 2.0 * d + a_mom * eta0

    def system(u):
        r1, r2 = _residuals(ctx, x0, d, math.exp(u[0]), math.exp(u[1]))
        return np.array([r1, r2])

    report = solve_2d(system, np.array([math.log(lam0), math.log(eta0)]), tol=1e-11)
    lam, eta = math.exp(report.root[0]), math.exp(report.root[1])
    r1, r2 = _residuals(ctx, x0, d, lam, eta)
    if max(abs(r1), abs(r2)) > 1e-8:
        raise SolverDiverged(
            f"mean-variance multiplier solve stalled at residuals ({r1:.3e}, {r2:.3e})",
            report=report,
        )
    return Multipliers(mean=lam, budget=eta, case=MEAN_VARIANCE)


def mv_terminal_wealth(mult: Multipliers, z):
    """Optimal terminal payoff (lam - eta z)^+ / 2; broadcasts over z."""
    z = np.asarray(z, dtype=float)
    out = np.maximum(0.5 * (mult.mean - mult.budget * z), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def mv_second_moment(mult: Multipliers, model: MarketModel) -> float:
    """E[(X*)^2] in closed form from partial moments of order 0, 1, 2."""
    ctx = _context(model)
    delta = mult.mean / mult.budget
    h0 = partial_moment_H(ctx, 0.0, delta)
    h1 = partial_moment_H(ctx, 1.0, delta)
    h2 = partial_moment_H(ctx, 2.0, delta)
    lam, eta = mult.mean, mult.budget
    return 0.25 * (lam * lam * h0 - 2.0 * lam * eta * h1 + eta * eta * h2)


def mv_variance(mult: Multipliers, model: MarketModel, d: float) -> float:
    """Objective value Var[X*] = E[(X*)^2] - d^2 at the solved multipliers."""
    return mv_second_moment(mult, model) - d * d


def mv_wealth(mult: Multipliers, model: MarketModel, t, z):
    """Wealth x*(t, z) of the mean-variance policy; broadcasts over z.

    Within TERMINAL_NU of the horizon the terminal payoff is returned.
    """
    mom = deflator_moments(model, t)
    z = np.asarray(z, dtype=float)
    if mom.nu < TERMINAL_NU:
        return mv_terminal_wealth(mult, z)
    delta = mult.mean / mult.budget
    with np.errstate(divide="ignore"):
        cut = math.log(delta) - np.log(z)
    g1 = truncated_exp_moment(1.0, mom.m, mom.nu, cut)
    g2 = truncated_exp_moment(2.0, mom.m, mom.nu, cut)
    out = 0.5 * (mult.mean * g1 - mult.budget * z * g2)
    return float(out) if np.ndim(out) == 0 else out


def mv_policy(mult: Multipliers, model: MarketModel, t, z):
    """Risky allocation vector(s) of the mean-variance policy.

    Shape (n,) for scalar z, (len(z), n) for a 1-d array.  The scalar
    amount is -z dx*/dz; differentiating mv_wealth makes the density terms
    of the two tilted masses cancel exactly (their prefactors differ by
    lam - eta*delta = 0), leaving eta*z/2 * e^{2m+2nu^2} * Phi(u - 2nu)
    with u the standardized log-distance to the truncation point.
    """
    mom = deflator_moments(model, t)
    if mom.nu < TERMINAL_NU:
        raise PolicyUndefinedAtTerminal(
            f"policy requested at t={t} with remaining deflator volatility {mom.nu:.3e}"
        )
    z = np.asarray(z, dtype=float)
    delta = mult.mean / mult.budget
    u = (math.log(delta) - np.log(z) - mom.m) / mom.nu
    c2 = math.exp(2.0 * mom.m + 2.0 * mom.nu * mom.nu)
    scale = 0.5 * mult.budget * z * c2 * std_normal_cdf(u - 2.0 * mom.nu)
    direction = _gram_inverse_excess(model, t)
    return np.multiply.outer(scale, direction)
