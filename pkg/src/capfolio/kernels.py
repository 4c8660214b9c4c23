"""Scalar special functions underlying every closed form in the suite.

The terminal deflator z(T) is lognormal, ln z(T) ~ N(m0, nu0^2). Everything
the multiplier systems and wealth formulas need reduces to the standard
normal CDF, its inverse, the truncated exponential moment

    E[e^{aY} 1_{Y <= d}] = exp(a mu + a^2 v^2 / 2) Phi((d - mu)/v - a v),
    Y ~ N(mu, v^2),

and the partial moments of z(T) built from it:

    H_p(y) = E[z^p 1_{z <= y}]
    K_p(y) = H_1(y) - H_{p+1}(y) / y^p
    J_p(y) = H_0(y) - H_p(y) / y^p

H_p, K_p, J_p are nondecreasing in y (K_p and J_p are expectations of
nonnegative integrands z(1-(z/y)^p)1 and (1-(z/y)^p)1), which makes the
bracketed-bisection inverses below safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

from .errors import DomainError, TargetOutOfRange

__all__ = [
    "PartialMomentContext",
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_pdf",
    "truncated_exp_moment",
    "partial_moment_H",
    "partial_moment_K",
    "partial_moment_J",
    "invert_K",
    "invert_H1",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(y):
    """Standard normal CDF via the complementary error function.

    Accurate to about 1e-15 relative in the body and deep into both tails,
    because erfc avoids the cancellation Phi(y) = 1 - Phi(-y) would cause.
    Accepts scalars or arrays.
    """
    y = np.asarray(y, dtype=float)
    out = 0.5 * erfc(-y / _SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(y):
    """Standard normal density."""
    y = np.asarray(y, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * y * y)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    """Inverse of std_normal_cdf on (0, 1).

    Raises DomainError outside the open interval.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile needs p in (0, 1), got {p}")
    return float(ndtri(p))


def truncated_exp_moment(a, mu, v, dcut):
    """E[e^{aY} 1_{Y <= dcut}] for Y ~ N(mu, v^2).

    Parameters
    ----------
    a : float
        Exponential tilt.
    mu, v : float
        Mean and standard deviation of Y, v >= 0.
    dcut : float or ndarray
        Truncation point; +inf gives the untruncated moment
        e^{a mu + a^2 v^2/2}, -inf gives 0. Broadcasts over arrays.

    Notes
    -----
    At v = 0 the law is a point mass, so the value is e^{a mu} if mu <= dcut
    and 0 otherwise.
    """
    if v < 0.0:
        raise DomainError(f"standard deviation must be >= 0, got {v}")
    dcut = np.asarray(dcut, dtype=float)
    if v == 0.0:
        out = np.where(mu <= dcut, math.exp(a * mu), 0.0)
        return float(out) if np.ndim(out) == 0 else out
    full = math.exp(a * mu + 0.5 * a * a * v * v)
    # (dcut - mu)/v - a*v evaluates fine at +-inf and the CDF saturates
    out = full * std_normal_cdf((dcut - mu) / v - a * v)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, slots=True)
class PartialMomentContext:
    """Lognormal law of z(T): ln z(T) ~ N(m0, nu0^2), nu0 > 0.

    The degenerate nu0 = 0 market is rejected here; terminal-time limits are
    handled by the policy layer, not by this context.
    """

    m0: float
    nu0: float

    def __post_init__(self):
        if not self.nu0 > 0.0:
            raise DomainError(f"nu0 must be positive, got {self.nu0}")

    def standardize(self, y):
        """F(y) = (ln y - m0) / nu0, the z-score of the deflator level y."""
        with np.errstate(divide="ignore"):
            out = (np.log(np.asarray(y, dtype=float)) - self.m0) / self.nu0
        return float(out) if np.ndim(out) == 0 else out

    @property
    def mean(self) -> float:
        """E[z(T)] = e^{m0 + nu0^2/2}; also the supremum of H_1 and K_p."""
        return math.exp(self.m0 + 0.5 * self.nu0 * self.nu0)


def partial_moment_H(ctx: PartialMomentContext, p, y):
    """H_p(y) = E[z^p 1_{z <= y}] = truncated_exp_moment(p, m0, nu0, ln y).

    H_0 is the CDF of z(T). Requires y > 0 (DomainError otherwise) except
    that y = +inf is allowed and gives the full moment.
    """
    if p < 0.0:
        raise DomainError(f"partial moment order must be >= 0, got {p}")
    if y == math.inf:
        return truncated_exp_moment(p, ctx.m0, ctx.nu0, math.inf)
    if not y > 0.0:
        raise DomainError(f"partial moment level must be positive, got {y}")
    return truncated_exp_moment(p, ctx.m0, ctx.nu0, math.log(y))


def partial_moment_K(ctx: PartialMomentContext, p, y):
    """K_p(y) = H_1(y) - H_{p+1}(y)/y^p, nondecreasing with sup E[z(T)]."""
    if not p > 0.0:
        raise DomainError(f"K_p needs p > 0, got {p}")
    if y == math.inf:
        return ctx.mean
    if not y > 0.0:
        raise DomainError(f"level must be positive, got {y}")
    return partial_moment_H(ctx, 1.0, y) - partial_moment_H(ctx, p + 1.0, y) / y**p


def partial_moment_J(ctx: PartialMomentContext, p, y):
    """J_p(y) = H_0(y) - H_p(y)/y^p, nondecreasing with sup 1."""
    if not p > 0.0:
        raise DomainError(f"J_p needs p > 0, got {p}")
    if y == math.inf:
        return 1.0
    if not y > 0.0:
        raise DomainError(f"level must be positive, got {y}")
    return partial_moment_H(ctx, 0.0, y) - partial_moment_H(ctx, p, y) / y**p


def _invert_monotone(f, target, sup, ctx, what):
    """Invert a nondecreasing f with range (0, sup) by bracketed bisection.

    The bracket is seeded around the deflator's median e^{m0} and expanded
    geometrically (4 log-spaced probes per side) until it straddles the
    target; monotonicity guarantees this terminates for targets in range.
    """
    if not 0.0 < target < sup:
        raise TargetOutOfRange(
            f"{what} target {target} outside the open range (0, {sup})"
        )
    lo = hi = math.exp(ctx.m0)
    flo = fhi = f(lo)
    step = math.exp(ctx.nu0)
    for _ in range(64):
        if flo < target:
            break
        hi, fhi = lo, flo
        lo /= step
        flo = f(lo)
        step *= step
    step = math.exp(ctx.nu0)
    for _ in range(64):
        if fhi > target:
            break
        lo, flo = hi, fhi
        hi *= step
        fhi = f(hi)
        step *= step
    if not (flo < target < fhi or flo == target or fhi == target):
        raise TargetOutOfRange(f"{what}: could not bracket target {target}")
    for _ in range(200):
        mid = math.sqrt(lo * hi)  # bisect in log space
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def invert_K(ctx: PartialMomentContext, p, target):
    """Unique y with K_p(y) = target, for target in (0, E[z(T)])."""
    return _invert_monotone(
        lambda y: partial_moment_K(ctx, p, y), target, ctx.mean, ctx, "invert_K"
    )


def invert_H1(ctx: PartialMomentContext, target):
    """Unique y with H_1(y) = target, for target in (0, E[z(T)])."""
    return _invert_monotone(
        lambda y: partial_moment_H(ctx, 1.0, y), target, ctx.mean, ctx, "invert_H1"
    )
