"""Dense bounded-variable revised simplex.

Solves   min c'x   s.t.   A x = b,   lo <= x <= up   (entries may be +-inf).

Two phases: phase 1 adds one signed artificial per row (coefficient
sign(residual), cost 1) so the artificial block starts feasible at the
absolute row residuals; artificials that remain basic at zero are frozen to
the [0, 0] box for phase 2 instead of being pivoted out, which keeps the
logic short and the basis nonsingular.  Pricing is Dantzig, falling back to
Bland's rule while the objective stalls (which protects against cycling on
the heavily degenerate scenario LPs this package feeds in) and reverting to
Dantzig as soon as the value moves again.

The basis matrix is refactorized with a fresh LU at every pivot; at the
few hundred rows used here that is cheaper than maintaining an update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from .errors import DimensionMismatch, NumericalBreakdown

AT_LO = 0
AT_UP = 1
FREE_ZERO = 2
IN_BASIS = 3

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
# consecutive non-improving iterations before pricing falls back to Bland
_STALL_LIMIT = 100


@dataclass(frozen=True, slots=True)
class LinearProgram:
    """min cost'x subject to a_eq x = b_eq and box bounds on x."""

    cost: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        m, n = self.a_eq.shape
        for name, arr, want in (
            ("cost", self.cost, n),
            ("b_eq", self.b_eq, m),
            ("lower", self.lower, n),
            ("upper", self.upper, n),
        ):
            if arr.shape != (want,):
                raise DimensionMismatch(f"{name} has shape {arr.shape}, want ({want},)")
        if np.any(self.lower > self.upper):
            raise DimensionMismatch("some lower bound exceeds its upper bound")


def make_lp(cost, a_eq, b_eq, lower=None, upper=None) -> LinearProgram:
    """Assemble a LinearProgram from array-likes; bounds default to [0, inf)."""
    cost = np.asarray(cost, dtype=float)
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float)
    n = cost.shape[0]
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, math.inf) if upper is None else np.asarray(upper, dtype=float)
    return LinearProgram(cost, a_eq, b_eq, lower, upper)


@dataclass(frozen=True, slots=True)
class SimplexResult:
    status: str
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    iterations: int


class _Tableau:
    """Mutable working state shared by the two phases."""

    def __init__(self, a, b, lo, up):
        self.a = a
        self.b = b
        self.lo = lo
        self.up = up
        self.m, self.n = a.shape
        self.status = np.where(
            np.isfinite(lo), AT_LO, np.where(np.isfinite(up), AT_UP, FREE_ZERO)
        ).astype(np.int8)
        self.basis = np.empty(0, dtype=int)
        self.x = np.empty(self.n)
        self.iterations = 0
        # pricing scratch: masks hold 0.0 where the move is allowed, -inf
        # where it is not, so `mask - rc` disables forbidden moves in one pass
        self._mask_up = np.empty(self.n)
        self._mask_dn = np.empty(self.n)
        self._gain_up = np.empty(self.n)
        self._gain_dn = np.empty(self.n)
        self._gain = np.empty(self.n)
        self._rc = np.empty(self.n)
        self.rebuild_masks()

    def rebuild_masks(self):
        """Recompute the pricing masks after any bulk edit of `status`."""
        raisable = (self.status == AT_LO) | (self.status == FREE_ZERO)
        lowerable = (self.status == AT_UP) | (self.status == FREE_ZERO)
        self._mask_up[:] = np.where(raisable, 0.0, -math.inf)
        self._mask_dn[:] = np.where(lowerable, 0.0, -math.inf)

    def _set_status(self, j, s):
        self.status[j] = s
        self._mask_up[j] = 0.0 if s == AT_LO or s == FREE_ZERO else -math.inf
        self._mask_dn[j] = 0.0 if s == AT_UP or s == FREE_ZERO else -math.inf

    def nonbasic_values(self):
        x = np.where(self.status == AT_LO, self.lo, 0.0)
        x = np.where(self.status == AT_UP, self.up, x)
        return np.where(self.status == FREE_ZERO, 0.0, x)

    def refresh(self, values_only=False):
        """Recompute basic values from scratch, refactorizing unless told not to."""
        self.x = self.nonbasic_values()
        self.x[self.basis] = 0.0
        rhs = self.b - self.a @ self.x
        if self.m == 0:
            self.factors = None
            return
        if not values_only:
            self.refactor()
        x_b = lu_solve(self.factors, rhs, check_finite=False)
        if not np.all(np.isfinite(x_b)):
            raise NumericalBreakdown("singular basis: non-finite basic values")
        self.x[self.basis] = x_b

    def refactor(self):
        try:
            self.factors = lu_factor(self.a[:, self.basis], check_finite=False)
        except (LinAlgError, ValueError) as exc:
            raise NumericalBreakdown(f"singular basis: {exc}") from exc

    def duals_for(self, cost):
        if self.m == 0:
            return np.zeros(0)
        return lu_solve(self.factors, cost[self.basis], trans=1, check_finite=False)

    def reduced_costs(self, cost):
        if self.m:
            pi = self.duals_for(cost)
            np.dot(pi, self.a, out=self._rc)
            np.subtract(cost, self._rc, out=self._rc)
        else:
            np.copyto(self._rc, cost)
        return self._rc

    def run_phase(self, cost, max_iter, allow_unbounded):
        """Iterate to optimality of `cost`; returns UNBOUNDED or OPTIMAL.

        Bound flips leave the basis, the duals, and every reduced cost
        untouched, so those are recomputed only after a genuine pivot.  The
        variable values and the objective are patched incrementally on every
        step (the exact update is rc[j] times the displacement) and recomputed
        from scratch every so often to wash out float drift.
        """
        bland = False
        stall = 0
        best = math.inf
        steps_since_refresh = 0
        self.refresh()
        value = float(cost @ self.x)
        rc = None
        while True:
            self.iterations += 1
            if self.iterations > max_iter:
                raise NumericalBreakdown(
                    f"simplex exceeded {max_iter} iterations (degenerate cycling?)"
                )
            if value < best - 1e-12 * max(1.0, abs(best)):
                # progress resumed, so drop back to the fast Dantzig pricing
                best, stall, bland = value, 0, False
            else:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
            if rc is None:
                rc = self.reduced_costs(cost)
            entering, direction = self._pick_entering(rc, bland)
            if entering < 0:
                self.refresh(values_only=True)
                return OPTIMAL
            outcome, moved = self._pivot(entering, direction, allow_unbounded, bland)
            if outcome == "unbounded":
                return UNBOUNDED
            value += float(rc[entering]) * moved
            steps_since_refresh += 1
            if outcome == "pivot":
                if steps_since_refresh >= 512:
                    self.refresh()
                    value = float(cost @ self.x)
                    steps_since_refresh = 0
                else:
                    self.refactor()
                rc = None
            elif steps_since_refresh >= 512:
                self.refresh(values_only=True)
                value = float(cost @ self.x)
                steps_since_refresh = 0

    def _pick_entering(self, rc, bland):
        # gain > 0 marks a profitable move; direction +1 raises the variable
        gain_up = np.subtract(self._mask_up, rc, out=self._gain_up)
        gain_dn = np.add(self._mask_dn, rc, out=self._gain_dn)
        gain = np.maximum(gain_up, gain_dn, out=self._gain)
        if bland:
            j = int(np.argmax(gain > _COST_TOL))  # first profitable index
        else:
            j = int(np.argmax(gain))
        if gain[j] <= _COST_TOL:
            return -1, 0
        return j, 1 if gain_up[j] >= gain_dn[j] else -1

    def _pivot(self, j, direction, allow_unbounded, bland):
        """Move variable j in +-1 `direction`.

        Returns a pair (outcome, moved) where outcome is "flip" (bound flip,
        basis intact), "pivot" (basis changed, caller must refactorize), or
        "unbounded", and moved is the signed displacement of variable j.
        Values are patched in place for both flips and pivots.
        """
        if self.m:
            d = lu_solve(self.factors, self.a[:, j], check_finite=False) * direction
        else:
            d = np.zeros(0)
        span = self.up[j] - self.lo[j]  # may be inf
        t_max, leaving, leave_to = span, -1, AT_LO
        x_b = self.x[self.basis]
        lo_b, up_b = self.lo[self.basis], self.up[self.basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = np.where(d > _PIVOT_TOL, (x_b - lo_b) / d, math.inf)
            t_up = np.where(d < -_PIVOT_TOL, (up_b - x_b) / (-d), math.inf)
        t_basic = np.minimum(t_lo, t_up)
        if t_basic.size:
            t_star = float(t_basic.min())
            if t_star < t_max:
                ties = np.flatnonzero(t_basic <= t_star + 1e-12)
                if bland:
                    # Bland breaks ratio ties by smallest variable index
                    i = int(ties[np.argmin(self.basis[ties])])
                else:
                    # otherwise prefer the largest pivot element for stability
                    i = int(ties[np.argmax(np.abs(d[ties]))])
                t_max = float(max(t_basic[i], 0.0))
                leaving = i
                leave_to = AT_LO if t_lo[i] <= t_up[i] else AT_UP
        if math.isinf(t_max):
            if allow_unbounded:
                return "unbounded", 0.0
            raise NumericalBreakdown("phase-1 objective unbounded; inconsistent data")
        if leaving < 0:
            # the entering variable crosses its whole box: plain bound flip
            self._set_status(j, AT_UP if direction > 0 else AT_LO)
            self.x[j] = self.up[j] if direction > 0 else self.lo[j]
            self.x[self.basis] = x_b - t_max * d
            return "flip", direction * t_max
        out = self.basis[leaving]
        new_b = x_b - t_max * d
        # snap the leaving variable onto its bound to kill roundoff residue
        new_b[leaving] = self.lo[out] if leave_to == AT_LO else self.up[out]
        self.x[self.basis] = new_b
        self.x[j] += direction * t_max
        self._set_status(out, leave_to)
        self._set_status(j, IN_BASIS)
        self.basis[leaving] = j
        return "pivot", direction * t_max


def solve_dense(lp: LinearProgram, start_status=None) -> SimplexResult:
    """Two-phase bounded-variable revised simplex on dense arrays.

    `start_status` optionally places each structural variable at AT_LO,
    AT_UP, or FREE_ZERO before phase 1 (a crash start).  Phase 1 repairs
    whatever infeasibility the placement leaves, so a good guess only saves
    iterations and a bad one costs nothing but iterations.
    """
    a, b = lp.a_eq, lp.b_eq
    m, n = a.shape
    scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    max_iter = 2000 + 50 * (m + n)

    # phase 1: signed artificials make the start feasible
    tab = _Tableau(
        np.hstack([a, np.zeros((m, m))]) if m else a.copy(),
        b,
        np.concatenate([lp.lower, np.zeros(m)]),
        np.concatenate([lp.upper, np.full(m, math.inf)]),
    )
    if start_status is not None:
        placed = np.asarray(start_status, dtype=np.int8)
        if placed.shape != (n,):
            raise DimensionMismatch(f"start_status has shape {placed.shape}, want ({n},)")
        bad = (
            ((placed == AT_LO) & ~np.isfinite(lp.lower))
            | ((placed == AT_UP) & ~np.isfinite(lp.upper))
            | ((placed == FREE_ZERO) & (np.isfinite(lp.lower) | np.isfinite(lp.upper)))
            | ~np.isin(placed, (AT_LO, AT_UP, FREE_ZERO))
        )
        if np.any(bad):
            raise DimensionMismatch("start_status places a variable at a missing bound")
        tab.status[:n] = placed
    start = tab.nonbasic_values()[:n]
    residual = b - a @ start
    for i in range(m):
        tab.a[i, n + i] = 1.0 if residual[i] >= 0.0 else -1.0
    tab.basis = np.arange(n, n + m)
    tab.status[n:] = IN_BASIS
    tab.rebuild_masks()
    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    tab.run_phase(phase1_cost, max_iter, allow_unbounded=False)
    if float(phase1_cost @ tab.x) > 1e-7 * scale:
        return SimplexResult(INFEASIBLE, None, math.nan, None, tab.iterations)

    # freeze artificials at zero; any still basic are degenerate and harmless
    tab.lo[n:] = 0.0
    tab.up[n:] = 0.0
    artificial = tab.status[n:] != IN_BASIS
    tab.status[n:][artificial] = AT_LO
    tab.rebuild_masks()

    phase2_cost = np.concatenate([lp.cost, np.zeros(m)])
    status = tab.run_phase(phase2_cost, max_iter, allow_unbounded=True)
    if status == UNBOUNDED:
        return SimplexResult(UNBOUNDED, None, -math.inf, None, tab.iterations)
    x = tab.x[:n].copy()
    duals = np.asarray(tab.duals_for(phase2_cost))
    return SimplexResult(OPTIMAL, x, float(lp.cost @ x), duals, tab.iterations)
