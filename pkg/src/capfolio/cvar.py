"""Mean-CVaR policy via reduction to a family of first-order shortfall problems.

The loss of a terminal wealth X against the safe level xbar is f = xbar - X.
For a fixed auxiliary level alpha, minimizing E[(f - alpha)_+] is the same
shortfall problem as the q=1 downside module with benchmark gamma = xbar -
alpha, so

    J(alpha) = alpha + E[(gamma_alpha - X*)_+] / (1 - beta)

and CVaR_beta(f) = min_alpha J(alpha).  J is convex in alpha; the search is
golden section over [xbar - B, xbar] by default, with the finite-difference
gradient walk available behind an option for cross-checking.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from . import lpm
from .errors import DomainError, InfeasibleBudget, MaxIterations, TargetTooHigh
from .market import MarketModel, expected_deflator
from .solvers import SolveReport, minimize_scalar_convex

GOLDEN_SECTION = "GoldenSection"
PAPER_GRADIENT = "PaperGradient"

# alpha values are quantized on this grid when caching embedded solves
_ALPHA_QUANTUM = 1e-12


@dataclass(frozen=True, slots=True)
class CvarProblem:
    """Mean-CVaR problem data.

    x0      initial budget (> 0)
    d       mean target for terminal wealth
    cap     upper bound B on terminal wealth, cap > max(d, safe level)
    beta    CVaR confidence level in (0, 1)
    horizon investment horizon T
    xbar    safe level the loss is measured against; None means the
            risk-free growth of the budget, resolved against the market
            by safe_level().
    """

    x0: float
    d: float
    cap: float
    beta: float
    horizon: float
    xbar: float | None = None

    def __post_init__(self):
        if self.x0 <= 0.0:
            raise DomainError(f"initial budget must be positive, got {self.x0}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"confidence level must lie in (0,1), got {self.beta}")
        if self.horizon <= 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.cap <= self.d:
            raise DomainError(
                f"wealth cap {self.cap} must exceed the mean target {self.d}"
            )
        if self.xbar is not None and self.cap <= self.xbar:
            raise DomainError(
                f"wealth cap {self.cap} must exceed the safe level {self.xbar}"
            )


@dataclass(frozen=True, slots=True)
class AlphaSearchTrace:
    """Record of a one-dimensional search over the auxiliary level alpha."""

    evaluated: tuple  # ordered (alpha, J(alpha)) pairs, every evaluation
    alpha_star: float
    j_star: float
    method: str


@dataclass(frozen=True, slots=True)
class AlphaSearchOptions:
    """Knobs for search_alpha; defaults reproduce the golden-section path."""

    method: str = GOLDEN_SECTION
    alpha0: float = 0.0
    fd_step: float | None = None  # None -> 1e-5 * safe level
    step: float = 1.0
    grad_tol: float = 1e-7
    golden_tol: float = 1e-8
    max_iter: int = 500


@dataclass(frozen=True, slots=True)
class CvarSolution:
    """Solved mean-CVaR instance.

    policy is the embedded shortfall solution at alpha_star (benchmark
    xbar - alpha_star, q=1); pass it to the downside module's wealth and
    policy evaluators unchanged.  cvar equals trace.j_star.
    """

    problem: CvarProblem
    xbar: float
    alpha_star: float
    cvar: float
    policy: lpm.PolicySolution
    trace: AlphaSearchTrace


def safe_level(problem: CvarProblem, model: MarketModel) -> float:
    """Resolve the loss benchmark: explicit xbar, else x0 at risk-free growth."""
    if problem.xbar is not None:
        return problem.xbar
    grown = problem.x0 / expected_deflator(model, 0.0, model.horizon)
    if problem.cap <= grown:
        raise DomainError(
            f"wealth cap {problem.cap} must exceed the default safe level {grown:.6g}"
        )
    return grown


class _EmbeddedFamily:
    """Shortfall instances gamma = xbar - alpha, cached on a quantized alpha grid."""

    def __init__(self, problem: CvarProblem, model: MarketModel):
        self.problem = problem
        self.model = model
        self.xbar = safe_level(problem, model)
        self._cache: dict[int, object] = {}

    def _embedded(self, alpha: float) -> lpm.LpmProblem:
        return lpm.LpmProblem(
            x0=self.problem.x0,
            d=self.problem.d,
            gamma=self.xbar - alpha,
            cap=self.problem.cap,
            q=1.0,
            horizon=self.problem.horizon,
        )

    def solution(self, alpha: float):
        """Solved embedded instance, None when the benchmark is nonpositive."""
        if alpha >= self.xbar:
            return None
        key = round(alpha / _ALPHA_QUANTUM)
        if key not in self._cache:
            try:
                self._cache[key] = lpm.solve_lpm(self._embedded(alpha), self.model)
            except TargetTooHigh:
                self._cache[key] = TargetTooHigh
        found = self._cache[key]
        if found is TargetTooHigh:
            raise TargetTooHigh(
                f"mean target {self.problem.d} unattainable in the embedded "
                f"shortfall problem at alpha={alpha}"
            )
        return found

    def j(self, alpha: float) -> float:
        if alpha >= self.xbar:
            return alpha
        try:
            sol = self.solution(alpha)
        except TargetTooHigh:
            return math.inf
        return alpha + sol.objective_value / (1.0 - self.problem.beta)


def underline_d_of_alpha(problem: CvarProblem, model: MarketModel, alpha) -> float:
    """Smallest binding mean target of the embedded problem at this alpha.

    Returns 0 once the benchmark xbar - alpha is nonpositive, where no
    shortfall is possible and the mean constraint never conflicts.
    """
    family = _EmbeddedFamily(problem, model)
    if alpha >= family.xbar:
        return 0.0
    return lpm.d_bounds(family._embedded(alpha), model)[0]


def j_value(problem: CvarProblem, model: MarketModel, alpha) -> float:
    """Objective J(alpha); +inf sentinel when the mean target is unattainable."""
    return _EmbeddedFamily(problem, model).j(float(alpha))


def search_alpha(
    problem: CvarProblem,
    model: MarketModel,
    options: AlphaSearchOptions | None = None,
) -> AlphaSearchTrace:
    """Minimize J over alpha in [xbar - cap, xbar] and record the trace.

    GoldenSection brackets the convex J directly.  PaperGradient walks a
    forward-difference gradient kappa = (J(a + zeta) - J(a)) / zeta with
    backtracking on the step so J never increases; iteration stops when
    |kappa| <= grad_tol.  The descent update is alpha - step * kappa (the
    sign that decreases J).  Raises MaxIterations with the best alpha so
    far in the report when the gradient walk exhausts max_iter.
    """
    opts = options or AlphaSearchOptions()
    family = _EmbeddedFamily(problem, model)
    lo = family.xbar - problem.cap
    hi = family.xbar
    record: list[tuple[float, float]] = []

    def j(alpha: float) -> float:
        value = family.j(alpha)
        record.append((alpha, value))
        return value

    if opts.method == GOLDEN_SECTION:
        alpha_star = float(minimize_scalar_convex(j, lo, hi, tol=opts.golden_tol).root)
        j_star = j(alpha_star)
        return AlphaSearchTrace(
            evaluated=tuple(record),
            alpha_star=alpha_star,
            j_star=j_star,
            method=GOLDEN_SECTION,
        )
    if opts.method != PAPER_GRADIENT:
        raise DomainError(f"unknown search method {opts.method!r}")

    zeta = opts.fd_step if opts.fd_step is not None else 1e-5 * family.xbar
    # keep alpha + zeta inside the window so the probe stays meaningful
    clip = lambda a: min(max(a, lo), hi - zeta)
    alpha = clip(opts.alpha0)
    j_here = j(alpha)
    kappa = math.inf
    for _ in range(opts.max_iter):
        kappa = (j(alpha + zeta) - j_here) / zeta
        if abs(kappa) <= opts.grad_tol:
            return AlphaSearchTrace(
                evaluated=tuple(record),
                alpha_star=alpha,
                j_star=j_here,
                method=PAPER_GRADIENT,
            )
        step = opts.step
        moved = False
        while step * abs(kappa) > 1e-15:
            candidate = clip(alpha - step * kappa)
            j_cand = j(candidate)
            if j_cand <= j_here:
                alpha, j_here, moved = candidate, j_cand, True
                break
            step *= 0.5
        if not moved:
            # no descent at any step length: alpha sits at the minimum
            # within finite-difference resolution
            return AlphaSearchTrace(
                evaluated=tuple(record),
                alpha_star=alpha,
                j_star=j_here,
                method=PAPER_GRADIENT,
            )
    raise MaxIterations(
        f"gradient search for alpha* did not converge in {opts.max_iter} "
        f"iterations (last |kappa|={abs(kappa):.3e})",
        report=SolveReport(
            root=alpha,
            residual_norm=abs(kappa),
            iterations=opts.max_iter,
            converged=False,
        ),
    )


def solve_cvar(
    problem: CvarProblem,
    model: MarketModel,
    options: AlphaSearchOptions | None = None,
) -> CvarSolution:
    """Solve the mean-CVaR problem end to end.

    Searches for alpha*, then re-solves the embedded shortfall problem at
    alpha* so the returned policy carries its multipliers, thresholds, and
    case tag.  Raises TargetTooHigh when d is unattainable at the cap and
    InfeasibleBudget when the budget already exceeds the capped payoff.
    """
    family = _EmbeddedFamily(problem, model)
    probe = family._embedded(family.xbar - problem.cap)
    d_low, d_high = lpm.d_bounds(probe, model)  # d_high does not depend on alpha
    if problem.d >= d_high:
        raise TargetTooHigh(
            f"mean target {problem.d} is not attainable below the cap "
            f"{problem.cap} (supremum {d_high:.6g})"
        )
    trace = search_alpha(problem, model, options)
    embedded = family.solution(trace.alpha_star)
    if embedded is None:
        raise DomainError(
            f"search returned alpha={trace.alpha_star} at or above the safe level"
        )
    return CvarSolution(
        problem=problem,
        xbar=family.xbar,
        alpha_star=trace.alpha_star,
        cvar=trace.j_star,
        policy=embedded,
        trace=trace,
    )


@dataclass(frozen=True, slots=True)
class FrontierRow:
    d: float
    alpha_star: float
    cvar: float
    status: str


def frontier(
    problem: CvarProblem,
    model: MarketModel,
    d_grid,
    beta: float | None = None,
    options: AlphaSearchOptions | None = None,
) -> list[FrontierRow]:
    """One solve per mean target; infeasible rows keep a status, NaN values."""
    rows = []
    for d in d_grid:
        instance = dataclasses.replace(
            problem, d=float(d), beta=problem.beta if beta is None else beta
        )
        try:
            solved = solve_cvar(instance, model, options)
        except (TargetTooHigh, InfeasibleBudget) as exc:
            rows.append(
                FrontierRow(
                    d=float(d),
                    alpha_star=math.nan,
                    cvar=math.nan,
                    status=type(exc).__name__,
                )
            )
            continue
        rows.append(
            FrontierRow(
                d=float(d),
                alpha_star=solved.alpha_star,
                cvar=solved.cvar,
                status="ok",
            )
        )
    return rows
