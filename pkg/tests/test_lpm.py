"""Shortfall solver: frozen reference values, quadrature cross-checks, cases."""
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import erfc

from capfolio import lpm
from capfolio.errors import (
    InfeasibleBudget,
    PolicyUndefinedAtTerminal,
    TargetTooHigh,
)

# Calibrated single-asset instance: r=0.06, mu=0.12, sigma=0.15, T=1,
# x0=1, benchmark gamma = e^{0.06}, target d=1.3.
GAMMA = math.exp(0.06)
M0, NU0 = -0.14, 0.4

# Multiplier pairs (mean, budget) frozen from an independent
# quadrature probe of the constraint system, run before this package existed.
FROZEN_MULT = {
    (10.0, 1.0): (0.326132, 0.785214),
    (10.0, 2.0): (0.166593, 0.389835),
    (15.0, 1.0): (0.2863, 0.7463),
    (15.0, 2.0): (0.1325, 0.3368),
    (20.0, 1.0): (0.2638, 0.7240),
    (20.0, 2.0): (0.1147, 0.3075),
    (30.0, 1.0): (0.2377, 0.6976),
    (30.0, 2.0): (0.0953, 0.2739),
}

# Cap-hit probabilities P(X* = B) frozen from the same probe.
FROZEN_HIT = {
    (10.0, 1.0): 0.032400,
    (10.0, 2.0): 0.037913,
    (15.0, 1.0): 0.020405,
    (15.0, 2.0): 0.023727,
    (20.0, 1.0): 0.014857,
    (20.0, 2.0): 0.017199,
    (30.0, 1.0): 0.009598,
    (30.0, 2.0): 0.011043,
}

D_UPPER_B10 = 1.9847461521036533  # frozen independent-probe value
Q2_OBJECTIVE = 0.01589222  # frozen probe value of E[((gamma - X*)+)^2] at B=10, d=1.3


def _problem(q, cap=10.0, d=1.3, x0=1.0, gamma=GAMMA):
    return lpm.LpmProblem(x0=x0, d=d, gamma=gamma, cap=cap, q=q, horizon=1.0)


def _phi(u):
    return 0.5 * erfc(-u / math.sqrt(2.0))


def _h_ref(p, y, m=M0, nu=NU0):
    """Reference partial moment built directly on erfc, outside the package."""
    if y <= 0.0:
        return 0.0
    return math.exp(p * m + 0.5 * p * p * nu * nu) * _phi(
        (math.log(y) - m) / nu - p * nu
    )


def _expect(g, kinks=()):
    """E[g(z)] under ln z ~ N(M0, NU0^2) by adaptive quadrature.

    `kinks` lists z levels where the integrand may lose smoothness; they are
    mapped to the standardized axis and handed to quad as split points.
    """
    pts = sorted(
        (math.log(k) - M0) / NU0 for k in kinks if k > 0.0 and math.isfinite(k)
    )
    val, err = quad(
        lambda u: g(math.exp(M0 + NU0 * u))
        * math.exp(-0.5 * u * u)
        / math.sqrt(2.0 * math.pi),
        -14.0,
        14.0,
        limit=500,
        points=[p for p in pts if -14.0 < p < 14.0] or None,
    )
    assert err < 5e-8
    return val


def _payoff_kinks(sol):
    if sol.rho is None:
        return (sol.delta,)
    return (sol.delta, sol.delta + sol.rho)


@pytest.mark.parametrize("cap,q", sorted(FROZEN_MULT))
def test_multipliers_match_frozen_probe(example1, cap, q):
    mult = lpm.solve_multipliers(_problem(q, cap=cap), example1)
    want_mean, want_budget = FROZEN_MULT[(cap, q)]
    tol = 2e-6 if cap == 10.0 else 1e-4
    assert mult.mean == pytest.approx(want_mean, abs=tol)
    assert mult.budget == pytest.approx(want_budget, abs=tol)
    assert mult.case == lpm.REGULAR


@pytest.mark.parametrize("cap,q", sorted(FROZEN_HIT))
def test_hit_probabilities_match_frozen_probe(example1, cap, q):
    sol = lpm.solve_lpm(_problem(q, cap=cap), example1)
    assert sol.hit_prob == pytest.approx(FROZEN_HIT[(cap, q)], abs=1e-6)


@pytest.mark.parametrize("q", [1.0, 2.0])
def test_hit_probability_strictly_decreasing_in_cap(example1, q):
    probs = [
        lpm.solve_lpm(_problem(q, cap=cap), example1).hit_prob
        for cap in (10.0, 15.0, 20.0, 30.0)
    ]
    assert all(b < a for a, b in zip(probs, probs[1:]))


def test_d_bounds_example1(example1):
    lo, hi = lpm.d_bounds(_problem(1.0), example1)
    # x0 - gamma E[z] = 0 exactly, so the lower bound sits at gamma itself
    assert lo == pytest.approx(GAMMA, abs=1e-12)
    assert hi == pytest.approx(D_UPPER_B10, rel=1e-9)


def test_d_upper_against_independent_inversion(example1):
    # d_upper = B H_0(y) at the y where B H_1(y) spends the whole budget
    cap = 10.0
    y_star = brentq(lambda s: cap * _h_ref(1.0, math.exp(s)) - 1.0, -12.0, 4.0)
    want = cap * _h_ref(0.0, math.exp(y_star))
    _, hi = lpm.d_bounds(_problem(1.0), example1)
    assert hi == pytest.approx(want, rel=1e-9)


def test_poor_instance_bounds_against_independent_inversion(example1):
    # x0 = 0.7 < gamma E[z] = 1: the benchmark is not affordable
    x0 = 0.7
    prob = _problem(1.0, x0=x0, d=1.05)
    rho_hat = math.exp(
        brentq(lambda s: GAMMA * _h_ref(1.0, math.exp(s)) - x0, -12.0, 4.0)
    )
    want_lo = GAMMA * _h_ref(0.0, rho_hat)
    y_star = math.exp(
        brentq(lambda s: 10.0 * _h_ref(1.0, math.exp(s)) - x0, -12.0, 4.0)
    )
    want_hi = 10.0 * _h_ref(0.0, y_star)
    lo, hi = lpm.d_bounds(prob, example1)
    assert lo == pytest.approx(want_lo, rel=1e-9)
    assert hi == pytest.approx(want_hi, rel=1e-9)


def test_poor_instance_bounds_q2_use_smooth_branch(example1):
    x0 = 0.7
    lo_q2, _ = lpm.d_bounds(_problem(2.0, x0=x0, d=1.05), example1)
    # independent route: rho from K_1(rho) = x0/gamma, then d = gamma J_1(rho)
    k1 = lambda y: _h_ref(1.0, y) - _h_ref(2.0, y) / y
    j1 = lambda y: _h_ref(0.0, y) - _h_ref(1.0, y) / y
    rho_hat = math.exp(brentq(lambda s: k1(math.exp(s)) - x0 / GAMMA, -12.0, 6.0))
    assert lo_q2 == pytest.approx(GAMMA * j1(rho_hat), rel=1e-8)
    # the smooth payoff reaches a lower minimal mean than the flat one
    lo_q1, _ = lpm.d_bounds(_problem(1.0, x0=x0, d=1.05), example1)
    assert lo_q2 < lo_q1


def test_q2_objective_value(example1):
    sol = lpm.solve_lpm(_problem(2.0), example1)
    assert sol.objective_value == pytest.approx(Q2_OBJECTIVE, abs=2e-8)


@pytest.mark.parametrize("q", [0.0, 0.5, 1.0, 2.0])
def test_constraints_hold_by_quadrature(example1, q):
    sol = lpm.solve_lpm(_problem(q), example1)
    kinks = _payoff_kinks(sol)
    budget = _expect(lambda z: z * lpm.terminal_wealth(sol, z), kinks)
    mean = _expect(lambda z: lpm.terminal_wealth(sol, z), kinks)
    assert budget == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(1.3, abs=1e-8)


@pytest.mark.parametrize("q", [0.0, 0.5, 1.0, 2.0])
def test_objective_matches_quadrature(example1, q):
    sol = lpm.solve_lpm(_problem(q), example1)
    kinks = _payoff_kinks(sol)
    if q == 0.0:
        want = _expect(
            lambda z: 1.0 if lpm.terminal_wealth(sol, z) < GAMMA else 0.0, kinks
        )
    else:
        want = _expect(
            lambda z: max(GAMMA - lpm.terminal_wealth(sol, z), 0.0) ** q, kinks
        )
    assert sol.objective_value == pytest.approx(want, abs=1e-7)


@pytest.mark.parametrize("q", [0.5, 1.0, 2.0])
def test_expected_terminal_wealth_closed_form(example1, q):
    sol = lpm.solve_lpm(_problem(q), example1)
    want = _expect(lambda z: lpm.terminal_wealth(sol, z), _payoff_kinks(sol))
    assert lpm.expected_terminal_wealth(sol) == pytest.approx(want, abs=1e-9)


def test_multiplier_threshold_identity(example1):
    # the cap threshold delta equals the multiplier ratio mean/budget
    for q in (0.5, 1.0, 2.0):
        sol = lpm.solve_lpm(_problem(q), example1)
        assert sol.multipliers.mean / sol.multipliers.budget == pytest.approx(
            sol.delta, rel=1e-9
        )


def test_terminal_wealth_shape_flat_case(example1):
    sol = lpm.solve_lpm(_problem(1.0), example1)
    z = np.geomspace(1e-4, 1e3, 400)
    x = lpm.terminal_wealth(sol, z)
    assert np.all(np.diff(x) <= 1e-12)
    assert np.all((x >= 0.0) & (x <= 10.0))
    assert lpm.terminal_wealth(sol, sol.delta * 0.5) == 10.0
    assert lpm.terminal_wealth(sol, sol.delta + 0.5 * sol.rho) == GAMMA
    assert lpm.terminal_wealth(sol, (sol.delta + sol.rho) * 4.0) == 0.0


def test_terminal_wealth_shape_smooth_case(example1):
    sol = lpm.solve_lpm(_problem(2.0), example1)
    hi = sol.delta + sol.rho
    # the middle branch is linear in z and meets gamma at delta
    assert lpm.terminal_wealth(sol, sol.delta + 1e-12) == pytest.approx(
        GAMMA, abs=1e-9
    )
    mid = 0.5 * (sol.delta + hi)
    want = GAMMA - 0.5 * sol.multipliers.budget * (mid - sol.delta)
    assert lpm.terminal_wealth(sol, mid) == pytest.approx(want, rel=1e-12)
    assert lpm.terminal_wealth(sol, hi * 1.0001) == 0.0


def test_wealth_at_start_recovers_budget(example1):
    for q in (0.0, 0.5, 1.0, 2.0):
        sol = lpm.solve_lpm(_problem(q), example1)
        assert lpm.wealth(sol, 0.0, 1.0) == pytest.approx(1.0, abs=1e-10)


def test_wealth_approaches_terminal_payoff(example1):
    sol = lpm.solve_lpm(_problem(1.0), example1)
    z = np.array([0.3, 0.8, 1.1])
    near = lpm.wealth(sol, 1.0 - 1e-9, z)
    np.testing.assert_allclose(near, lpm.terminal_wealth(sol, z), atol=1e-9)


def test_wealth_stays_inside_envelope(example1):
    for q in (1.0, 2.0):
        sol = lpm.solve_lpm(_problem(q), example1)
        for t in (0.0, 0.4, 0.9):
            lo, hi = lpm.wealth_envelope(sol.problem, example1, t)
            x = lpm.wealth(sol, t, np.geomspace(1e-3, 1e2, 200))
            # the open bounds saturate to machine precision deep in either tail
            assert np.all(x >= lo)
            assert np.all(x <= hi * (1.0 + 1e-12))


def _fd_policy_scalar(sol, t, z, h=1e-6):
    xm = lpm.wealth(sol, t, z * (1.0 - h))
    xp = lpm.wealth(sol, t, z * (1.0 + h))
    dxdz = (xp - xm) / (2.0 * h * z)
    # single asset: pi = -z dx/dz (mu - r) / sigma^2
    return -z * dxdz * 0.06 / 0.15**2


@pytest.mark.parametrize("q", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
def test_policy_matches_finite_difference(example1, q, t):
    sol = lpm.solve_lpm(_problem(q), example1)
    z = np.geomspace(0.05, 5.0, 60)
    want = _fd_policy_scalar(sol, t, z)
    got = lpm.policy(sol, t, z)[:, 0]
    # atol covers the roundoff floor of the central difference, about
    # eps * wealth / (2 h); the relative part is the real check
    np.testing.assert_allclose(got, want, rtol=2e-6, atol=2e-8)


def test_policy_undefined_at_horizon(example1):
    sol = lpm.solve_lpm(_problem(1.0), example1)
    with pytest.raises(PolicyUndefinedAtTerminal):
        lpm.policy(sol, 1.0, 1.0)


def test_feedback_curve_sorted_and_weighted(example1):
    sol = lpm.solve_lpm(_problem(1.0), example1)
    curve = lpm.feedback_curve(sol, 0.5, np.geomspace(0.05, 5.0, 80))
    assert np.all(np.diff(curve.x) > 0.0)
    assert not curve.monotone_warning
    finite = curve.x != 0.0
    np.testing.assert_allclose(
        curve.weights[finite, 0], curve.pi[finite, 0] / curve.x[finite], rtol=1e-12
    )
    with pytest.raises(ValueError):
        lpm.feedback_curve(sol, 0.5, [1.0, 0.5])


def test_degenerate_low_target_case(example1):
    # gamma = 1.2 is unaffordable (x0 < gamma E[z]) and d = 1.05 sits below
    # the minimal-mean bound, so the mean constraint goes slack
    prob = _problem(1.0, gamma=1.2, d=1.05)
    sol = lpm.solve_lpm(prob, example1)
    assert sol.multipliers.case == lpm.DEGENERATE_LOW_TARGET
    assert sol.multipliers.mean == 0.0
    assert sol.multipliers.budget > 0.0
    assert sol.hit_prob == 0.0
    assert not sol.multiple_solutions
    # the solution ignores d and delivers the minimal-mean optimum d_lower
    kinks = _payoff_kinks(sol)
    mean = _expect(lambda z: lpm.terminal_wealth(sol, z), kinks)
    assert mean == pytest.approx(sol.d_lower, abs=1e-8)
    assert mean > prob.d
    budget = _expect(lambda z: z * lpm.terminal_wealth(sol, z), kinks)
    assert budget == pytest.approx(1.0, abs=1e-8)


def test_degenerate_rich_case(example1):
    # gamma = 0.9 makes the benchmark affordable outright: x0 > gamma E[z]
    prob = _problem(1.0, gamma=0.9, d=0.95)
    sol = lpm.solve_lpm(prob, example1)
    assert sol.multipliers.case == lpm.DEGENERATE_RICH
    assert sol.multipliers.mean == 0.0
    assert sol.multipliers.budget == 0.0
    assert sol.multiple_solutions
    assert sol.objective_value == 0.0
    assert sol.rho is None
    # the canonical representative still prices back to the budget
    budget = _expect(lambda z: z * lpm.terminal_wealth(sol, z), (sol.delta,))
    assert budget == pytest.approx(1.0, abs=1e-8)
    x = lpm.terminal_wealth(sol, np.array([sol.delta * 0.9, sol.delta * 1.1]))
    assert x[0] == 10.0 and x[1] == 0.9
    # wealth stays defined for the rich branch too
    assert lpm.wealth(sol, 0.0, 1.0) == pytest.approx(1.0, abs=1e-10)


def test_rich_boundary_has_unique_solution(example1):
    # x0 == gamma E[z] exactly: rich case but no slack to randomize
    prob = _problem(1.0, d=1.0)
    sol = lpm.solve_lpm(prob, example1)
    if sol.multipliers.case == lpm.DEGENERATE_RICH:
        assert not sol.multiple_solutions


def test_target_too_high(example1):
    with pytest.raises(TargetTooHigh):
        lpm.solve_lpm(_problem(1.0, d=1.99), example1)
    # the bound itself is excluded: d must be strictly below d_upper
    _, hi = lpm.d_bounds(_problem(1.0), example1)
    with pytest.raises(TargetTooHigh):
        lpm.classify(_problem(1.0, d=hi), example1)


def test_infeasible_budget(example1):
    # x0 >= cap E[z] = 10 e^{-0.06}
    with pytest.raises(InfeasibleBudget):
        lpm.d_bounds(_problem(1.0, x0=9.5), example1)


def test_horizon_mismatch_rejected(example1):
    prob = lpm.LpmProblem(x0=1.0, d=1.3, gamma=GAMMA, cap=10.0, q=1.0, horizon=2.0)
    with pytest.raises(ValueError):
        lpm.solve_lpm(prob, example1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"x0": 0.0},
        {"gamma": 0.0},
        {"gamma": -1.0},
        {"cap": 0.5},  # below the benchmark
        {"d": 10.0},  # cap must exceed the target
        {"q": 1.5},
        {"q": -0.5},
        {"q": 3.0},
    ],
)
def test_problem_validation(kwargs):
    base = dict(x0=1.0, d=1.3, gamma=GAMMA, cap=10.0, q=1.0, horizon=1.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        lpm.LpmProblem(**base)


def test_q0_objective_is_shortfall_probability(example1):
    sol = lpm.solve_lpm(_problem(0.0), example1)
    # flat two-level payoff: the objective is the mass beyond both branches
    tail = 1.0 - _h_ref(0.0, sol.delta + sol.rho)
    assert sol.objective_value == pytest.approx(tail, rel=1e-9)


def test_solution_carries_bounds(example1):
    sol = lpm.solve_lpm(_problem(1.0), example1)
    lo, hi = lpm.d_bounds(sol.problem, example1)
    assert sol.d_lower == lo
    assert sol.d_upper == hi
    assert lpm.hit_probability(sol) == sol.hit_prob
