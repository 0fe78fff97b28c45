import math

import numpy as np
import pytest

from hypscalar.closed_forms import ProblemParams, decay_exponent, lambda_pq
from hypscalar.radial import RadialFunction, build_grid, pde_residual
from hypscalar.solvers import (MonotonicityError, Outcome, default_grid, find_bracket, ground_state_by_shooting,
                               lipschitz_shift, pure_power_ground_state, monotone_iterate, newton_solve,
                               poincare_sobolev_constant, shoot, solve_linear_shifted)


def test_linear_zero_rhs():
    g = build_grid(3, 5.0, 200)
    assert np.all(solve_linear_shifted(1.0, RadialFunction(g, np.zeros(201))).values == 0)


def test_linear_max_principle():
    g = build_grid(3, 5.0, 200)
    u = solve_linear_shifted(1.0, RadialFunction(g, np.ones(201)))
    assert np.min(u.values) >= 0 and np.max(u.values) <= 1.0


def test_linear_rejects_noncoercive():
    g = build_grid(3, 5.0, 200)
    with pytest.raises(ValueError):
        solve_linear_shifted(0.0, RadialFunction(g, np.ones(201)), lambda_shift=2.0)


def test_constant_fixed_point_one_step():
    lam, t = lambda_pq(2.0, 4.0)
    g = build_grid(3, 10.0, 200)
    c = RadialFunction(g, np.full(201, t))
    pp = ProblemParams(3, 2.0, 4.0, -lam)
    rep = monotone_iterate(c, c, pp)
    assert rep.iterations == 1 and rep.converged
    assert np.max(np.abs(rep.solution.values - t)) < 1e-13
    assert rep.final_residual < 1e-12


def test_equilibrium_algebra():
    for p, q in [(2, 4), (1.5, 3), (3, 7)]:
        lam, t = lambda_pq(p, q)
        assert abs(-lam * t + t ** p - t ** q) < 1e-12


def test_shoot_equilibrium_never_crosses():
    lam, t = lambda_pq(2.0, 4.0)
    s = shoot(t, ProblemParams(3, 2.0, 4.0, -lam), r_stop=20.0)
    assert s.outcome is not Outcome.CrossesZero
    assert abs(s.sol.y[0, -1] - t) < 1e-8


def test_shoot_deterministic_total():
    pp = ProblemParams(3, 2.0, 4.0, 0.5)
    a = [shoot(50.0, pp).outcome for _ in range(2)]
    assert a[0] is a[1] and isinstance(a[0], Outcome)


def test_shoot_rejects():
    with pytest.raises(ValueError):
        shoot(0.0, ProblemParams(3, 2.0, 4.0, 0.5))


def test_pure_power_bracket():
    pp = ProblemParams(3, 3.0, None, 0.0)
    s0, s1, shots = find_bracket(pp, np.logspace(-1, 1, 12), 40.0)
    assert s0 is not None
    assert {s0.outcome, s1.outcome} & {Outcome.CrossesZero}


def test_ground_state_inside_window():
    pp = ProblemParams(3, 2.0, 4.0, 0.97)
    rep = ground_state_by_shooting(pp)
    assert rep.converged and rep.notes["status"] == "Found"
    u = rep.solution
    assert np.all(u.values >= 0) and rep.final_residual < 1e-8
    a = u.values[0]
    # maximum point: -Lap u(0) > 0 needs lambda + a^{p-1} - a^{q-1} > 0
    assert pp.lam + a - a ** 3 > 0
    assert a == pytest.approx(1.108, abs=2e-3)


@pytest.mark.parametrize("lam", [0.0, 1.5])
def test_ground_state_not_found(lam):
    # lambda = 0 lies below the necessary bound lambda_1 - lambda_pq = 0.615
    rep = ground_state_by_shooting(ProblemParams(3, 2.0, 4.0, lam))
    assert rep.solution is None and rep.notes["status"] == "NotFound"


def test_pure_power_ground_state():
    rep = pure_power_ground_state(3, 3.0, 0.0)
    u = rep.solution
    assert rep.converged and rep.final_residual < 1e-8
    assert np.all(np.diff(u.values) <= 0)
    assert u.decay_tag == pytest.approx(decay_exponent(3, 0.0), rel=0.05)
    assert rep.notes["drift_1.25R"] < 1e-6


def test_mancini_sandeep_window_errors():
    with pytest.raises(ValueError, match="N\\(N-2\\)/4"):
        pure_power_ground_state(4, 3.0, 1.9)
    with pytest.raises(ValueError):
        pure_power_ground_state(3, 3.0, 1.0)
    with pytest.raises(ValueError):
        pure_power_ground_state(3, 5.0, 0.9)


def test_grid_doubling_second_order(cubic_quadratic_solution):
    pp = ProblemParams(3, 3.0, 2.0, 0.0)
    u = cubic_quadratic_solution.solution
    assert pde_residual(u, pp)[0] < 1e-8
    R, M = u.grid.r_max, u.grid.M
    sols = [ground_state_by_shooting(pp, grid=build_grid(3, R, k * M)).solution.values[::k] for k in (1, 2, 4)]
    d1 = np.max(np.abs(sols[0] - sols[1]))
    d2 = np.max(np.abs(sols[1] - sols[2]))
    assert 3.6 < d1 / d2 < 4.4
    # Richardson-extrapolated profiles agree far below the raw O(h^2) drift
    e1 = (4 * sols[1] - sols[0]) / 3
    e2 = (4 * sols[2] - sols[1]) / 3
    assert np.max(np.abs(e1 - e2)) < 1e-4


def test_newton_from_perturbed_solution(cubic_quadratic_solution):
    pp = ProblemParams(3, 3.0, 2.0, 0.0)
    u = cubic_quadratic_solution.solution
    rep = newton_solve(u.copy(u.values * (1 + 0.02 * np.exp(-u.r))), pp)
    assert rep.converged and np.max(np.abs(rep.solution.values - u.values)) < 1e-7


def test_monotone_down_from_constant_super():
    """Below -lambda_pq every positive constant is a supersolution; iterates from it never increase."""
    lam, _ = lambda_pq(2.0, 4.0)
    pp = ProblemParams(3, 2.0, 4.0, -lam - 0.3)
    g = build_grid(3, 6.0, 300)
    sup = RadialFunction(g, np.full(301, 0.8))
    sub = RadialFunction(g, np.zeros(301))
    hist = []
    rep = monotone_iterate(sub, sup, pp, direction="down", history=hist)
    assert rep.converged and rep.final_residual < 1e-8
    steps = [np.min(a - b) for a, b in zip([sup.values] + hist[:-1], hist)]
    assert min(steps) >= 0
    assert np.all(rep.solution.values >= 0) and rep.solution.values[-1] == 0.8


def test_truncation_sub_dips_at_corner():
    """min(U, eps) subs carry a positive singular part at the corner, so the first iterate dips."""
    from hypscalar.barriers import build_pair
    pp = ProblemParams(3, 2.0, 4.0, -0.2)
    pair = build_pair(pp, "A2_SmallNeg")
    with pytest.raises(MonotonicityError, match="iterate 1"):
        monotone_iterate(pair.sub, pair.super, pp)


def test_monotone_detects_bad_pair():
    pp = ProblemParams(3, 2.0, 4.0, 0.5)
    g = build_grid(3, 10.0, 500)
    sub = RadialFunction(g, 0.9 * np.exp(-g.nodes))
    sup = RadialFunction(g, np.exp(-g.nodes))
    with pytest.raises(MonotonicityError):
        monotone_iterate(sub, sup, pp)
    with pytest.raises(ValueError):
        monotone_iterate(sup, sub, pp)


def test_lipschitz_shift_formula():
    pp = ProblemParams(3, 2.0, 4.0, -0.5)
    assert lipschitz_shift(pp, 2.0) == pytest.approx(1 + 0.5 + 2 * 2 + 4 * 8)


def test_poincare_sobolev_positive():
    assert poincare_sobolev_constant(3, 3.0, 0.0) > 0
