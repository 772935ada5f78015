import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarforge.forms import to_grid
from dbarforge.recalibration import EpsilonViolation, RecalParameter, manufacture_problem
from dbarforge.nash_moser import (BETA_GATE, SolverConfig, L_constants, beta_partial_sum, build_step_parameter,
                                  choose_initial_radius, grid_epsilon, limit_radius_ratio, nu,
                                  quadratic_decay_report, radius_schedule, sigma_mk, solve, sub_radius)


def test_gate_threshold_literal():
    assert BETA_GATE == 0.5 + 1 / (4 * math.log(2))


def test_radius_limit():
    ratio = limit_radius_ratio()
    direct = math.prod(1 - math.exp(-k - 2) for k in range(200))
    assert ratio == pytest.approx(direct, rel=1e-15)
    assert ratio > 0.56


@given(st.floats(0.01, 1.0), st.integers(1, 12))
def test_schedule_monotone(r0, K):
    rs = radius_schedule(r0, K)
    assert all(b < a for a, b in zip(rs, rs[1:]))
    assert rs[-1] > r0 * limit_radius_ratio()


@given(st.integers(0, 3), st.integers(0, 6))
def test_sub_radii_end_at_next_radius(m, k):
    r = 0.9
    assert sub_radius(r, m, k, m + 1) == pytest.approx(radius_schedule(r, k + 1)[-1] / radius_schedule(r, k)[-1] * r)


def test_exponents():
    assert nu(0, 1, 0) == 4
    assert nu(1, 1, 2) == 4 * 6
    assert sigma_mk(1, 0) == pytest.approx(math.exp(-2) / 2)


def test_L_recursion():
    L = L_constants(2, 0.1, 3.0)
    assert L[2] == 0.1
    assert L[1] == max(0.1, 2 * 3.0 * 0.1 * 0.1)
    assert L[0] == max(0.1, 2 * 3.0 * 0.1 * L[1])


def test_beta_sum_monotone_in_a0():
    vals = [beta_partial_sum(a, 0, 1, 1.0, 4.0, 6) for a in (1e-9, 1e-7, 1e-5)]
    assert vals[0] < vals[1] < vals[2]


def test_initial_radius_monotone_in_difficulty():
    cfg = SolverConfig()
    radii = [choose_initial_radius(manufacture_problem(1, 0, 1, (2,), d, dmax=12, exact=False).omega, cfg)[0]
             for d in (0.05, 0.1, 0.2)]
    assert radii[0] >= radii[1] >= radii[2]


def test_decay_report_quadratic_and_linear():
    quad = [0.1]
    for _ in range(5):
        quad.append(0.5 * quad[-1] ** 2)
    rep = quadratic_decay_report(quad, floor=0.0)
    assert rep.bounded and rep.exponent > 1.9 and rep.superlinear_run >= 3
    lin = [0.1 * 0.5 ** k for k in range(6)]
    bad = quadratic_decay_report(lin, floor=0.0)
    assert not bad.bounded
    assert bad.exponent == pytest.approx(1.0)


def test_trivial_problem_needs_no_iteration():
    pr = manufacture_problem(0, 0, 1, (2,), 0.0)
    g, eta, tr = solve(pr.omega, SolverConfig(r0=1.0, npa=17))
    assert tr.converged and len(tr.steps) == 1
    assert eta.is_zero()


def test_step_parameter_on_trivial_calibration():
    pr = manufacture_problem(0, 1, 1, (2, 1), 0.0)
    om = pr.omega.to_grid(17)
    eta = build_step_parameter(om, 1.0, 0, SolverConfig(npa=17))
    assert all(v.is_zero() or np.abs(list(v.comps.values())[0]).max() == 0 for v in eta.comps.values())
    assert eta.get(0, 0).r == pytest.approx(sub_radius(1.0, 1, 0, 2))


def test_grid_epsilon_raises():
    pr = manufacture_problem(0, 0, 1, (2,), 0.2, dmax=8, exact=False)
    big = pr.eta_gen.map(lambda u: to_grid(u.scale(4.0), 17))
    with pytest.raises(EpsilonViolation):
        grid_epsilon(big, 0.4)


def test_short_solve_decreases():
    pr = manufacture_problem(1, 0, 1, (2,), 0.1, dmax=16, exact=False)
    _, _, tr = solve(pr.omega, SolverConfig(r0=1.0, K_max=2, npa=17))
    assert tr.a[1] < tr.a[0] and tr.a[2] < tr.a[1]
    assert all(st.data_cap_ok and st.gauge_cap_ok for st in tr.steps)
    assert tr.weights.check_submultiplicative()


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eps=0.7)
    with pytest.raises(ValueError):
        SolverConfig(r0=2.0)
    with pytest.raises(ValueError):
        SolverConfig(sigma_rule="other")
