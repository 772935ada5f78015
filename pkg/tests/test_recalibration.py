import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarforge.forms import BallDomain, FormField, coefficients_equal, evaluate, vanishes
from dbarforge.recalibration import (Calibration, EpsilonViolation, RecalParameter, ResolutionProblem,
                                     check_epsilon, compose_many, compose_parameters, composed_closed_form,
                                     integrability_terms, invert_parameter, manufacture_problem, random_parameter,
                                     recalibrate, resolution_maps, system_terms)

seeds = st.integers(0, 2**31 - 1)
CASES = [(0, (2,)), (1, (2, 1)), (2, (2, 2, 1))]
DISC = BallDomain(1, 1.0)


def test_m0_example():
    A = np.array([[1, 2], [0, 1j]])
    E = np.array([[0.25, 0], [0.5, 0.125]])
    om = Calibration(0, (2,), {(0, 0): FormField.from_terms(DISC, 1, (2, 2), [((0,), (0, 0), A)], 6, True)})
    eta = RecalParameter(0, (2,), {(0, 0): FormField.constant(DISC, E, 6, True)})
    got = evaluate(recalibrate(eta, om).get(0, 0), 0.1)[(0,)]
    g = np.eye(2) + E
    assert np.allclose(got, np.linalg.inv(g) @ A @ g)


@given(seeds, st.sampled_from(CASES))
def test_action_law(seed, case):
    m, p = case
    rng = np.random.default_rng(seed)
    om = manufacture_problem(seed, m, 1, p, 0.2, dmax=5).omega
    e1, e2 = (random_parameter(DISC, p, rng, 0.1, 2, 5) for _ in range(2))
    lhs = recalibrate(e2, recalibrate(e1, om))
    rhs = recalibrate(compose_parameters(e1, e2), om)
    assert all(coefficients_equal(lhs.comps[k], rhs.comps[k]) for k in lhs.comps)


@given(seeds, st.sampled_from(CASES[:2]))
def test_inverse_two_sided(seed, case):
    m, p = case
    e = random_parameter(DISC, p, np.random.default_rng(seed), 0.1, 2, 6)
    inv = invert_parameter(e)
    assert all(vanishes(v) for v in compose_parameters(e, inv).comps.values())
    assert all(vanishes(v) for v in compose_parameters(inv, e).comps.values())


@given(seeds)
def test_integrability_preserved_n2(seed):
    dom = BallDomain(2, 1.0)
    om = manufacture_problem(seed, 1, 2, (2, 1), 0.2, degree=1, dmax=3).omega
    assert all(vanishes(v) for v in integrability_terms(om).values())
    e = random_parameter(dom, (2, 1), np.random.default_rng(seed), 0.1, 1, 3)
    assert all(vanishes(v) for v in integrability_terms(recalibrate(e, om)).values())


@given(seeds)
def test_reference_solves_system(seed):
    pr = manufacture_problem(seed, 1, 1, (2, 1), 0.2, dmax=5)
    assert all(vanishes(v) for v in system_terms(pr.eta_star, pr.omega).values())


@given(seeds, st.integers(1, 3))
def test_closed_form_composition(seed, k):
    rng = np.random.default_rng(seed)
    ps = [random_parameter(DISC, (2, 1), rng, 0.1, 1, 5) for _ in range(k)]
    assert coefficients_equal(composed_closed_form(ps, 0, 1), compose_many(ps).get(0, 1))


def test_resolution_maps_chain():
    phis = resolution_maps((2, 2, 1))
    assert (phis[1] @ phis[2] == 0).all()
    assert np.linalg.matrix_rank(phis[2]) == 1
    with pytest.raises(ValueError):
        resolution_maps((1, 3))


def test_trivial_problem():
    pr = manufacture_problem(0, 1, 1, (2, 1), 0.0)
    assert pr.eta_star.is_zero()
    assert all(pr.omega.get(s, k).is_zero() for s, k in pr.omega.comps if k >= 0)


def test_epsilon_violation():
    eta = RecalParameter(0, (1,), {(0, 0): FormField.constant(DISC, [[0.6]], 4, True)})
    with pytest.raises(EpsilonViolation):
        check_epsilon(eta, 0.4)


def test_problem_json_roundtrip():
    pr = manufacture_problem(7, 1, 1, (2, 1), 0.2, dmax=5)
    back = ResolutionProblem.from_json(pr.to_json())
    assert all(coefficients_equal(back.omega.comps[k], pr.omega.comps[k]) for k in pr.omega.comps)
    assert back.to_json() == pr.to_json()


def test_family_validation():
    with pytest.raises(ValueError):
        Calibration(1, (2, 1), {})
