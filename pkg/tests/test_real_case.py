import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarforge.forms import (BallDomain, FormField, coefficients_equal, identity_form, max_abs_coefficient,
                             multi_indices, to_grid, truncate_to_precision, vanishes)
from dbarforge.holder import HolderConfig, holder_norm
from dbarforge.real_case import (FlatProblem, NonFlatError, manufacture_flat, poincare_operator, poincare_residual,
                                 solve_flat)

PLANE = BallDomain(2, 1.0, real=True)


def test_poincare_of_dx1():
    u = FormField.from_terms(PLANE, 1, (1, 1), [((0,), (0, 0), 1)], exact=True)
    x1 = FormField.from_terms(PLANE, 0, (1, 1), [((), (1, 0), 1)], exact=True)
    assert coefficients_equal(poincare_operator(u), x1)


def test_poincare_of_zero():
    assert poincare_operator(FormField.zero(PLANE, 1, (1, 1), to_grid(
        FormField.constant(PLANE, [[1.0]]), 9).rep)).is_zero()


def test_identity_on_non_closed_form():
    u = FormField.from_terms(PLANE, 1, (1, 1), [((0,), (0, 1), 1)], exact=True)
    assert vanishes(poincare_residual(u))


@given(st.integers(0, 2**31 - 1), st.sampled_from([(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)]))
def test_identity_random_polynomials(seed, dq):
    d, q = dq
    rng = np.random.default_rng(seed)
    dom = BallDomain(d, 1.0, real=True)
    terms = [(I, tuple(int(x) for x in rng.integers(0, 3, size=d)), int(rng.integers(-4, 5)))
             for I in multi_indices(d, q) for _ in range(2)]
    u = FormField.from_terms(dom, q, (1, 1), terms, dmax=8, exact=True)
    assert vanishes(poincare_residual(u))


def test_identity_grid():
    u = FormField.from_terms(PLANE, 1, (1, 1), [((0,), (0, 1), 1.0), ((1,), (2, 0), 1.0)], dmax=6)
    assert holder_norm(poincare_residual(to_grid(u, 33))) < 1e-9


def test_uniform_bound_across_h():
    cfg = HolderConfig(n_samples=400)
    rng = np.random.default_rng(0)
    ratios = {}
    for h in (0, 1, 2):
        vals = []
        for _ in range(3):
            terms = [((i,), tuple(int(x) for x in rng.integers(0, 3, size=2)), float(rng.normal())) for i in (0, 1)]
            u = to_grid(FormField.from_terms(PLANE, 1, (1, 1), terms, dmax=6), 25)
            vals.append(holder_norm(poincare_operator(u), h=h, config=cfg) / holder_norm(u, h=h, config=cfg))
        ratios[h] = max(vals)
    C = max(ratios.values())
    assert all(v <= C for v in ratios.values()) and C < 10


def test_zero_connection_gives_identity():
    A = FormField.zero(PLANE, 1, (2, 2), FormField.constant(PLANE, np.eye(2), 8).rep)
    sol = solve_flat(A)
    assert coefficients_equal(sol.g, identity_form(PLANE, 2, A.rep)) and sol.iterations == 0


@pytest.mark.parametrize("kind", ["exy", "unipotent"])
def test_manufactured_gauges(kind):
    pr = manufacture_flat(kind)
    sol = solve_flat(pr.connection)
    assert sol.residual <= 1e-6
    assert max(sol.column_residuals) <= 1e-6


def test_exy_recovered_exactly():
    pr = manufacture_flat("exy")
    sol = solve_flat(pr.connection)
    # g(0) = I fixes the constant right factor
    assert max_abs_coefficient(truncate_to_precision(sol.g - pr.gauge)) < 1e-12


def test_non_flat_rejected():
    A = FormField.from_terms(PLANE, 1, (1, 1), [((1,), (1, 0), 1.0)], dmax=6)
    with pytest.raises(NonFlatError) as info:
        solve_flat(A)
    assert info.value.residual > 0.5


def test_flat_problem_json():
    pr = manufacture_flat("unipotent")
    back = FlatProblem.from_json(pr.to_json())
    assert coefficients_equal(back.connection, pr.connection)
