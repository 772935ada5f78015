import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarforge.forms import (BallDomain, FormField, PolyRep, coefficients_equal, dbar, evaluate, from_json,
                             identity_form, matrix_inverse, max_abs_coefficient, restrict, to_grid, to_json,
                             truncate_to_precision, vanishes, wedge)
from dbarforge.recalibration import random_form

seeds = st.integers(0, 2**31 - 1)


def _rand(n, q, seed, shape=(2, 2), exact=True, dmax=6, degree=2):
    return random_form(BallDomain(n, 1.0), q, shape, np.random.default_rng(seed), degree, 1.0, dmax, exact)


@given(seeds, st.sampled_from([1, 2]))
def test_dbar_squared_vanishes(seed, n):
    u = _rand(n, 0, seed)
    assert vanishes(dbar(dbar(u)))


@given(seeds, st.integers(0, 1), st.integers(0, 1))
def test_leibniz_rule_exact(seed, qa, qb):
    a = _rand(2, qa, seed)
    b = _rand(2, qb, seed + 1)
    lhs = dbar(wedge(a, b))
    rhs = wedge(dbar(a), b) + wedge(a, dbar(b)).scale(-1 if qa % 2 else 1)
    assert coefficients_equal(lhs, rhs)


@given(seeds)
def test_wedge_associative(seed):
    a, b, c = (_rand(2, q, seed + i, dmax=6) for i, q in enumerate((0, 1, 1)))
    assert coefficients_equal(wedge(wedge(a, b), c), wedge(a, wedge(b, c)))


def test_dzbar_wedge_antisymmetry():
    dom = BallDomain(2, 1.0)
    d1 = FormField.from_terms(dom, 1, (1, 1), [((0,), (0, 0, 0, 0), 1)], exact=True)
    d2 = FormField.from_terms(dom, 1, (1, 1), [((1,), (0, 0, 0, 0), 1)], exact=True)
    assert coefficients_equal(wedge(d1, d2), -wedge(d2, d1))
    assert vanishes(wedge(d1, d1))


@given(seeds)
def test_json_roundtrip_exact(seed):
    u = _rand(1, 1, seed)
    assert coefficients_equal(from_json(to_json(u)), u)


def test_json_roundtrip_grid():
    u = to_grid(_rand(1, 1, 3, exact=False), 17)
    v = from_json(to_json(u))
    assert np.allclose(v.comps[(0,)], u.comps[(0,)])


def test_matrix_inverse_truncated():
    dom = BallDomain(1, 1.0)
    g = identity_form(dom, 2, PolyRep(dmax=10)) + _rand(1, 0, 5, exact=False, dmax=10).scale(0.1)
    prod = wedge(g, matrix_inverse(g)) - identity_form(dom, 2, PolyRep(dmax=10))
    assert max_abs_coefficient(truncate_to_precision(prod)) < 1e-12


def test_grid_fit_reproduces_polynomials():
    u = _rand(1, 0, 9, exact=False, dmax=6)
    ug = to_grid(u, 25)
    for z in (0.1 + 0.2j, -0.3j, 0.5):
        assert np.allclose(evaluate(ug, z), evaluate(u, z), atol=1e-10)
    du, dug = dbar(u), dbar(ug)
    assert np.allclose(evaluate(dug, 0.2 - 0.1j)[(0,)], evaluate(du, 0.2 - 0.1j)[(0,)], atol=1e-8)


def test_restrict_rejects_larger_radius():
    u = to_grid(_rand(1, 0, 1, exact=False), 17)
    v = restrict(u, 0.5)
    assert math.isclose(v.r, 0.5)
    with pytest.raises(ValueError):
        restrict(v, 0.9)


def test_domain_validation():
    with pytest.raises(ValueError):
        BallDomain(0, 1.0)
    with pytest.raises(ValueError):
        BallDomain(1, 1.5)
