import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarforge.forms import BallDomain, FormField, evaluate, to_grid
from dbarforge.holder import HolderConfig
from dbarforge.kernels import (BOUNDARY_BETA, KernelConfig, fit_interior_constant, homotopy_residual,
                               leray_koppelman, s_exponent, sphere_rule)
from dbarforge.recalibration import random_form
from dbarforge.verify import sample_form, smooth_suite

DISC = BallDomain(1, 1.0)


def _oracle(a, b, z, r=1.0):
    """Cauchy-transform solution on the disc of radius r for zbar^b z^a dzbar."""
    hol = r ** (2 * (b + 1)) * z ** (a - b - 1) if a > b else 0.0
    return (z ** a * np.conj(z) ** (b + 1) - hol) / (b + 1)


@given(st.integers(0, 4), st.integers(0, 3), st.floats(0.0, 0.45), st.floats(0.0, 2 * math.pi))
def test_monomial_oracle(a, b, rad, ang):
    u = FormField.from_terms(DISC, 1, (1, 1), [((0,), (a, b), 1.0)])
    Tu = leray_koppelman(u, 1.0, 0.5)
    z = rad * complex(math.cos(ang), math.sin(ang))
    assert abs(evaluate(Tu, z)[0, 0] - _oracle(a, b, z)) < 1e-10


def test_cauchy_transform_of_dzbar():
    u = FormField.from_terms(DISC, 1, (1, 1), [((0,), (0, 0), 1.0)])
    Tu = leray_koppelman(u, 1.0, 0.5)
    for z in (0.0, 0.3j, -0.2 + 0.1j):
        assert abs(evaluate(Tu, z)[0, 0] - np.conj(z)) < 1e-12


def test_output_lives_on_shrunk_ball():
    u = FormField.from_terms(DISC, 1, (1, 1), [((0,), (1, 0), 1.0)])
    Tu = leray_koppelman(u, 0.8, 0.25)
    assert math.isclose(Tu.r, 0.6)
    assert Tu.q == 0


@pytest.mark.parametrize("form", range(3))
def test_homotopy_residual_small_n1(form):
    q, f = smooth_suite(1)[form]
    u = sample_form(1, q, f, 33, derivative="fit")
    assert homotopy_residual(u, 1.0, 0.5, npa=33) < 1e-6


def test_homotopy_closed_n2_polynomial():
    dom = BallDomain(2, 1.0)
    # dbar of a polynomial 0-form is closed; T dbar f = f - (holomorphic part)
    u = FormField.from_terms(dom, 1, (1, 1), [((0,), (1, 0, 0, 0), 1.0), ((1,), (0, 0, 1, 0), 1.0)])
    assert homotopy_residual(to_grid(u, 9), 1.0, 0.5, npa=9) < 1e-4


def test_boundary_constant_calibrated():
    assert math.isclose(BOUNDARY_BETA, 1 / (4 * math.pi ** 2))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sphere_rule_area(n):
    _, w = sphere_rule(n, 16, 8)
    assert math.isclose(w.sum(), 2 * math.pi ** n / math.factorial(n - 1), rel_tol=1e-10)


def test_s_exponent():
    assert s_exponent(1, 0) == 4
    assert s_exponent(2, 3) == 9


def test_invalid_arguments():
    u = FormField.from_terms(DISC, 1, (1, 1), [((0,), (0, 0), 1.0)])
    with pytest.raises(ValueError):
        leray_koppelman(u, 1.0, 1.5)
    f = FormField.from_terms(DISC, 0, (1, 1), [((), (0, 0), 1.0)])
    with pytest.raises(ValueError):
        leray_koppelman(f, 1.0, 0.5)


def test_interior_constant_covers_samples():
    rng = np.random.default_rng(2)
    samples = [to_grid(random_form(DISC, 1, (1, 1), rng, 2, 0.5, 6, False), 17) for _ in range(2)]
    fit = fit_interior_constant(samples, hs=(0, 1), sigmas=(0.25, 0.5), npa=17, hcfg=HolderConfig(n_samples=300))
    assert all(r["lhs"] <= fit.C * r["rhs_unit"] * (1 + 1e-12) for r in fit.samples)
    assert fit.C >= fit.C_lsq
