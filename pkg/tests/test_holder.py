import math

import numpy as np
from hypothesis import given, strategies as st

from dbarforge.forms import BallDomain, FormField, to_grid
from dbarforge.holder import (D_coefficient, HolderConfig, WeightSequence, build_weights, cutoff_derivative_bounds,
                              holder_norm, holder_seminorm, opnorm)


@given(st.integers(0, 10**6))
def test_opnorm_matches_spectral_norm(seed):
    A = np.random.default_rng(seed).normal(size=(5, 3, 3)) + 0j
    assert np.allclose(opnorm(A), [np.linalg.norm(a, 2) for a in A])


def test_constant_norm_and_linear_function():
    u = FormField.constant(BallDomain(1, 1.0), np.eye(2))
    assert math.isclose(holder_norm(u), 1.0, rel_tol=1e-12)
    cfg = HolderConfig(n_samples=600)
    assert holder_seminorm(lambda X: np.ones((len(X), 1, 1)), 1.0, config=cfg, D=2) == 1.0
    # sup |x| + sup |x - y|^(1/2) on the unit disc is 1 + sqrt(2); sampling approaches it from below
    val = holder_seminorm(lambda X: X[:, 0].reshape(-1, 1, 1) + 0j, 1.0, config=cfg, D=2)
    assert 1 + math.sqrt(2) - 0.05 < val <= 1 + math.sqrt(2) + 1e-12


def test_norm_monotone_in_h():
    dom = BallDomain(1, 1.0)
    u = to_grid(FormField.from_terms(dom, 0, (1, 1), [((), (2, 1), 1.0), ((), (0, 3), 0.5)]), 25)
    cfg = HolderConfig(n_samples=400)
    vals = [holder_norm(u, h=h, config=cfg) for h in range(3)]
    assert vals[0] < vals[1] < vals[2]


@given(st.lists(st.floats(1e-3, 1e3), min_size=6, max_size=6),
       st.lists(st.one_of(st.none(), st.floats(1e-6, 10.0)), min_size=6, max_size=6))
def test_build_weights_submultiplicative(A, caps):
    W = build_weights([1.0] + A, caps_R=[None] + caps, K=6)
    for k in range(2, len(W)):
        for j in range(1, k):
            assert W[k] <= D_coefficient(k) * W[j] * W[k - j] * (1 + 1e-12)
    assert W.check_submultiplicative()


def test_build_weights_prefix_extension():
    A = list(cutoff_derivative_bounds(8))
    W3 = build_weights(A[:4], K=3)
    W6 = build_weights(A[:7], K=6, prefix=W3)
    assert W6.entries[:4] == W3.entries[:4]
    assert list(W6.entries) == list(build_weights(A[:7], K=6).entries)


def test_trivial_weights():
    W = WeightSequence.trivial(3)
    assert W[0] == W[1] == 1.0
    assert W[2] == min(2.0 ** -2, D_coefficient(2) * W[1] ** 2)
    assert W.check_submultiplicative()


def test_cutoff_bounds_positive():
    A = cutoff_derivative_bounds(10)
    assert all(a > 0 for a in A)
