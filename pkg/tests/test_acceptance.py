"""Acceptance suite: eleven criteria at their stated tolerances.

Each test records one PASS/FAIL line (printed in the pytest terminal summary,
or directly when this file is run as a script).
"""

import functools
import math
import time

import numpy as np
import pytest

from dbarforge.forms import BallDomain, FormField, coefficients_equal, dbar, matrix_inverse, to_grid, vanishes, wedge
from dbarforge.holder import D_coefficient, HolderConfig, build_weights, cutoff_derivative_bounds
from dbarforge.kernels import fit_interior_constant
from dbarforge.nash_moser import (BETA_GATE, SolverConfig, gate_report, limit_radius_ratio,
                                  quadratic_decay_report, solve)
from dbarforge.real_case import NonFlatError, manufacture_flat, poincare_residual, solve_flat
from dbarforge.recalibration import (compose_parameters, integrability_residual, integrability_terms,
                                     leibniz_error, manufacture_problem, random_form, random_parameter,
                                     recalibrate)
from dbarforge.verify import cauchy_probe_error, refinement_study

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = {}


def record(k: int, passed: bool, detail: str):
    line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    assert passed, line


# -- shared solver runs -----------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def run_m0(seed: int, npa: int, abs_floor: float):
    pr = manufacture_problem(seed, 0, 1, (2,), 0.2, dmax=32, exact=False)
    t0 = time.perf_counter()
    out = solve(pr.omega, SolverConfig(r0=1.0, K_max=8, npa=npa, abs_floor=abs_floor), eta_star=pr.eta_star)
    return out, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def run_m1():
    pr = manufacture_problem(0, 1, 1, (2, 1), 0.2, dmax=24, exact=False)
    t0 = time.perf_counter()
    out = solve(pr.omega, SolverConfig(r0=1.0, K_max=8, npa=33), eta_star=pr.eta_star)
    return out, time.perf_counter() - t0


REFINED = (41, 1e-12)


# -- criteria -------------------------------------------------------------------------------

def test_criterion_01_cauchy_transform():
    t0 = time.perf_counter()
    e0 = cauchy_probe_error()
    e1 = cauchy_probe_error(npa=65)  # 4x the node count of the default 33-point grid
    dt = time.perf_counter() - t0
    record(1, e0 <= 1e-3 and e1 <= 2.5e-4 and dt <= 60,
           f"max |T(dzbar) - zbar| = {e0:.2e} (default), {e1:.2e} (refined), {dt:.1f} s")


def test_criterion_02_homotopy_formula():
    t0 = time.perf_counter()
    r1 = refinement_study(1, (17, 25, 33))
    r2 = refinement_study(2, (7, 9, 11))
    dt = time.perf_counter() - t0
    dec = all(all(b < a for a, b in zip(row, row[1:])) for row in r1 + r2)
    w1 = max(max(row) for row in r1)
    w2 = max(max(row) for row in r2)
    record(2, dec and w1 <= 5e-3 and w2 <= 2e-2 and dt <= 600,
           f"worst residual n=1 {w1:.2e}, n=2 {w2:.2e}; strictly decreasing {dec}; {dt:.0f} s")


def test_criterion_03_interior_estimate():
    dom = BallDomain(1, 1.0)
    rng = np.random.default_rng(11)
    samples = [to_grid(random_form(dom, 1, (1, 1), rng, 3, 0.5, 8, False), 25) for _ in range(3)]
    fit = fit_interior_constant(samples, hs=(0, 1, 2), sigmas=(0.1, 0.25, 0.5), npa=25,
                                hcfg=HolderConfig(n_samples=600))
    covers = all(r["lhs"] <= fit.C * r["rhs_unit"] * (1 + 1e-12) for r in fit.samples)
    per_h = ", ".join(f"h={h}: {v:.2e}" for h, v in fit.per_h.items())
    record(3, covers and fit.spread < 2.0,
           f"C = {fit.C:.3e} covers all: {covers}; per-h constants {per_h}; spread {fit.spread:.1f}x (need < 2x)")


def test_criterion_04_semigroup_action_law():
    rng = np.random.default_rng(2024)
    dom = BallDomain(1, 1.0)
    plan = [(0, (2,))] * 20 + [(1, (2, 1))] * 20 + [(2, (2, 2, 1))] * 10
    ok = 0
    for m, p in plan:
        om = manufacture_problem(int(rng.integers(1 << 30)), m, 1, p, 0.2, dmax=5).omega
        e1 = random_parameter(dom, p, rng, 0.1, 2, 5)
        e2 = random_parameter(dom, p, rng, 0.1, 2, 5)
        lhs = recalibrate(e2, recalibrate(e1, om))
        rhs = recalibrate(compose_parameters(e1, e2), om)
        ok += all(coefficients_equal(lhs.comps[k], rhs.comps[k]) for k in lhs.comps)
    record(4, ok == len(plan), f"{ok}/{len(plan)} instances exact (m = 0, 1, 2)")


def test_criterion_05_integrability_preservation():
    rng = np.random.default_rng(77)
    plan = [(1, (1,), (2, 1), 5)] * 20 + [(1, (2,), (2, 2, 1), 4)] * 10 + [(2, (0,), (2,), 3)] * 10 \
        + [(2, (1,), (2, 1), 3)] * 10
    exact_ok = 0
    for n, (m,), p, dmax in plan:
        dom = BallDomain(n, 1.0)
        om = manufacture_problem(int(rng.integers(1 << 30)), m, n, p, 0.2, degree=1 if n == 2 else 2,
                                 dmax=dmax).omega
        e = random_parameter(dom, p, rng, 0.1, 1 if n == 2 else 2, dmax)
        exact_ok += all(vanishes(v) for v in integrability_terms(recalibrate(e, om)).values())
    hcfg = HolderConfig(n_samples=400)
    grid_rows = []
    for m, p in ((0, (2,)), (1, (2, 1))):
        pr = manufacture_problem(3, m, 2, p, 0.2, dmax=10, exact=False)
        e = random_parameter(pr.omega.domain, p, rng, 0.1, 2, 10, False)
        om, eg = pr.omega.to_grid(9), e.map(lambda u: to_grid(u, 9))
        res = max(integrability_residual(recalibrate(eg, om), hcfg).values())
        # defect of the discrete product rule on the factors the recalibration multiplies
        facs = [eg.get(*k) for k in eg.comps] + [om.get(*k) for k in om.comps]
        facs += [eg.g(s) for s in range(m + 1)] + [matrix_inverse(eg.g(s)) for s in range(m + 1)]
        facs += [dbar(eg.get(s, 0)) + om.get(s, 0) + wedge(om.get(s, 0), eg.get(s, 0)) for s in range(m + 1)]
        le = max(leibniz_error(a, b, hcfg) for a in facs for b in facs
                 if a.shape[1] == b.shape[0] and a.q + b.q <= 1)
        grid_rows.append((m, res, le))
    grid_ok = all(res <= 10 * le for _, res, le in grid_rows)
    detail = "; ".join(f"grid m={m}: {res:.2e} vs 10x{le:.2e}" for m, res, le in grid_rows)
    record(5, exact_ok == len(plan) and grid_ok, f"exact {exact_ok}/{len(plan)}; {detail}")


def test_criterion_06_manufactured_recovery():
    (g, eta, tr), dt = run_m0(0, 33, 1e-10)
    cert = tr.certification
    ok = (tr.converged and cert["system_max"] <= 10 * tr.floor and cert["equivalence_max"] <= tr.floor
          and dt <= 900)
    record(6, ok, f"{len(tr.steps) - 1} steps, system {cert['system_max']:.2e}, equivalence "
                  f"{cert['equivalence_max']:.2e}, floor {tr.floor:.1e}, {dt:.0f} s")


def test_criterion_07_quadratic_decay():
    reps = [quadratic_decay_report(run_m0(seed, *REFINED)[0][2]) for seed in (0, 1, 2)]
    H = [r.H_empirical for r in reps]
    mean = float(np.mean(H))
    stable = all(abs(h - mean) <= 0.5 * mean for h in H)
    superlinear = all(r.superlinear_run >= 3 for r in reps)
    bounded = all(r.bounded for r in reps)
    record(7, stable and superlinear and bounded,
           f"H per seed {', '.join(f'{h:.2e}' for h in H)} (within 50% of mean: {stable}); "
           f"orders {', '.join(f'{r.exponent:.2f}' for r in reps)}; super-linear runs "
           f"{[r.superlinear_run for r in reps]}")


def test_criterion_08_resolution_case():
    (g, eta, tr), dt = run_m1()
    cert = tr.certification
    tol = 10 * tr.floor
    sig_ok = tr.converged and cert["sigma_max"] <= tol
    phi_ok = all(v <= 4 * tr.c_omega * (1 + 1e-9) for st in tr.steps for v in st.phi_norms.values())
    gauge_ok = all(v < 2 for st in tr.steps for v in st.gauge_norms.values())
    worst_g = max(v for st in tr.steps for v in st.gauge_norms.values())
    worst_phi = max(v for st in tr.steps for v in st.phi_norms.values())
    record(8, sig_ok and phi_ok and gauge_ok,
           f"sigma residual {cert['sigma_max']:.2e} (tol {tol:.0e}); max ||w^(s,-1)|| {worst_phi:.3f} "
           f"<= 4c = {4 * tr.c_omega:.3f}; max ||g^(+-1)|| {worst_g:.3f} < 2; {dt:.0f} s")


def test_criterion_09_radius_schedule():
    ratio = limit_radius_ratio()
    partial = math.fsum(math.log1p(-math.exp(-k - 2)) for k in range(60))
    exact = abs(ratio - math.exp(partial)) <= 4 * np.finfo(float).eps
    pr = manufacture_problem(0, 0, 1, (2,), 0.2, dmax=12, exact=False)
    rep = gate_report(pr.omega, 0.01, SolverConfig())
    literal = rep["threshold"] == 0.5 + 1 / (4 * math.log(2)) == BETA_GATE
    record(9, exact and ratio > 0.56 and literal,
           f"r_inf/r0 = {ratio:.16f} > 0.56; gate threshold {rep['threshold']:.16f}")


def test_criterion_10_real_case():
    rng = np.random.default_rng(10)
    ident = True
    from dbarforge.forms import multi_indices
    for d, q in ((2, 1), (2, 2), (3, 1), (3, 2), (3, 3)):
        dom = BallDomain(d, 1.0, real=True)
        for _ in range(4):
            terms = [(I, tuple(int(x) for x in rng.integers(0, 3, size=d)), int(rng.integers(-4, 5)))
                     for I in multi_indices(d, q) for _ in range(2)]
            ident &= vanishes(poincare_residual(FormField.from_terms(dom, q, (1, 1), terms, dmax=8, exact=True)))
    res = {kind: solve_flat(manufacture_flat(kind).connection).residual for kind in ("exy", "unipotent", "generic")}
    plane = BallDomain(2, 1.0, real=True)
    try:
        solve_flat(FormField.from_terms(plane, 1, (1, 1), [((1,), (1, 0), 1.0)], dmax=6))
        rejected = False
    except NonFlatError:
        rejected = True
    ok = ident and all(v <= 1e-6 for v in res.values()) and rejected
    record(10, ok, f"identity exact {ident}; residuals " + ", ".join(f"{k} {v:.1e}" for k, v in res.items())
           + f"; non-flat rejected {rejected}")


def test_criterion_11_weight_sequences():
    traces = [run_m0(0, 33, 1e-10)[0][2], run_m1()[0][2]]
    sub_ok = all(tr.weights.check_submultiplicative() for tr in traces)
    eq_ok = all(st.data_cap_ok and st.gauge_cap_ok for tr in traces for st in tr.steps)
    rng = np.random.default_rng(5)
    extra = 0
    for _ in range(50):
        A = [1.0] + list(10 ** rng.uniform(-2, 3, size=8))
        caps = [None] + [None if rng.random() < 0.5 else float(10 ** rng.uniform(-6, 1)) for _ in range(8)]
        W = build_weights(A, caps_R=caps, K=8)
        extra += all(W[k] <= D_coefficient(k) * W[j] * W[k - j] for k in range(2, 9) for j in range(1, k))
    record(11, sub_ok and eq_ok and extra == 50,
           f"solver weights submultiplicative {sub_ok}; weight caps on every step {eq_ok}; random builds {extra}/50")


if __name__ == "__main__":
    import sys
    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
