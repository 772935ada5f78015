"""Verification suites shared by the command line and the test-suite.

Each check returns a :class:`Check`; a suite is a list of them.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .forms import BallDomain, FormField, coefficients_equal, evaluate, to_grid, vanishes
from .grid import make_grid
from .holder import HolderConfig
from .kernels import KernelConfig, fit_interior_constant, homotopy_residual, leray_koppelman
from .recalibration import (compose_many, compose_parameters, composed_closed_form, integrability_terms,
                            invert_parameter, manufacture_problem, random_parameter, recalibrate)

SUITES = ("algebra", "kernels", "solver", "real", "all")


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""
    seconds: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def _timed(name, fn):
    t0 = time.perf_counter()
    passed, value, threshold, detail = fn()
    return Check(name, bool(passed), value, threshold, detail, time.perf_counter() - t0)


# -- smooth test forms ------------------------------------------------------------------

def _zc(X, n):
    return X[:, 0::2] + 1j * X[:, 1::2]


def smooth_suite(n: int) -> list:
    """Closed and non-closed smooth test forms, as (q, {I: f(z)}) pairs."""
    if n == 1:
        return [(1, lambda z: {(0,): np.exp(z[:, 0].conj() * z[:, 0])}),
                (1, lambda z: {(0,): np.cos(2 * z[:, 0] + z[:, 0].conj())}),
                (1, lambda z: {(0,): 1 / (2 - z[:, 0].conj())})]
    return [(1, lambda z: {(0,): np.exp(z[:, 1] * z[:, 0].conj()), (1,): 0.5 * np.sin(z[:, 0])}),
            (1, lambda z: {(0,): np.cos(z[:, 0] + z[:, 1].conj()), (1,): np.exp(z[:, 0].conj())}),
            (2, lambda z: {(0, 1): np.exp(z[:, 0] * z[:, 1].conj())})]


def sample_form(n: int, q: int, f, npa: int, derivative: str = "fd4", r: float = 1.0) -> FormField:
    g = make_grid(2 * n, r, npa)
    return FormField.from_function(BallDomain(n, r), q, (1, 1),
                                   lambda X: {I: v.reshape(-1, 1, 1) for I, v in f(_zc(X, n)).items()},
                                   g, derivative=derivative)


def refinement_study(n: int, levels, forms=None) -> list[list[float]]:
    """Homotopy residuals of each suite form at each grid level (fd4 derivatives)."""
    forms = forms if forms is not None else smooth_suite(n)
    cfg = KernelConfig(derivative="fd4")
    out = []
    for q, f in forms:
        row = []
        for npa in levels:
            u = sample_form(n, q, f, npa)
            row.append(homotopy_residual(u, 1.0, 0.5, cfg=cfg, npa=npa))
        out.append(row)
    return out


def cauchy_probe_error(npa: int | None = None, n_probe: int = 10, seed: int = 3) -> float:
    """max |T(dzbar) - zbar| at interior probe points of B_{1/2}."""
    dom = BallDomain(1, 1.0)
    u = FormField.from_terms(dom, 1, (1, 1), [((0,), (0, 0), 1.0)])
    Tu = leray_koppelman(u, 1.0, 0.5, KernelConfig(), npa=npa)
    rng = np.random.default_rng(seed)
    rad = 0.45 * np.sqrt(rng.random(n_probe))
    ang = 2 * np.pi * rng.random(n_probe)
    pts = rad * np.exp(1j * ang)
    return float(max(abs(evaluate(Tu, z)[0, 0] - np.conj(z)) for z in pts))


# -- suites ---------------------------------------------------------------------------------

def algebra_suite(quick: bool = False, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    cases = [(0, 1, (2,)), (1, 1, (2, 1)), (2, 1, (2, 2, 1))]
    reps = 1 if quick else 3
    checks = []
    for m, n, p in cases:
        dom = BallDomain(n, 1.0)

        def law(m=m, n=n, p=p, dom=dom):
            ok = True
            for r in range(reps):
                pr = manufacture_problem(int(rng.integers(1 << 30)), m, n, p, 0.2, dmax=5)
                e1 = random_parameter(dom, p, rng, 0.1, 2, 5)
                e2 = random_parameter(dom, p, rng, 0.1, 2, 5)
                lhs = recalibrate(e2, recalibrate(e1, pr.omega))
                rhs = recalibrate(compose_parameters(e1, e2), pr.omega)
                ok &= all(coefficients_equal(lhs.comps[k], rhs.comps[k]) for k in lhs.comps)
            return ok, None, 0.0, f"{reps} instance(s)"

        def integ(m=m, n=n, p=p, dom=dom):
            ok = True
            for r in range(reps):
                pr = manufacture_problem(int(rng.integers(1 << 30)), m, n, p, 0.2, dmax=5)
                e = random_parameter(dom, p, rng, 0.1, 2, 5)
                out = recalibrate(e, pr.omega)
                ok &= all(vanishes(v) for v in integrability_terms(out).values())
            return ok, None, 0.0, f"{reps} instance(s)"

        def inverse(m=m, n=n, p=p, dom=dom):
            e = random_parameter(dom, p, rng, 0.1, 2, 5)
            inv = invert_parameter(e)
            ok = all(vanishes(v) for v in compose_parameters(e, inv).comps.values())
            ok &= all(vanishes(v) for v in compose_parameters(inv, e).comps.values())
            return ok, None, 0.0, "two-sided"

        checks.append(_timed(f"action law m={m}", law))
        checks.append(_timed(f"integrability preserved m={m}", integ))
        checks.append(_timed(f"inverse m={m}", inverse))

    def closed_form():
        dom = BallDomain(1, 1.0)
        ok = True
        for k in (1, 2, 3):
            ps = [random_parameter(dom, (2, 1), rng, 0.1, 1, 5) for _ in range(k)]
            comp = compose_many(ps)
            ok &= coefficients_equal(composed_closed_form(ps, 0, 1), comp.get(0, 1))
        return ok, None, 0.0, "k = 1, 2, 3 factors"

    checks.append(_timed("composed closed form", closed_form))
    return checks


def kernel_suite(quick: bool = False) -> list[Check]:
    checks = [_timed("cauchy transform of dzbar",
                     lambda: (lambda e: (e <= 1e-3, e, 1e-3, "default grid"))(cauchy_probe_error()))]
    specs = [(1, (17, 25, 33), 5e-3)] + ([] if quick else [(2, (7, 9, 11), 2e-2)])
    for n, levels, thr in specs:
        def study(n=n, levels=levels, thr=thr):
            forms = smooth_suite(n)[:1] if quick else None
            res = refinement_study(n, levels, forms)
            worst = max(row[-1] for row in res)
            dec = all(all(b < a for a, b in zip(row, row[1:])) for row in res)
            return worst <= thr and dec, worst, thr, f"levels {levels}, strictly decreasing: {dec}"
        checks.append(_timed(f"homotopy formula n={n}", study))

    def interior():
        dom = BallDomain(1, 1.0)
        rng = np.random.default_rng(11)
        from .recalibration import random_form
        samples = [to_grid(random_form(dom, 1, (1, 1), rng, 3, 0.5, 8, False), 25) for _ in range(2 if quick else 3)]
        fit = fit_interior_constant(samples, hs=(0, 1, 2), sigmas=(0.1, 0.25, 0.5), npa=25,
                                    hcfg=HolderConfig(n_samples=600))
        return fit.spread < 2.0, fit.spread, 2.0, f"C = {fit.C:.3g}, per h {fit.per_h}"
    checks.append(_timed("interior estimate constant", interior))
    return checks


def solver_suite(quick: bool = False) -> list[Check]:
    from .nash_moser import SolverConfig, quadratic_decay_report, solve
    checks = []

    def run():
        pr = manufacture_problem(0, 0, 1, (2,), 0.2, dmax=32, exact=False)
        cfg = SolverConfig(r0=1.0, K_max=6 if quick else 8, npa=25 if quick else 33)
        _, _, tr = solve(pr.omega, cfg, eta_star=pr.eta_star)
        cert = tr.certification
        rep = quadratic_decay_report(tr)
        ok = tr.converged and cert["system_max"] <= 10 * tr.floor and cert["equivalence_max"] <= tr.floor
        return ok, cert["system_max"], 10 * tr.floor, f"a_k {['%.2e' % a for a in tr.a]}, order {rep.exponent:.2f}"
    checks.append(_timed("manufactured recovery m=0", run))
    return checks


def real_suite(quick: bool = False) -> list[Check]:
    from .real_case import (NonFlatError, manufacture_flat, poincare_residual, solve_flat)
    checks = []

    def identity():
        rng = np.random.default_rng(4)
        ok = True
        for d, q in ((2, 1), (2, 2), (3, 1), (3, 2)):
            dom = BallDomain(d, 1.0, real=True)
            from .forms import multi_indices
            terms = []
            for I in multi_indices(d, q):
                for _ in range(2):
                    e = tuple(int(x) for x in rng.integers(0, 3, size=d))
                    terms.append((I, e, int(rng.integers(-3, 4))))
            u = FormField.from_terms(dom, q, (1, 1), terms, dmax=8, exact=True)
            ok &= vanishes(poincare_residual(u))
        return ok, None, 0.0, "exact monomial calculus"
    checks.append(_timed("poincare homotopy identity", identity))
    for kind in ("exy",) if quick else ("exy", "unipotent", "generic"):
        def flat(kind=kind):
            pr = manufacture_flat(kind)
            sol = solve_flat(pr.connection)
            return sol.residual <= 1e-6, sol.residual, 1e-6, f"{sol.iterations} iterations"
        checks.append(_timed(f"flat gauge recovery {kind}", flat))

    def reject():
        dom = BallDomain(2, 1.0, real=True)
        A = FormField.from_terms(dom, 1, (1, 1), [((1,), (1, 0), 1.0)], dmax=6)
        try:
            solve_flat(A)
        except NonFlatError as exc:
            return True, exc.residual, None, "rejected"
        return False, None, None, "accepted a non-flat connection"
    checks.append(_timed("non-flat rejected", reject))
    return checks


def run_suite(name: str, quick: bool = False) -> list[Check]:
    table = {"algebra": algebra_suite, "kernels": kernel_suite, "solver": solver_suite, "real": real_suite}
    if name == "all":
        return [c for key in ("algebra", "kernels", "solver", "real") for c in table[key](quick)]
    if name not in table:
        raise KeyError(name)
    return table[name](quick)


def format_table(checks: list[Check]) -> str:
    rows = [f"{'check':40s} {'result':6s} {'value':>11s} {'threshold':>11s} {'s':>6s}"]
    for c in checks:
        v = "" if c.value is None or (isinstance(c.value, float) and math.isnan(c.value)) else f"{c.value:.3e}"
        t = "" if c.threshold is None else f"{c.threshold:.1e}"
        rows.append(f"{c.name:40s} {'PASS' if c.passed else 'FAIL':6s} {v:>11s} {t:>11s} {c.seconds:6.1f}")
    return "\n".join(rows)
