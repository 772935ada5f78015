"""Real manifolds: the radial (Poincare) homotopy and flat connections.

On a ball in R^d the radial homotopy

    (P u)(x) = sum_I sum_k (-1)^k x_{I_k} int_0^1 t^q u_I(t x) dt  dx_{I minus I_k}

inverts d on closed forms: u = dPu + Pdu.  A flat connection A (dA + A^A = 0)
has a parallel frame g, dg + Ag = 0, found by the fixed-radius iteration
eta_{k+1} = -P(w_k), w_{k+1} = R(eta_{k+1}, w_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import poly as P
from .forms import (BallDomain, FormField, GridRep, PolyRep, dbar, identity_form, truncate_to_precision,
                    wedge)
from .holder import HolderConfig, holder_norm
from .recalibration import (DEFAULT_EPSILON, Calibration, EpsilonViolation, RecalParameter,
                            check_epsilon, compose_parameters, recalibrate)


class NonFlatError(ValueError):
    """The connection violates dA + A^A = 0 beyond the tolerance."""

    def __init__(self, residual: float, tol: float):
        super().__init__(f"connection is not flat: ||dA + A^A|| = {residual:.3e} > {tol:.1e}")
        self.residual = residual
        self.tol = tol


def _check_real(u: FormField):
    if not u.domain.real:
        raise ValueError("expected a form on a real ball")


def _shift_table(basis: P.MonomialBasis, v: int) -> np.ndarray:
    """Index of x_v * monomial (or -1 past the degree budget)."""
    key = ("shift", v)
    tab = basis._deriv.get(key)
    if tab is None:
        tab = np.full(basis.size, -1, dtype=np.int64)
        for i, e in enumerate(basis.exps):
            e2 = e.copy()
            e2[v] += 1
            tab[i] = basis.index.get(tuple(e2), -1)
        basis._deriv[key] = tab
    return tab


def _poincare_poly(u: FormField) -> FormField:
    q = u.q - 1
    basis = u.basis
    exact = u.exact
    M = basis.size
    weights = [Fraction(1, q + int(dg) + 1) for dg in basis.degree]
    if exact:
        wvec = np.array([P.exact_scalar(w) for w in weights], dtype=object)
    else:
        wvec = np.array([float(w) for w in weights])
    comps: dict = {}
    dropped = False
    for I, A in u.comps.items():
        W = A * wvec[:, None, None]
        for k, v in enumerate(I):
            J = I[:k] + I[k + 1:]
            tgt = _shift_table(basis, v)
            keep = tgt >= 0
            nz = P.nonzero_mask(W)
            if (nz & ~keep).any():
                dropped = True
            out = comps.get(J)
            if out is None:
                out = P.zeros((M,) + A.shape[1:], exact)
            sgn = (-1) ** k
            src = np.nonzero(keep & nz)[0]
            for i in src:
                out[tgt[i]] = out[tgt[i]] + (W[i] if sgn > 0 else -W[i])
            comps[J] = out
    prec = u.rep.prec
    if dropped:
        prec = min(prec, u.rep.dmax)
    return u._like(q=q, comps=comps, rep=replace(u.rep, prec=prec))


def _poincare_grid(u: FormField, n_t: int | None = None) -> FormField:
    q = u.q - 1
    g = u.rep.grid
    X = g.nodes
    n_t = n_t or g.fit_degree // 2 + 2
    t, w = np.polynomial.legendre.leggauss(n_t)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w * t ** q
    comps: dict = {}
    for I, A in u.comps.items():
        coef = g.fit(A)
        avg = sum(wi * g.eval_fit(coef, ti * X) for ti, wi in zip(t, w))
        for k, v in enumerate(I):
            J = I[:k] + I[k + 1:]
            term = X[:, v][:, None, None] * avg
            term = term if k % 2 == 0 else -term
            comps[J] = comps[J] + term if J in comps else term
    return u._like(q=q, comps=comps)


def poincare_operator(u: FormField, n_t: int | None = None) -> FormField:
    """Radial homotopy of a (q+1)-form on a real ball; exact on polynomials in PolyRep."""
    _check_real(u)
    if u.q < 1:
        raise ValueError("the homotopy acts on forms of degree >= 1")
    if u.is_zero():
        return u._like(q=u.q - 1, comps={})
    return _poincare_poly(u) if u.is_poly else _poincare_grid(u, n_t)


def poincare_residual(u: FormField) -> FormField:
    """u - dPu - Pdu (identically zero up to the representation)."""
    out = u - dbar(poincare_operator(u))
    du = dbar(u)
    if not du.is_zero():
        out = out - poincare_operator(du)
    return out


# -- flat connections ------------------------------------------------------------------

def _norm0(u: FormField, hcfg: HolderConfig | None) -> float:
    if u.is_zero():
        return 0.0
    return holder_norm(truncate_to_precision(u), h=0, config=hcfg)


def flatness_residual(A: FormField, hcfg: HolderConfig | None = None) -> float:
    _check_real(A)
    return _norm0(dbar(A) + wedge(A, A), hcfg)


def parallel_residual(g: FormField, A: FormField, hcfg: HolderConfig | None = None) -> float:
    """||dg + Ag||_0."""
    return _norm0(dbar(g) + wedge(A, g), hcfg)


@dataclass
class FlatSolution:
    g: FormField
    radius: float
    a: list = field(default_factory=list)
    residual: float = 0.0
    column_residuals: list = field(default_factory=list)
    flatness: float = 0.0
    shrunk: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.a) - 1, 0)


def solve_flat(A: FormField, tol: float = 1e-8, floor: float = 1e-13, K_max: int = 30,
               eps: float = DEFAULT_EPSILON, hcfg: HolderConfig | None = None,
               patience: int = 2) -> FlatSolution:
    """Parallel frame g of a flat connection A at fixed radius (one radius halving on an epsilon violation)."""
    _check_real(A)
    if A.q != 1 or A.shape[0] != A.shape[1]:
        raise ValueError("the connection must be a square matrix-valued 1-form")
    F = flatness_residual(A, hcfg)
    if F > tol:
        raise NonFlatError(F, tol)
    try:
        return _iterate(A, floor, K_max, eps, hcfg, patience, F, False)
    except EpsilonViolation:
        A2 = A.with_domain(A.domain.with_radius(0.5 * A.r)) if A.is_poly else None
        if A2 is None:
            from .forms import restrict
            A2 = restrict(A, 0.5 * A.r)
        return _iterate(A2, floor, K_max, eps, hcfg, patience, F, True)


def _iterate(A, floor, K_max, eps, hcfg, patience, F, shrunk) -> FlatSolution:
    from .nash_moser import DivergenceError
    p = A.shape[0]
    om = Calibration(0, (p,), {(0, 0): A})
    total = RecalParameter.zero(A.domain, (p,), A.rep)
    a = []
    grow = 0
    for k in range(K_max + 1):
        w = om.get(0, 0)
        a_k = _norm0(w, hcfg)
        a.append(a_k)
        if k and a_k > a[-2]:
            grow += 1
            if grow >= patience:
                raise DivergenceError(f"a_k increased on {grow} consecutive steps")
        else:
            grow = 0
        if a_k <= floor or k == K_max:
            break
        eta = RecalParameter(0, (p,), {(0, 0): -poincare_operator(w)})
        if eta.get(0, 0).is_poly:
            check_epsilon(eta, eps)
        om = recalibrate(eta, om)
        total = compose_parameters(total, eta)
    g = total.g(0)
    cols = []
    for j in range(p):
        sel = np.zeros((p, 1))
        sel[j, 0] = 1.0
        cols.append(parallel_residual(g.rmul(sel), A, hcfg))
    return FlatSolution(g=g, radius=A.r, a=a, residual=parallel_residual(g, A, hcfg),
                        column_residuals=cols, flatness=F, shrunk=shrunk)


# -- manufactured connections ----------------------------------------------------------------

def exp_xy_connection(dmax: int = 24, r: float = 1.0) -> tuple[FormField, FormField]:
    """A = -d(e^{xy}) e^{-xy} = -(y dx + x dy) and the truncated gauge e^{xy}."""
    dom = BallDomain(2, r, real=True)
    A = FormField.from_terms(dom, 1, (1, 1), [((0,), (0, 1), -1), ((1,), (1, 0), -1)], dmax=dmax)
    terms = [((), (j, j), 1.0 / math.factorial(j)) for j in range(dmax // 2 + 1)]
    g = FormField.from_terms(dom, 0, (1, 1), terms, dmax=dmax)
    return A, g


def gauge_connection(g: FormField) -> FormField:
    """A = -dg g^{-1}, the connection with parallel frame g."""
    from .forms import matrix_inverse
    return -wedge(dbar(g), matrix_inverse(g))


def unipotent_gauge(dmax: int = 16, r: float = 1.0, exact: bool = False) -> FormField:
    """[[1, x^2 y / 2 + x / 4], [0, 1]]."""
    dom = BallDomain(2, r, real=True)
    terms = [(1, (0, 0), (), (0, 0)), (1, (0, 0), (), (1, 1)),
             (Fraction(1, 2), (2, 1), (), (0, 1)), (Fraction(1, 4), (1, 0), (), (0, 1))]
    return _matrix_poly(dom, terms, dmax, exact)


def _matrix_poly(dom, terms, dmax, exact) -> FormField:
    basis = P.monomial_basis(dom.nvars, dmax)
    A = P.zeros((basis.size, 2, 2), exact)
    for c, e, _, (i, j) in terms:
        idx = basis.index[tuple(e)]
        A[idx, i, j] = A[idx, i, j] + (P.exact_scalar(c) if exact else complex(float(c)))
    return FormField(dom, 0, (2, 2), PolyRep(dmax=dmax, exact=exact), {(): A})


def generic_gauge(dmax: int = 20, r: float = 1.0) -> FormField:
    """I + a small full polynomial matrix (its inverse is a genuine series)."""
    dom = BallDomain(2, r, real=True)
    terms = [(1, (0, 0), (), (0, 0)), (1, (0, 0), (), (1, 1)),
             (0.25, (1, 0), (), (0, 0)), (0.125, (0, 1), (), (0, 1)),
             (-0.125, (1, 1), (), (1, 0)), (0.125, (0, 2), (), (1, 1))]
    return _matrix_poly(dom, terms, dmax, False)


REAL_GAUGES = ("exy", "unipotent", "generic")


@dataclass(eq=False)
class FlatProblem:
    connection: FormField
    gauge: FormField | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        from .forms import to_json
        out = {"format": "dbarproblem", "version": 1, "field": "real", "meta": self.meta,
               "connection": to_json(self.connection)}
        if self.gauge is not None:
            out["reference"] = {"gauge": to_json(self.gauge)}
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FlatProblem":
        from .forms import from_json
        if not isinstance(obj, dict) or obj.get("field") != "real" or "connection" not in obj:
            raise ValueError("not a real problem record")
        ref = obj.get("reference") or {}
        g = from_json(ref["gauge"]) if "gauge" in ref else None
        A = from_json(obj["connection"])
        _check_real(A)
        return cls(A, g, dict(obj.get("meta", {})))


def manufacture_flat(kind: str = "exy", dmax: int | None = None) -> FlatProblem:
    """Manufactured flat connections on the unit ball of R^2 with known parallel frames."""
    if kind == "exy":
        A, g = exp_xy_connection(dmax or 24)
    elif kind == "unipotent":
        g = unipotent_gauge(dmax or 16)
        A = gauge_connection(g)
    elif kind == "generic":
        g = generic_gauge(dmax or 20)
        A = gauge_connection(g)
    else:
        raise ValueError(f"unknown gauge kind {kind!r}; choose from {REAL_GAUGES}")
    return FlatProblem(A, g, {"kind": kind, "d": 2, "dmax": A.rep.dmax})
