"""Calibrations, recalibration parameters and the recalibration action.

Index conventions.  A calibration of length m with ranks p = (p_0..p_m) has
components w^{s,k} (a (0,k+1)-form with values in p_{s+k} x p_s matrices) for
s = 0..m, k = -1..m-s, (s,k) != (0,-1); phi_s = w^{s,-1} are the resolution
maps.  A parameter eta has components eta^{s,k} ((0,k)-forms, shape
p_{s+k} x p_s) for s = 0..m, k = 0..m-s, and diagonal gauges g_s = I + eta^{s,0}.
Every index outside these ranges is a formal zero; ``get`` returns None there.

The action w -> w_eta is evaluated by increasing k:

    w_eta^{s,k} = g_{s+k}^{-1} ( dbar eta^{s,k} + sum_{j=0}^{k+1} w^{s+j,k-j} ^ eta^{s,j}
                   - sum_{j=-1}^{k-1} (-1)^{k-j} eta^{s+j,k-j} ^ w_eta^{s,j} + w^{s,k} ),
    w_eta^{s,-1} = g_{s-1}^{-1} phi_s g_s.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import poly as P
from .forms import (BallDomain, FormField, GridRep, PolyRep, dbar, from_json as form_from_json,
                    identity_form, matrix_inverse, multi_indices, restrict, to_grid,
                    to_json as form_to_json, truncate_to_precision, vanishes, wedge)
from .holder import HolderConfig, ball_samples, holder_norm, opnorm

DEFAULT_EPSILON = 0.4


class EpsilonViolation(ValueError):
    """A gauge block I + eta^{s,0} left the admissible neighbourhood of I."""


def calibration_indices(m: int) -> list[tuple[int, int]]:
    return [(s, k) for s in range(m + 1) for k in range(-1, m - s + 1) if (s, k) != (0, -1)]


def parameter_indices(m: int) -> list[tuple[int, int]]:
    return [(s, k) for s in range(m + 1) for k in range(0, m - s + 1)]


def _check_family(comps: dict, m: int, p: tuple, indices, degree_of) -> BallDomain:
    if len(p) != m + 1:
        raise ValueError(f"rank vector {p} does not have length m+1 = {m + 1}")
    if set(comps) != set(indices):
        missing = set(indices) - set(comps)
        extra = set(comps) - set(indices)
        raise ValueError(f"component index mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    domain = None
    for (s, k), u in comps.items():
        want_shape = (p[s + k], p[s])
        if u.shape != want_shape:
            raise ValueError(f"component {(s, k)} has shape {u.shape}, expected {want_shape}")
        if u.q != degree_of(k):
            raise ValueError(f"component {(s, k)} has degree {u.q}, expected {degree_of(k)}")
        if domain is None:
            domain = u.domain
        elif u.domain != domain:
            raise ValueError("components live on different domains")
    return domain


@dataclass(frozen=True, eq=False)
class Calibration:
    m: int
    p: tuple
    comps: dict

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(int(x) for x in self.p))
        _check_family(self.comps, self.m, self.p, calibration_indices(self.m), lambda k: k + 1)

    @property
    def domain(self) -> BallDomain:
        return next(iter(self.comps.values())).domain

    @property
    def r(self) -> float:
        return self.domain.r

    def get(self, s: int, k: int) -> FormField | None:
        return self.comps.get((s, k))

    def phi(self, s: int) -> FormField | None:
        return self.comps.get((s, -1))

    def map(self, f) -> "Calibration":
        return Calibration(self.m, self.p, {key: f(u) for key, u in self.comps.items()})

    def restrict(self, r: float, npa: int | None = None) -> "Calibration":
        return self.map(lambda u: restrict(u, r, npa))

    def to_grid(self, grid, derivative: str = "fit") -> "Calibration":
        return self.map(lambda u: to_grid(u, grid, derivative))

    def to_json(self) -> dict:
        return {"m": self.m, "p": list(self.p),
                "components": {f"{s},{k}": form_to_json(u) for (s, k), u in self.comps.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "Calibration":
        try:
            comps = {tuple(int(x) for x in key.split(",")): form_from_json(v)
                     for key, v in obj["components"].items()}
            return cls(int(obj["m"]), tuple(obj["p"]), comps)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed calibration: {exc}") from exc

    @classmethod
    def trivial(cls, domain: BallDomain, p, phis: dict | None = None, rep=None) -> "Calibration":
        """w^{s,k} = 0 for k >= 0 and constant resolution maps phi_s."""
        rep = rep or PolyRep()
        p = tuple(p)
        m = len(p) - 1
        comps = {}
        for s, k in calibration_indices(m):
            shape = (p[s + k], p[s])
            if k == -1 and phis is not None and s in phis:
                comps[(s, k)] = _constant_like(domain, np.asarray(phis[s]), rep)
            else:
                comps[(s, k)] = FormField.zero(domain, k + 1, shape, rep)
        return cls(m, p, comps)


@dataclass(frozen=True, eq=False)
class RecalParameter:
    m: int
    p: tuple
    comps: dict

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(int(x) for x in self.p))
        _check_family(self.comps, self.m, self.p, parameter_indices(self.m), lambda k: k)

    @property
    def domain(self) -> BallDomain:
        return next(iter(self.comps.values())).domain

    def get(self, s: int, k: int) -> FormField | None:
        return self.comps.get((s, k))

    def g(self, s: int) -> FormField:
        e = self.comps[(s, 0)]
        return identity_form(e.domain, self.p[s], e.rep) + e

    def g_inv(self, s: int) -> FormField:
        return matrix_inverse(self.g(s))

    def map(self, f) -> "RecalParameter":
        return RecalParameter(self.m, self.p, {key: f(u) for key, u in self.comps.items()})

    def restrict(self, r: float, npa: int | None = None) -> "RecalParameter":
        return self.map(lambda u: restrict(u, r, npa))

    def is_zero(self) -> bool:
        return all(u.is_zero() for u in self.comps.values())

    def to_json(self) -> dict:
        return {"m": self.m, "p": list(self.p),
                "components": {f"{s},{k}": form_to_json(u) for (s, k), u in self.comps.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "RecalParameter":
        try:
            comps = {tuple(int(x) for x in key.split(",")): form_from_json(v)
                     for key, v in obj["components"].items()}
            return cls(int(obj["m"]), tuple(obj["p"]), comps)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed parameter: {exc}") from exc

    @classmethod
    def zero(cls, domain: BallDomain, p, rep=None) -> "RecalParameter":
        rep = rep or PolyRep()
        p = tuple(p)
        m = len(p) - 1
        return cls(m, p, {(s, k): FormField.zero(domain, k, (p[s + k], p[s]), rep)
                          for s, k in parameter_indices(m)})


def _constant_like(domain: BallDomain, M: np.ndarray, rep) -> FormField:
    if isinstance(rep, PolyRep):
        return FormField.constant(domain, M, rep.dmax, rep.exact)
    A = np.broadcast_to(np.asarray(M, dtype=complex), (rep.grid.npts,) + M.shape).copy()
    return FormField(domain, 0, M.shape, rep, {(): A})


def _same_family(a, b):
    if a.m != b.m or a.p != b.p:
        raise ValueError(f"length/rank mismatch: (m={a.m}, p={a.p}) vs (m={b.m}, p={b.p})")


def _acc(total: FormField | None, term: FormField | None, sign: int = 1) -> FormField | None:
    if term is None:
        return total
    if sign < 0:
        term = -term
    return term if total is None else total + term


# -- the semigroup ----------------------------------------------------------------

def compose_parameters(e1: RecalParameter, e2: RecalParameter) -> RecalParameter:
    """(e1 ^ e2)^{s,k} = e1^{s,k} + e2^{s,k} + sum_{j=0}^k e1^{s+j,k-j} ^ e2^{s,j}."""
    _same_family(e1, e2)
    comps = {}
    for s, k in parameter_indices(e1.m):
        total = e1.get(s, k) + e2.get(s, k)
        for j in range(k + 1):
            total = total + wedge(e1.get(s + j, k - j), e2.get(s, j))
        comps[(s, k)] = total
    return RecalParameter(e1.m, e1.p, comps)


def compose_many(params) -> RecalParameter:
    """Rightward product e_1 ^ e_2 ^ ... ^ e_k."""
    params = list(params)
    out = params[0]
    for e in params[1:]:
        out = compose_parameters(out, e)
    return out


def invert_parameter(eta: RecalParameter, eps: float | None = None) -> RecalParameter:
    """The parameter e' with eta ^ e' = 0, by increasing-k back-substitution."""
    if eps is not None:
        check_epsilon(eta, eps)
    ginv = {s: _safe_inverse(eta.g(s), s) for s in range(eta.m + 1)}
    comps: dict = {}
    for k in range(eta.m + 1):
        for s in range(eta.m - k + 1):
            rhs = eta.get(s, k)
            for j in range(k):
                rhs = rhs + wedge(eta.get(s + j, k - j), comps[(s, j)])
            comps[(s, k)] = -wedge(ginv[s + k], rhs)
    return RecalParameter(eta.m, eta.p, comps)


def _safe_inverse(g: FormField, s: int) -> FormField:
    try:
        return matrix_inverse(g)
    except np.linalg.LinAlgError as exc:
        raise EpsilonViolation(f"gauge block g_{s} is singular") from exc


def check_epsilon(eta: RecalParameter, eps: float = DEFAULT_EPSILON, n_points: int = 256) -> float:
    """sup_z ||eta^{s,0}(z)|| over sample points; raises EpsilonViolation when >= eps."""
    worst = 0.0
    for s in range(eta.m + 1):
        e = eta.get(s, 0)
        if e.is_zero():
            continue
        D = e.domain.real_dim
        X = ball_samples(D, e.r, n_points, 20240601)
        vals = truncate_to_precision(e).values_at(X)[()]
        worst = max(worst, float(opnorm(vals).max()))
    if worst >= eps:
        raise EpsilonViolation(f"sup ||eta^(s,0)|| = {worst:.4g} >= epsilon = {eps}")
    return worst


# -- the action ---------------------------------------------------------------------

def recalibrate(eta: RecalParameter, omega: Calibration) -> Calibration:
    """The recalibrated calibration omega_eta (increasing-k recursion)."""
    _same_family(eta, omega)
    m = omega.m
    ginv = {s: _safe_inverse(eta.g(s), s) for s in range(m + 1)}
    out: dict = {}
    for s in range(1, m + 1):
        out[(s, -1)] = wedge(wedge(ginv[s - 1], omega.phi(s)), eta.g(s))
    for k in range(0, m + 1):
        for s in range(0, m - k + 1):
            total = dbar(eta.get(s, k)) + omega.get(s, k)
            for j in range(0, k + 2):
                w = omega.get(s + j, k - j)
                e = eta.get(s, j)
                if w is not None and e is not None:
                    total = total + wedge(w, e)
            for j in range(-1, k):
                e = eta.get(s + j, k - j)
                if e is None:
                    continue
                # the recursion only ever needs lower k, already in ``out``
                assert (s, j) in out or (s, j) == (0, -1), "recalibration evaluated out of order"
                w = out.get((s, j))
                if w is None:
                    continue
                total = _acc(total, wedge(e, w), -1 if (k - j) % 2 == 0 else 1)
            out[(s, k)] = wedge(ginv[s + k], total)
    return Calibration(m, omega.p, out)


# -- residuals --------------------------------------------------------------------

def _norm0(u: FormField, hcfg: HolderConfig | None) -> float:
    u = truncate_to_precision(u)
    if u.is_zero():
        return 0.0
    return float(holder_norm(u, h=0, config=hcfg))


def integrability_terms(omega: Calibration) -> dict:
    """Left-hand sides dbar w^{s,k} + sum_{j=-1}^{k+1} (-1)^{k-j} w^{s+j,k-j} ^ w^{s,j}."""
    out = {}
    n = omega.domain.n
    for s, k in calibration_indices(omega.m):
        if k + 2 > n:
            continue
        total = dbar(omega.get(s, k))
        for j in range(-1, k + 2):
            a = omega.get(s + j, k - j)
            b = omega.get(s, j)
            if a is None or b is None:
                continue
            total = total + wedge(a, b) if (k - j) % 2 == 0 else total - wedge(a, b)
        out[(s, k)] = total
    return out


def integrability_residual(omega: Calibration, hcfg: HolderConfig | None = None) -> dict:
    """Sup norms of the integrability expressions, per (s,k); degree-excluded entries are 0."""
    terms = integrability_terms(omega)
    return {key: (_norm0(terms[key], hcfg) if key in terms else 0.0)
            for key in calibration_indices(omega.m)}


def composition_residual(omega: Calibration, hcfg: HolderConfig | None = None) -> dict:
    """Norms of phi_{s-1} phi_s for s = 2..m."""
    return {s: _norm0(wedge(omega.phi(s - 1), omega.phi(s)), hcfg) for s in range(2, omega.m + 1)}


def system_terms(eta: RecalParameter, omega: Calibration) -> dict:
    """Left-hand sides of the quasi-linear system for eta, k >= 0."""
    _same_family(eta, omega)
    m = omega.m
    ginv = {s: _safe_inverse(eta.g(s), s) for s in range(m + 1)}
    out = {}
    for s, k in parameter_indices(m):
        total = dbar(eta.get(s, k)) + omega.get(s, k)
        for j in range(0, k + 2):
            w = omega.get(s + j, k - j)
            e = eta.get(s, j)
            if w is not None and e is not None:
                total = total + wedge(w, e)
        e = eta.get(s - 1, k + 1)
        if e is not None:
            phi_eta = wedge(wedge(ginv[s - 1], omega.phi(s)), eta.g(s))
            total = total + wedge(e, phi_eta) if k % 2 == 0 else total - wedge(e, phi_eta)
        out[(s, k)] = total
    return out


def system_residual(eta: RecalParameter, omega: Calibration, hcfg: HolderConfig | None = None) -> dict:
    return {key: _norm0(u, hcfg) for key, u in system_terms(eta, omega).items()}


def sigma_residual(eta: RecalParameter, omega: Calibration, hcfg: HolderConfig | None = None) -> dict:
    """s >= 1: ||dbar(g_{s-1}^{-1} phi_s g_s)||; s = 0: ||w_eta^{0,0}||."""
    _same_family(eta, omega)
    out = {}
    rec00 = recalibrate(eta, omega).get(0, 0)
    out[0] = _norm0(rec00, hcfg)
    for s in range(1, omega.m + 1):
        ginv = _safe_inverse(eta.g(s - 1), s - 1)
        out[s] = _norm0(dbar(wedge(wedge(ginv, omega.phi(s)), eta.g(s))), hcfg)
    return out


def leibniz_error(a: FormField, b: FormField, hcfg: HolderConfig | None = None) -> float:
    """||dbar(a b) - dbar(a) b - a dbar(b)|| (h=0): the product-rule defect of the discretisation."""
    lhs = dbar(wedge(a, b))
    sign = -1 if a.q % 2 else 1
    rhs = wedge(dbar(a), b) + (wedge(a, dbar(b)) if sign > 0 else -wedge(a, dbar(b)))
    return _norm0(lhs - rhs, hcfg)


# -- the closed form of iterated products -------------------------------------------

def _delta(t: int):
    """Compositions of t padded by zeros: tau in N^t, nonzero entries first, sum t."""
    for rho in range(1, t + 1):
        for cut in itertools.combinations(range(1, t), rho - 1):
            parts = np.diff((0,) + cut + (t,))
            yield tuple(int(x) for x in parts) + (0,) * (t - rho)


def running_gauges(params: list[RecalParameter]) -> dict:
    """g_s(j) = g_{s,1} ... g_{s,j} for j = 0..k (g_s(0) = I)."""
    m, p = params[0].m, params[0].p
    e0 = params[0].get(0, 0)
    out = {}
    for s in range(m + 1):
        cur = identity_form(e0.domain, p[s], e0.rep)
        out[(s, 0)] = cur
        for j, e in enumerate(params, start=1):
            cur = wedge(cur, e.g(s))
            out[(s, j)] = cur
    return out


def composed_closed_form(params: list[RecalParameter], s: int, t: int) -> FormField:
    """eta(k)^{s,t} (t >= 1) as the sum over tau in Delta_t and increasing J of products."""
    k = len(params)
    gs = running_gauges(params)
    ginv = {key: matrix_inverse(v) for key, v in gs.items()}
    total = None
    for tau in _delta(t):
        rho = max(i + 1 for i, x in enumerate(tau) if x)
        for J in itertools.combinations(range(1, k + 1), rho):
            prod = None
            for r in range(1, rho + 1):
                sig_p = sum(tau[:rho + 1 - r])
                sig = sum(tau[:rho - r])
                jr = J[r - 1]
                e = params[jr - 1].get(s + sig, tau[rho - r])
                if e is None:
                    prod = None
                    break
                fac = wedge(wedge(gs[(s + sig_p, jr - 1)], e), ginv[(s + sig, jr)])
                prod = fac if prod is None else wedge(prod, fac)
            if prod is not None:
                total = _acc(total, prod)
    if total is None:
        e = params[0].get(s, t)
        return FormField.zero(e.domain, t, e.shape, e.rep)
    return wedge(total, gs[(s, k)])


# -- manufactured problems ------------------------------------------------------------

def resolution_maps(p) -> dict:
    """Constant phi_s (p_{s-1} x p_s) forming an exact chain with phi_m injective.

    Ranks are forced: rho_m = p_m, rho_s = p_s - rho_{s+1}; phi_s sends the
    last rho_s basis vectors onto the first rho_s ones.  Raises ValueError
    when the ranks cannot be met.
    """
    p = tuple(int(x) for x in p)
    m = len(p) - 1
    if any(x < 1 for x in p):
        raise ValueError("ranks must be positive")
    rho = {m + 1: 0}
    for s in range(m, 0, -1):
        rho[s] = p[s] - rho[s + 1]
        if rho[s] < 0 or rho[s] > p[s - 1]:
            raise ValueError(f"rank chain p={p} admits no exact resolution (rank of phi_{s} would be {rho[s]})")
        if s < m and rho[s] == 0:
            raise ValueError(f"rank chain p={p} forces phi_{s} = 0")
    phis = {}
    for s in range(1, m + 1):
        M = np.zeros((p[s - 1], p[s]))
        for i in range(rho[s]):
            M[i, p[s] - rho[s] + i] = 1.0
        phis[s] = M
    return phis


def random_form(domain: BallDomain, q: int, shape, rng: np.random.Generator, degree: int = 2,
                scale: float = 1.0, dmax: int = 6, exact: bool = True, density: float = 0.6) -> FormField:
    """Random polynomial form with dyadic coefficients (exactly representable)."""
    terms = []
    nv = domain.nvars
    exps = [e for e in itertools.product(range(degree + 1), repeat=nv) if sum(e) <= degree]
    for I in multi_indices(domain.n, q):
        for e in exps:
            if rng.random() > density:
                continue
            re = rng.integers(-8, 9, size=shape) / 16.0
            im = rng.integers(-8, 9, size=shape) / 16.0 if not domain.real else np.zeros(shape)
            M = scale * (re + 1j * im)
            terms.append((I, e, M))
    return FormField.from_terms(domain, q, shape, terms, dmax, exact) if terms else \
        FormField.zero(domain, q, shape, PolyRep(dmax=dmax, exact=exact))


def random_parameter(domain: BallDomain, p, rng: np.random.Generator, scale: float = 0.1,
                     degree: int = 2, dmax: int = 6, exact: bool = True) -> RecalParameter:
    p = tuple(p)
    m = len(p) - 1
    comps = {}
    for s, k in parameter_indices(m):
        shape = (p[s + k], p[s])
        if k > domain.n:
            comps[(s, k)] = FormField.zero(domain, k, shape, PolyRep(dmax=dmax, exact=exact))
        else:
            comps[(s, k)] = random_form(domain, k, shape, rng, degree, scale, dmax, exact)
    return RecalParameter(m, p, comps)


@dataclass(eq=False)
class ResolutionProblem:
    omega: Calibration
    eta_star: RecalParameter | None = None
    eta_gen: RecalParameter | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.omega.m

    def to_json(self) -> dict:
        out = {"format": "dbarproblem", "version": 1, "field": "real" if self.omega.domain.real else "complex",
               "meta": self.meta, "calibration": self.omega.to_json()}
        if self.eta_star is not None:
            out["reference"] = {"eta_star": self.eta_star.to_json()}
            if self.eta_gen is not None:
                out["reference"]["eta_generator"] = self.eta_gen.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ResolutionProblem":
        if not isinstance(obj, dict) or "calibration" not in obj:
            raise ValueError("not a problem record")
        omega = Calibration.from_json(obj["calibration"])
        ref = obj.get("reference") or {}
        es = RecalParameter.from_json(ref["eta_star"]) if "eta_star" in ref else None
        eg = RecalParameter.from_json(ref["eta_generator"]) if "eta_generator" in ref else None
        return cls(omega, es, eg, dict(obj.get("meta", {})))


def manufacture_problem(seed: int, m: int, n: int, p, difficulty: float, degree: int = 2,
                        dmax: int = 8, exact: bool = True, r: float = 1.0,
                        eps: float = DEFAULT_EPSILON, retries: int = 4) -> ResolutionProblem:
    """omega = recalibrate(eta, omega_0) for a random eta; the reference solution is eta^{-1}."""
    p = tuple(int(x) for x in p)
    if len(p) != m + 1:
        raise ValueError(f"rank vector {p} does not match m = {m}")
    if m > 3 or n > 2:
        raise ValueError("manufactured problems are limited to m <= 3, n <= 2")
    if difficulty < 0:
        raise ValueError("difficulty must be non-negative")
    phis = resolution_maps(p) if m >= 1 else {}
    dom = BallDomain(n, r)
    rep = PolyRep(dmax=dmax, exact=exact)
    omega0 = Calibration.trivial(dom, p, phis, rep)
    meta = {"seed": seed, "m": m, "n": n, "p": list(p), "difficulty": difficulty, "degree": degree,
            "dmax": dmax}
    if difficulty == 0:
        return ResolutionProblem(omega0, RecalParameter.zero(dom, p, rep), RecalParameter.zero(dom, p, rep), meta)
    scale = difficulty
    for _ in range(retries + 1):
        rng = np.random.default_rng(seed)
        eta = random_parameter(dom, p, rng, 1.0, degree, dmax, exact)
        # normalise so that sup ||eta^{s,0}|| equals the difficulty
        sup = max(_sup_norm(eta.get(s, 0)) for s in range(m + 1))
        # a dyadic factor keeps exact coefficients small
        factor = max(round(64 * scale / sup), 1) / 64 if sup > 0 else 0.0
        eta = eta.map(lambda u: u.scale(factor))
        try:
            check_epsilon(eta, eps)
        except EpsilonViolation:
            scale *= 0.5
            continue
        omega = recalibrate(eta, omega0)
        return ResolutionProblem(omega, invert_parameter(eta), eta, meta)
    raise EpsilonViolation(f"difficulty {difficulty} too large for epsilon {eps}")


def _sup_norm(u: FormField) -> float:
    if u.is_zero():
        return 0.0
    X = ball_samples(u.domain.real_dim, u.r, 512, 7)
    return float(opnorm(truncate_to_precision(u).values_at(X)[()]).max())
