"""Rapid-convergence (Nash-Moser) driver for the quasi-linear system of a calibration.

Step k works on the ball B_{r_k}:

    eta_{k+1}^{s,t} = -T_{r(k,m-t)} ( w_k^{s,t} + w_k^{s+t+1,-1} ^ eta^{s,t+1}
                                      + (-1)^t eta^{s-1,t+1} ^ w_k^{s,-1} ),   t = m..0,

with r(k,l) = r_k (1 - l sigma_{m,k}), sigma_{m,k} = sigma_k/(m+1), sigma_k = e^{-k-2}.
The transform at level t maps B_{r(k,m-t)} to B_{r(k,m-t+1)}, so the finished
parameter lives on B_{r(k,m+1)} = B_{r_{k+1}}, where w_{k+1} = R(eta_{k+1}, w_k).
The running parameter eta(k) is the rightward product of the step parameters.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .forms import FormField, GridRep, dbar, identity_form, matrix_inverse, restrict, to_grid, wedge
from .grid import make_grid
from .holder import (HolderConfig, WeightSequence, build_weights, cutoff_derivative_bounds,
                     derivative_norms, holder_norm, opnorm)
from .kernels import KernelConfig, homotopy_residual, leray_koppelman, s_exponent
from .recalibration import (DEFAULT_EPSILON, Calibration, EpsilonViolation, RecalParameter,
                            compose_parameters, integrability_residual, parameter_indices,
                            recalibrate, sigma_residual, system_residual)

BETA_GATE = 0.5 + 1.0 / (4.0 * math.log(2.0))


class DivergenceError(RuntimeError):
    """a_k grew on consecutive steps."""


class RoughProblemError(ValueError):
    """No initial radius in the search bracket passes the gates."""


# -- schedules -----------------------------------------------------------------------

def sigma_k(k: int) -> float:
    return math.exp(-k - 2)


def sigma_mk(m: int, k: int) -> float:
    return sigma_k(k) / (m + 1)


def radius_schedule(r0: float, K: int) -> list[float]:
    """r_0..r_K with r_{k+1} = r_k (1 - sigma_k)."""
    rs = [float(r0)]
    for k in range(K):
        rs.append(rs[-1] * (1.0 - sigma_k(k)))
    return rs


def limit_radius_ratio(tol: float = 0.0) -> float:
    """prod_{k>=0} (1 - e^{-k-2}), summed in log space until the terms underflow."""
    acc = 0.0
    k = 0
    while True:
        term = math.log1p(-sigma_k(k))
        acc += term
        if abs(term) < 1e-18 or k > 200:
            break
        k += 1
    return math.exp(acc)


def sub_radius(rk: float, m: int, k: int, l: int) -> float:
    return rk * (1.0 - l * sigma_mk(m, k))


def nu(m: int, n: int, h: int) -> int:
    return ((m + 2) * m + 1) * s_exponent(n, h)


def gamma(m: int, n: int, j: int) -> int:
    return (m + 1) * s_exponent(n, j)


# -- configuration and trace ------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    r0: float | None = None  # None: run the initial-radius search
    r_bracket: tuple = (1e-6, 1.0)
    K_max: int = 8
    abs_floor: float = 1e-10
    floor_factor: float = 1.0
    eps: float = DEFAULT_EPSILON
    H: float | None = None  # None: 1 for gating, estimated from the run afterwards
    C: float | None = None  # interior constant; None: KernelConfig.C
    npa: int | None = None  # grid points per axis; default 33 (n=1), 13 (n=2)
    hmax: int = 4
    sigma_rule: str = "exponential"
    max_restarts: int = 3
    divergence_patience: int = 2
    kernel: KernelConfig = field(default_factory=KernelConfig)
    holder: HolderConfig = field(default_factory=lambda: HolderConfig(n_samples=800))

    def __post_init__(self):
        if self.K_max < 1:
            raise ValueError("K_max must be at least 1")
        if self.abs_floor <= 0 or self.floor_factor <= 0:
            raise ValueError("floors must be positive")
        if not (0 < self.eps < 0.5):
            raise ValueError("epsilon must lie in (0, 1/2)")
        if self.sigma_rule != "exponential":
            raise ValueError("only the exponential schedule sigma_k = e^{-k-2} is supported")
        if self.r0 is not None and not (0 < self.r0 <= 1):
            raise ValueError("r0 must lie in (0, 1]")

    def grid_npa(self, n: int) -> int:
        return self.npa if self.npa is not None else (33 if n == 1 else 13)

    def kernel_C(self) -> float:
        return self.kernel.C if self.C is None else self.C


@dataclass
class StepRecord:
    k: int
    r_k: float
    sigma_k: float
    a_k: float
    b_k: float
    h: int
    S_next: float | None = None
    R_next: float | None = None
    L_next: float | None = None
    S_flag: str = ""
    residuals: dict = field(default_factory=dict)
    eta_norms: dict = field(default_factory=dict)
    phi_norms: dict = field(default_factory=dict)
    gauge_norms: dict = field(default_factory=dict)
    data_cap_ok: bool = True
    gauge_cap_ok: bool = True
    seconds: float = 0.0


@dataclass
class IterationTrace:
    m: int
    n: int
    r0: float
    steps: list = field(default_factory=list)
    weights: WeightSequence | None = None
    floor: float = 0.0
    c_omega: float = 0.0
    converged: bool = False
    restarts: int = 0
    gate: dict = field(default_factory=dict)
    certification: dict = field(default_factory=dict)

    @property
    def a(self) -> list[float]:
        return [st.a_k for st in self.steps]

    @property
    def radii(self) -> list[float]:
        return [st.r_k for st in self.steps]

    def csv_rows(self) -> list[dict]:
        return [{"k": st.k, "r_k": st.r_k, "sigma_k": st.sigma_k, "a_k": st.a_k, "b_k": st.b_k,
                 "residual_max": max(st.residuals.values(), default=0.0), "seconds": st.seconds}
                for st in self.steps]

    def to_json(self) -> dict:
        def clean(d):
            return {(",".join(map(str, k)) if isinstance(k, tuple) else str(k)): v for k, v in d.items()}
        steps = []
        for st in self.steps:
            rec = asdict(st)
            for key in ("residuals", "eta_norms", "phi_norms", "gauge_norms"):
                rec[key] = clean(getattr(st, key))
            steps.append(rec)
        return {"m": self.m, "n": self.n, "r0": self.r0, "floor": self.floor, "c_omega": self.c_omega,
                "converged": self.converged, "restarts": self.restarts, "gate": self.gate,
                "weights": self.weights.to_json() if self.weights else None,
                "certification": {k: clean(v) if isinstance(v, dict) else v
                                  for k, v in self.certification.items()},
                "steps": steps}


# -- helpers ---------------------------------------------------------------------------------

def _grid_for(n: int, r: float, cfg: SolverConfig):
    return make_grid(2 * n, float(r), cfg.grid_npa(n))


def _regrid(u: FormField, r: float, cfg: SolverConfig) -> FormField:
    """u restricted to B_r and sampled on the solver grid there."""
    g = _grid_for(u.n, r, cfg)
    if u.is_poly:
        return to_grid(u.with_domain(u.domain.with_radius(r)), g, cfg.kernel.derivative)
    if u.rep.grid is g:
        return u
    return restrict(u, r, cfg.grid_npa(u.n)) if r < u.r * (1 - 1e-14) else \
        to_grid(u.with_domain(u.domain.with_radius(r)), g, cfg.kernel.derivative)


def _regrid_family(fam, r: float, cfg: SolverConfig):
    return fam.map(lambda u: _regrid(u, r, cfg))


def _weights_upto(S: WeightSequence, h: int) -> WeightSequence:
    return WeightSequence(S.entries[:h + 1], S.flags[:h + 1])


def calibration_norm(omega: Calibration, h: int, S: WeightSequence, hcfg: HolderConfig) -> float:
    """a = max_{s, t >= 0} ||w^{s,t}||_{r,h}."""
    vals = [holder_norm(omega.get(s, t), h=h, S=S, config=hcfg) for s, t in parameter_indices(omega.m)]
    return float(max(vals, default=0.0))


def phi_size(omega: Calibration, h: int, S: WeightSequence, hcfg: HolderConfig) -> dict:
    return {s: holder_norm(omega.phi(s), h=h, S=S, config=hcfg) for s in range(1, omega.m + 1)}


# -- the step ------------------------------------------------------------------------------

def build_step_parameter(omega: Calibration, r_k: float, k: int, cfg: SolverConfig | None = None,
                         check: bool = True) -> RecalParameter:
    """eta_{k+1} by the decreasing-t recursion; all components end on B_{r_{k+1}}."""
    cfg = cfg or SolverConfig()
    m = omega.m
    n = omega.domain.n
    comps: dict = {}
    for t in range(m, -1, -1):
        r_in = sub_radius(r_k, m, k, m - t)
        r_out = sub_radius(r_k, m, k, m - t + 1)
        sig = 1.0 - r_out / r_in
        for s in range(0, m - t + 1):
            src = _regrid(omega.get(s, t), r_in, cfg)
            e_up = comps.get((s, t + 1))
            if e_up is not None:
                src = src + wedge(_regrid(omega.phi(s + t + 1), r_in, cfg), _regrid(e_up, r_in, cfg))
            e_left = comps.get((s - 1, t + 1))
            if e_left is not None:
                term = wedge(_regrid(e_left, r_in, cfg), _regrid(omega.phi(s), r_in, cfg))
                src = src + term if t % 2 == 0 else src - term
            if src.is_zero():
                g = _grid_for(n, r_out, cfg)
                comps[(s, t)] = FormField.zero(omega.domain.with_radius(r_out), t, src.shape,
                                               GridRep(g, cfg.kernel.derivative))
            else:
                comps[(s, t)] = -leray_koppelman(src, r_in, sig, cfg.kernel, npa=cfg.grid_npa(n))
    r_next = sub_radius(r_k, m, k, m + 1)
    eta = RecalParameter(m, omega.p, {key: _regrid(u, r_next, cfg) for key, u in comps.items()})
    if check:
        grid_epsilon(eta, cfg.eps)
    return eta


def grid_epsilon(eta: RecalParameter, eps: float) -> float:
    """sup over grid nodes of ||eta^{s,0}||; raises EpsilonViolation when >= eps."""
    worst = 0.0
    for s in range(eta.m + 1):
        e = eta.get(s, 0)
        if e.is_zero():
            continue
        if e.is_poly:
            from .recalibration import check_epsilon
            return check_epsilon(eta, eps)
        worst = max(worst, float(opnorm(e.component(())).max()))
    if worst >= eps:
        raise EpsilonViolation(f"sup ||eta^(s,0)|| = {worst:.4g} >= epsilon = {eps}: radius too large")
    return worst


def update_weights(S: WeightSequence, k: int, omega: Calibration, gauges: dict, cfg: SolverConfig,
                   n: int) -> tuple[WeightSequence, dict]:
    """Extend S by S_{k+1} with the caps R_{k+1}, L_{k+1}; assert the two cap inequalities."""
    hcfg = cfg.holder
    order = min(k + 1, cfg.hmax)
    R = math.inf
    ratios_w = []
    for s, t in parameter_indices(omega.m):
        u = omega.get(s, t)
        if u.is_zero():
            continue
        top = derivative_norms(u, order, hcfg)
        base = derivative_norms(u, 0, hcfg)
        for I in u.comps:
            if top[I] > 0 and base[I] > 0:
                R = min(R, base[I] / top[I])
                ratios_w.append((base[I], top[I]))
    L = math.inf
    ratios_g = []
    for g in gauges.values():
        top = derivative_norms(g, order, hcfg).get((), 0.0)
        base = derivative_norms(g, 0, hcfg).get((), 0.0)
        if top > 0 and base > 0:
            L = min(L, 2.0 ** (-k - 1) * base / top)
            ratios_g.append((base, top))
    K = k + 1
    A = list(cutoff_derivative_bounds(max(K, 1)))[:K + 1]
    caps_R = [None] * (K + 1)
    caps_L = [None] * (K + 1)
    caps_R[K] = R if math.isfinite(R) else None
    caps_L[K] = L if math.isfinite(L) else None
    S_new = build_weights(A, caps_R, caps_L, K=K, prefix=S)
    Sk = S_new[K]
    tol = 1 + 1e-12
    data_cap = all(Sk * top <= base * tol for base, top in ratios_w)
    gauge_cap = all(Sk * top <= 2.0 ** (-k - 1) * base * tol for base, top in ratios_g)
    if not (data_cap and gauge_cap):
        raise AssertionError(f"weight caps violated at step {k}")
    return S_new, {"R": R, "L": L, "data_cap": data_cap, "gauge_cap": gauge_cap, "flag": S_new.flags[K]}


# -- initial radius ----------------------------------------------------------------------------

def L_constants(m: int, C: float, c: float) -> list[float]:
    """L_m = C, L_{k-1} = max(C, 2 c C L_k); returns L_0..L_m."""
    L = [0.0] * (m + 1)
    L[m] = C
    for k in range(m, 0, -1):
        L[k - 1] = max(C, 2.0 * c * C * L[k])
    return L


def beta_partial_sum(a0: float, m: int, n: int, H: float, P: float, K: int) -> float:
    """sum_{k<=K} beta_k with b_0 = H sigma_{m,0}^{-(m+1)s(0)} a_0 and P e^{gamma} per squaring."""
    if a0 <= 0:
        return 0.0
    logb = math.log(H) - (m + 1) * s_exponent(n, 0) * math.log(sigma_mk(m, 0)) + math.log(a0)
    total = 0.0
    cur = logb
    for k in range(K + 1):
        total += math.exp(cur) if cur < 700 else math.inf
        cur = 2 * cur + math.log(P) + gamma(m, n, k)
        if not math.isfinite(total):
            break
    return total


def alpha_partial_sum(a0: float, m: int, n: int, H: float, K: int) -> float:
    if a0 <= 0:
        return 0.0
    total = 0.0
    cur = math.log(a0)
    for k in range(K + 1):
        total += math.exp(cur) if cur < 700 else math.inf
        cur = 2 * cur + math.log(H) - nu(m, n, k) * math.log(sigma_mk(m, k))
    return total


def gate_report(omega: Calibration, r: float, cfg: SolverConfig) -> dict:
    m, n = omega.m, omega.domain.n
    hcfg = cfg.holder
    om = omega.map(lambda u: restrict(u, r) if u.is_poly else restrict(u, r))
    a0 = calibration_norm(om, 0, WeightSequence([1.0], ["S0"]), hcfg)
    c = max(phi_size(om, 0, WeightSequence([1.0], ["S0"]), hcfg).values(), default=0.0)
    C = cfg.kernel_C()
    H = cfg.H if cfg.H is not None else 1.0
    L0 = L_constants(m, C, c)[0]
    bound_i = L0 * sigma_mk(m, 0) ** (-(m + 1) * s_exponent(n, 0)) * a0
    # the sketch's exponent convention, logged for comparison
    bound_sketch = L0 * sigma_mk(m, 0) ** (-s_exponent(n, 0) * (m + 1) * (m + 1)) * a0
    beta_sum = beta_partial_sum(a0, m, n, H, 4 * H, cfg.K_max)
    return {"r": r, "a0": a0, "c": c, "L0": L0, "bound_i": bound_i, "bound_sketch": bound_sketch,
            "beta_sum": beta_sum, "threshold": BETA_GATE,
            "pass": bool(bound_i < cfg.eps and beta_sum < BETA_GATE)}


def choose_initial_radius(omega: Calibration, cfg: SolverConfig | None = None, iters: int = 40) -> tuple[float, dict]:
    """Largest r in the bracket passing both gates (bisection on a monotone criterion)."""
    cfg = cfg or SolverConfig()
    lo, hi = cfg.r_bracket
    hi = min(hi, omega.r)
    rep_hi = gate_report(omega, hi, cfg)
    if rep_hi["pass"]:
        return hi, rep_hi
    rep_lo = gate_report(omega, lo, cfg)
    if not rep_lo["pass"]:
        raise RoughProblemError(f"no radius in [{lo}, {hi}] passes the gates (a0 = {rep_lo['a0']:.3g} at r = {lo})")
    best = rep_lo
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(iters):
        mid = math.exp(0.5 * (llo + lhi))
        rep = gate_report(omega, mid, cfg)
        if rep["pass"]:
            llo, best = math.log(mid), rep
        else:
            lhi = math.log(mid)
        if lhi - llo < 1e-3:
            break
    return best["r"], best


# -- the driver ----------------------------------------------------------------------------

def grid_error_estimate(omega: Calibration, r: float, cfg: SolverConfig) -> float:
    """Discretisation floor on the solver grid over B_r.

    Two probes: the homotopy residual of a smooth non-polynomial form, and the
    product-rule defect of the data times a smooth function, both at the
    solver's grid density.
    """
    n = omega.domain.n
    g = _grid_for(n, r, cfg)
    X = g.nodes
    Z = X[:, 0::2] + 1j * X[:, 1::2]
    f = np.exp(0.5 * Z.conj().sum(axis=1) * Z.sum(axis=1) / max(r, 1e-300) ** 2)
    probe = FormField(omega.domain.with_radius(r), 1, (1, 1), GridRep(g, cfg.kernel.derivative),
                      {(0,): f.reshape(-1, 1, 1)})
    est = homotopy_residual(probe, r, 0.5, cfg.kernel, cfg.holder, npa=cfg.grid_npa(n)) / max(
        holder_norm(probe, config=cfg.holder), 1e-300)
    fn = FormField(omega.domain.with_radius(r), 0, (1, 1), GridRep(g, cfg.kernel.derivative),
                   {(): f.reshape(-1, 1, 1)})
    for s, t in parameter_indices(omega.m):
        u = _regrid(omega.get(s, t), r, cfg)
        if u.is_zero():
            continue
        p = u.shape[0]
        fI = wedge(fn, identity_form(fn.domain, 1, fn.rep)).rmul(np.ones((1, p))).lmul(np.ones((p, 1)) / p)
        # fI is the p x p matrix f * ones / p; its product with u has a well defined dbar
        lhs = dbar(wedge(fI, u))
        rhs = wedge(dbar(fI), u) + wedge(fI, dbar(u))
        err = holder_norm(lhs - rhs, config=cfg.holder)
        est = max(est, err / max(holder_norm(u, config=cfg.holder), 1e-300))
    return float(est)


def solve(omega: Calibration, cfg: SolverConfig | None = None, eta_star: RecalParameter | None = None):
    """Run the iteration; returns (g, eta, trace), g = {s: g_s} on the final ball."""
    cfg = cfg or SolverConfig()
    m, n = omega.m, omega.domain.n
    if cfg.r0 is None:
        r0, gate = choose_initial_radius(omega, cfg)
    else:
        r0 = min(cfg.r0, omega.r)
        gate = gate_report(omega, r0, cfg)
    restarts = 0
    while True:
        try:
            return _solve_at(omega, r0, cfg, gate, restarts, eta_star)
        except EpsilonViolation:
            if restarts >= cfg.max_restarts:
                raise
            restarts += 1
            r0 *= 0.5
            gate = gate_report(omega, r0, cfg)


def _solve_at(omega: Calibration, r0: float, cfg: SolverConfig, gate: dict, restarts: int,
              eta_star: RecalParameter | None):
    m, n = omega.m, omega.domain.n
    hcfg = cfg.holder
    S = WeightSequence([1.0], ["S0"])
    om = _regrid_family(omega, r0, cfg)
    trace = IterationTrace(m=m, n=n, r0=r0, restarts=restarts, gate=gate)
    trace.c_omega = max(phi_size(om, 0, S, hcfg).values(), default=0.0)
    trace.floor = max(cfg.abs_floor, cfg.floor_factor * grid_error_estimate(omega, r0, cfg))
    rep = om.get(0, 0).rep
    dom = om.domain
    eta_run = RecalParameter.zero(dom, om.p, rep)
    r_k = r0
    grow = 0
    for k in range(cfg.K_max + 1):
        t0 = time.perf_counter()
        h = min(k, cfg.hmax)
        Sh = _weights_upto(S, h) if len(S) > h else S
        a_k = calibration_norm(om, h, Sh, hcfg)
        b_k = (cfg.H or 1.0) * sigma_mk(m, k) ** (-(m + 1) * s_exponent(n, h)) * a_k
        gauges = {}
        for s in range(m + 1):
            gs = eta_run.g(s)
            gauges[("g", s)] = gs
            gauges[("ginv", s)] = matrix_inverse(gs)
        rec = StepRecord(k=k, r_k=r_k, sigma_k=sigma_k(k), a_k=a_k, b_k=b_k, h=h)
        rec.residuals = {key: holder_norm(om.get(*key), config=hcfg) for key in parameter_indices(m)}
        rec.phi_norms = phi_size(om, h, Sh, hcfg)
        rec.gauge_norms = {f"{name}{s}": holder_norm(gv, h=h, S=Sh, config=hcfg)
                           for (name, s), gv in gauges.items()}
        trace.steps.append(rec)
        if trace.steps and len(trace.steps) >= 2 and a_k > trace.steps[-2].a_k:
            grow += 1
        else:
            grow = 0
        if a_k <= trace.floor or k == cfg.K_max:
            rec.seconds = time.perf_counter() - t0
            trace.converged = a_k <= trace.floor
            break
        if grow >= cfg.divergence_patience:
            raise DivergenceError(f"a_k increased on {grow} consecutive steps (a = {trace.a[-3:]})")
        S, info = update_weights(S, k, om, gauges, cfg, n)
        rec.S_next, rec.R_next, rec.L_next = S[k + 1], info["R"], info["L"]
        rec.S_flag = info["flag"]
        rec.data_cap_ok, rec.gauge_cap_ok = info["data_cap"], info["gauge_cap"]
        eta_step = build_step_parameter(om, r_k, k, cfg)
        r_next = sub_radius(r_k, m, k, m + 1)
        rec.eta_norms = {key: holder_norm(eta_step.get(*key), config=hcfg) for key in parameter_indices(m)}
        om = _regrid_family(recalibrate(eta_step, _regrid_family(om, r_next, cfg)), r_next, cfg)
        eta_run = _regrid_family(compose_parameters(_regrid_family(eta_run, r_next, cfg), eta_step), r_next, cfg)
        r_k = r_next
        rec.seconds = time.perf_counter() - t0
    trace.weights = S
    g = {s: eta_run.g(s) for s in range(m + 1)}
    trace.certification = certify(omega, eta_run, r_k, cfg, eta_star)
    return g, eta_run, trace


def certify(omega: Calibration, eta: RecalParameter, r: float, cfg: SolverConfig,
            eta_star: RecalParameter | None = None) -> dict:
    """Residuals of the system and of the gauge-level target at the returned parameter."""
    om = _regrid_family(omega, r, cfg)
    eta = _regrid_family(eta, r, cfg)
    out = {"r_final": r,
           "system_residual": system_residual(eta, om, cfg.holder),
           "sigma_residual": sigma_residual(eta, om, cfg.holder)}
    out["system_max"] = max(out["system_residual"].values(), default=0.0)
    out["sigma_max"] = max(out["sigma_residual"].values(), default=0.0)
    if eta_star is not None:
        es = _regrid_family(eta_star, r, cfg)
        hol = {}
        for s in range(omega.m + 1):
            # (g*)^{-1} g is holomorphic when both gauges solve the same system
            q = wedge(matrix_inverse(es.g(s)), eta.g(s))
            hol[s] = holder_norm(dbar(q), config=cfg.holder)
        out["equivalence_residual"] = hol
        out["equivalence_max"] = max(hol.values(), default=0.0)
    return out


# -- diagnostics ---------------------------------------------------------------------------

@dataclass
class DecayReport:
    ratios: list
    normalized: list
    H_empirical: float
    exponent: float
    superlinear_run: int
    bounded: bool
    note: str = ""


def quadratic_decay_report(trace_or_a, m: int = 0, n: int = 1, floor: float = 0.0,
                           min_exponent: float = 1.5) -> DecayReport:
    """Per-step ratios a_{k+1}/a_k^2, the sigma-normalised ratios and a fitted order.

    Steps at or below the floor are ignored.  ``bounded`` requires a fitted
    order of at least ``min_exponent``: a linearly convergent sequence has
    order 1 and unbounded quadratic ratios.
    """
    if isinstance(trace_or_a, IterationTrace):
        a = trace_or_a.a
        m, n, floor = trace_or_a.m, trace_or_a.n, trace_or_a.floor
    else:
        a = list(trace_or_a)
    pairs = [(k, k + 1) for k in range(len(a) - 1) if a[k] > floor and a[k + 1] > floor]
    if len(pairs) < 2:
        return DecayReport([], [], math.nan, math.nan, 0, False, "too few steps above the floor")
    ratios = [a[j] / a[i] ** 2 for i, j in pairs]
    normalized = [a[j] / (sigma_mk(m, i) ** (-nu(m, n, min(i, 4))) * a[i] ** 2) for i, j in pairs]
    x = np.log([a[i] for i, _ in pairs])
    y = np.log([a[j] for _, j in pairs])
    expo = float(np.polyfit(x, y, 1)[0]) if len(pairs) >= 2 else math.nan
    lin = [a[k + 1] / a[k] for k in range(len(a) - 1) if a[k] > floor]
    run = best = 0
    for i in range(1, len(lin)):
        run = run + 1 if lin[i] < lin[i - 1] else 0
        best = max(best, run)
    bounded = bool(np.isfinite(ratios).all() and expo >= min_exponent)
    return DecayReport(ratios, normalized, float(max(normalized)), expo, best + 1 if lin else 0, bounded)
