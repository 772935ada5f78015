"""The Leray-Koppelman homotopy operator on balls, with singular quadrature.

Volume part (Bochner-Martinelli).  For a (0,q+1)-form u on B_r,

    (T_vol u)_K(z) = -c_n int_{B_r} sum_j u_{jK}(w) (conj(w_j) - conj(z_j)) / |w - z|^{2n} dV(w),

with c_n = (n-1)!/pi^n and u_{jK} the coefficient of dzbar_j ^ dzbar_K.  In
polar coordinates w = z + rho*e centred at the output point the Jacobian
rho^{2n-1} cancels the kernel exactly:

    (T_vol u)_K(z) = -c_n int_{S^{2n-1}} sum_j conj(e_j) int_0^{R(z,e)} u_{jK}(z + rho e) drho dS(e),

where R(z,e) is the distance from z to the sphere along e.  The radial
integral uses Gauss-Legendre nodes, the sphere a product rule (trapezoid in
the phases, Gauss-Legendre in the Hopf angles).

Boundary part (Leray).  Only present for n = 2 and (0,1)-forms:

    T_bd u(z) = beta (2/r) int_{|w|=r} (u_2 w_1 - u_1 w_2)
                 (conj(w_1 - z_1) conj(w_2) - conj(w_2 - z_2) conj(w_1))
                 / (|w - z|^2 (r^2 - <conj(w), z>)) dS(w).

The normalisation beta is pinned by the homotopy identity (see
``BOUNDARY_BETA``).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import poly as P
from .forms import (FormField, GridRep, PolyRep, complex_to_real, dbar, merge_sign,
                    multi_indices, restrict, to_grid)
from .grid import make_grid
from .holder import HolderConfig, WeightSequence, holder_norm

# 1/(4 pi^2), fixed by the homotopy identity on dbar-exact and generic forms
BOUNDARY_BETA = 1.0 / (4.0 * math.pi ** 2)


@dataclass(frozen=True)
class KernelConfig:
    n_rad: int = 16
    n_ang: int = 64  # phase nodes on S^1 (n = 1)
    n_phi_multi: int = 12  # phases per factor for n >= 2
    n_chi_multi: int = 6  # Gauss nodes per Hopf angle for n >= 2
    n_bd_phi: int = 24  # boundary phases; raised to 8/sigma near the sphere
    n_bd_chi: int = 12
    ang_boost: float = 24.0  # angular nodes >= ang_boost/sqrt(2 sigma) near the sphere
    points_per_axis: int | None = None  # output grid; default 33 (n=1), 17 (n=2)
    derivative: str = "fit"
    singularity: str = "polar"
    C: float = 0.05  # fitted interior constant (see fit_interior_constant)
    s_offset: int = 2  # s(h) = 2n + h + s_offset
    chunk_points: int = 60000

    def __post_init__(self):
        if min(self.n_rad, self.n_ang, self.n_phi_multi, self.n_chi_multi, self.n_bd_phi, self.n_bd_chi) < 1:
            raise ValueError("quadrature node counts must be positive")
        if self.singularity != "polar":
            raise ValueError("only the polar singularity treatment is available")

    def npa(self, n: int) -> int:
        if self.points_per_axis is not None:
            return self.points_per_axis
        return 33 if n == 1 else 17

    def s(self, n: int, h: int) -> int:
        return 2 * n + h + self.s_offset


def s_exponent(n: int, h: int) -> int:
    """Loss exponent s(h) = 2n + h + 2 of the interior estimate."""
    return 2 * n + h + 2


def sphere_rule(n: int, n_phi: int, n_chi: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes e (complex, shape (N, n)) and weights on the unit sphere of C^n.

    Recursive Hopf coordinates e = (cos(chi) exp(i phi), sin(chi) e'),
    dS = cos(chi) sin(chi)^{2n-3} dchi dphi dS'.
    """
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    wphi = np.full(n_phi, 2.0 * np.pi / n_phi)
    if n == 1:
        return np.exp(1j * phi)[:, None], wphi
    E1, W1 = sphere_rule(n - 1, n_phi, n_chi)
    x, w = leggauss(n_chi)
    chi = 0.25 * np.pi * (x + 1.0)
    wchi = 0.25 * np.pi * w * np.cos(chi) * np.sin(chi) ** (2 * n - 3)
    c = np.cos(chi)[:, None, None]
    s = np.sin(chi)[:, None, None]
    head = c * np.exp(1j * phi)[None, :, None]  # (chi, phi, 1)
    E = np.concatenate([np.broadcast_to(head[:, :, None, :], (n_chi, n_phi, E1.shape[0], 1)),
                        (s[:, :, None, :] * E1[None, None, :, :]) * np.ones((1, n_phi, 1, 1))],
                       axis=-1)
    W = wchi[:, None, None] * wphi[None, :, None] * W1[None, None, :]
    return E.reshape(-1, n), W.reshape(-1)


def _evaluator(u: FormField):
    """X -> {I: values}; GridRep fits are computed once and evaluated together."""
    if u.is_poly:
        return u.values_at
    g = u.rep.grid
    keys = list(u.comps)
    coefs = np.concatenate([g.fit(u.comps[I]).reshape(-1, u.shape[0] * u.shape[1]) for I in keys], axis=1) \
        if keys else None
    m = u.shape[0] * u.shape[1]

    def ev(X):
        X = np.asarray(X, dtype=float).reshape(-1, g.D)
        if coefs is None:
            return {}
        V = g.eval_fit(coefs, X)
        return {I: V[:, i * m:(i + 1) * m].reshape((X.shape[0],) + u.shape) for i, I in enumerate(keys)}
    return ev


def _ray_degree(u: FormField) -> int:
    """Polynomial degree of the integrand along rays (inputs are polynomials or fits)."""
    if u.is_poly:
        nz = [u.basis.degree[P.nonzero_mask(A)] for A in u.comps.values()]
        nz = [d for d in nz if d.size]
        return int(max(d.max() for d in nz)) if nz else 0
    return u.rep.grid.fit_degree


def _output_points(Zr: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(Zr, dtype=float))


def _volume_rule(n: int, sigma: float, deg: int, cfg: KernelConfig):
    """Sphere nodes/weights and radial Gauss nodes for output points at relative depth sigma."""
    boost = int(math.ceil(cfg.ang_boost / math.sqrt(2.0 * sigma)))
    if n == 1:
        E, W = sphere_rule(1, max(cfg.n_ang, boost), 1)
    else:
        # the Hopf-angle rule dominates the error: 6 nodes give ~1e-6, 8 give ~1e-9
        E, W = sphere_rule(n, max(cfg.n_phi_multi, boost // 2), max(cfg.n_chi_multi, boost // 4))
    # Gauss-Legendre with m nodes integrates degree 2m-1 exactly
    n_rad = min(cfg.n_rad, deg // 2 + 2)
    x, w = leggauss(n_rad)
    return E, W, 0.5 * (x + 1.0), 0.5 * w


def _ray_chunks(Zr, r, E, t, cfg):
    """Yield (slice, R, points) with points (B, Na, Nr, D) along the rays from each output point."""
    Er = complex_to_real(E)
    Na, Nr = E.shape[0], t.shape[0]
    B = max(1, cfg.chunk_points // (Na * Nr))
    for s0 in range(0, Zr.shape[0], B):
        Zc = Zr[s0:s0 + B]
        b = Zc @ Er.T
        rad2 = np.maximum(b ** 2 + r ** 2 - (Zc ** 2).sum(axis=1)[:, None], 0.0)
        R = np.maximum(-b + np.sqrt(rad2), 0.0)
        pts = Zc[:, None, None, :] + (R[:, :, None] * t[None, None, :])[..., None] * Er[None, :, None, :]
        yield slice(s0, s0 + Zc.shape[0]), R, pts


_TRANSFER_CACHE: dict = {}


def _volume_transfer(grid, Zr, r, sigma, n, cfg):
    """Matrices M_j (n, P, nb) with (T_vol u)_K = sum_j sign M_j @ fitcoef(u_{jK})."""
    key = (grid.key, hashlib.sha1(np.ascontiguousarray(Zr).tobytes()).hexdigest(), float(r),
           float(sigma), cfg.n_rad, cfg.n_ang, cfg.n_phi_multi, cfg.n_chi_multi, cfg.ang_boost, cfg.chunk_points)
    if key in _TRANSFER_CACHE:
        return _TRANSFER_CACHE[key]
    E, W, t, wt = _volume_rule(n, sigma, grid.fit_degree, cfg)
    cn = math.factorial(n - 1) / math.pi ** n
    nb = grid.basis_index.shape[0]
    M = np.zeros((n, Zr.shape[0], nb), dtype=complex)
    Na, Nr = E.shape[0], t.shape[0]
    for sl, R, pts in _ray_chunks(Zr, r, E, t, cfg):
        V = grid.basis(pts.reshape(-1, Zr.shape[1])).reshape(R.shape[0], Na, Nr, nb)
        radial = np.einsum("banc,n->bac", V, wt) * R[:, :, None]
        for j in range(n):
            M[j, sl] = -cn * np.einsum("bac,a->bc", radial, W * np.conj(E[:, j]))
    if len(_TRANSFER_CACHE) >= 6:
        _TRANSFER_CACHE.pop(next(iter(_TRANSFER_CACHE)))
    _TRANSFER_CACHE[key] = M
    return M


def volume_values(u: FormField, Zr: np.ndarray, cfg: KernelConfig | None = None,
                  sigma: float | None = None) -> dict:
    """(T_vol u)_K at real output points Zr (P, 2n) inside B_r."""
    cfg = cfg or KernelConfig()
    n = u.n
    q = u.q - 1
    Zr = _output_points(Zr)
    if q < 0:
        raise ValueError("the transform needs a form of degree >= 1")
    if u.q > n or not u.comps:
        return {}
    r = u.r
    if sigma is None:
        rz = np.sqrt((Zr ** 2).sum(axis=1)).max() if Zr.size else 0.0
        sigma = max(1.0 - rz / r, 1e-6)
    outK = multi_indices(n, q)
    out = {K: np.zeros((Zr.shape[0],) + u.shape, dtype=complex) for K in outK}
    if not u.is_poly:
        g = u.rep.grid
        M = _volume_transfer(g, Zr, r, sigma, n, cfg)
        coefs = {J: g.fit(A).reshape(-1, u.shape[0] * u.shape[1])
                 for J, A in u.comps.items()}
        for K in outK:
            for j in range(n):
                sign, J = merge_sign((j,), K)
                if sign == 0 or J not in coefs:
                    continue
                out[K] += sign * (M[j] @ coefs[J]).reshape((Zr.shape[0],) + u.shape)
        return out
    E, W, t, wt = _volume_rule(n, sigma, _ray_degree(u), cfg)
    cn = math.factorial(n - 1) / math.pi ** n
    Na, Nr = E.shape[0], t.shape[0]
    for sl, R, pts in _ray_chunks(Zr, r, E, t, cfg):
        vals = u.values_at(pts.reshape(-1, Zr.shape[1]))
        radial = {}
        for J, V in vals.items():
            V = V.reshape((R.shape[0], Na, Nr) + u.shape)
            radial[J] = np.einsum("banij,n->baij", V, wt) * R[:, :, None, None]
        for K in outK:
            acc = np.zeros((R.shape[0],) + u.shape, dtype=complex)
            for j in range(n):
                sign, J = merge_sign((j,), K)
                if sign == 0 or J not in radial:
                    continue
                acc += np.einsum("baij,a->bij", radial[J], sign * W * np.conj(E[:, j]))
            out[K][sl] = -cn * acc
    return out


def boundary_values(u: FormField, Zr: np.ndarray, cfg: KernelConfig | None = None,
                    beta: float = BOUNDARY_BETA, sigma: float | None = None) -> dict:
    """(T_bd u) at real output points; zero unless n = 2 and u is a (0,1)-form."""
    cfg = cfg or KernelConfig()
    n = u.n
    Zr = _output_points(Zr)
    if n == 1 or u.q != 1 or not u.comps:
        return {}
    if n > 2:
        raise NotImplementedError("the boundary kernel is implemented for n <= 2")
    r = u.r
    if sigma is None:
        rz = np.sqrt((Zr ** 2).sum(axis=1)).max() if Zr.size else 0.0
        sigma = max(1.0 - rz / r, 1e-6)
    n_phi = max(cfg.n_bd_phi, int(math.ceil(8.0 / sigma)))
    n_chi = max(cfg.n_bd_chi, n_phi // 2)
    E, W = sphere_rule(2, n_phi, n_chi)
    zeta = r * E
    vals = _evaluator(u)(complex_to_real(zeta))
    u1 = vals.get((0,), np.zeros((zeta.shape[0],) + u.shape, dtype=complex))
    u2 = vals.get((1,), np.zeros((zeta.shape[0],) + u.shape, dtype=complex))
    a = u2 * zeta[:, 0, None, None] - u1 * zeta[:, 1, None, None]
    Z = Zr[:, 0::2] + 1j * Zr[:, 1::2]
    wts = W * r ** 3
    out = np.zeros((Z.shape[0],) + u.shape, dtype=complex)
    B = max(1, cfg.chunk_points // zeta.shape[0])
    for s0 in range(0, Z.shape[0], B):
        Zc = Z[s0:s0 + B]
        w = zeta[None, :, :] - Zc[:, None, :]
        num = np.conj(w[..., 0]) * np.conj(zeta[None, :, 1]) - np.conj(w[..., 1]) * np.conj(zeta[None, :, 0])
        den = (np.abs(w) ** 2).sum(axis=-1) * (r ** 2 - (np.conj(zeta)[None] * Zc[:, None, :]).sum(axis=-1))
        Kk = num / den * wts[None, :]
        out[s0:s0 + B] = np.einsum("ba,aij->bij", Kk, a)
    return {(): beta * (2.0 / r) * out}


def _output_grid(u: FormField, r_out: float, cfg: KernelConfig, npa: int | None):
    D = u.domain.real_dim
    return make_grid(D, float(r_out), npa or cfg.npa(u.n))


def _check_radius(u: FormField, r_out: float):
    if not (0.0 < r_out < u.r):
        raise ValueError(f"output radius {r_out} must lie strictly inside the input radius {u.r}")


def bm_volume_transform(u: FormField, r_out: float, cfg: KernelConfig | None = None,
                        npa: int | None = None) -> FormField:
    """Volume (Bochner-Martinelli) part of T, sampled on a grid over B_{r_out}."""
    cfg = cfg or KernelConfig()
    _check_radius(u, r_out)
    g = _output_grid(u, r_out, cfg, npa)
    dom = u.domain.with_radius(r_out)
    vals = volume_values(u, g.nodes, cfg, sigma=1.0 - g.extent / u.r)
    return FormField(dom, u.q - 1, u.shape, GridRep(g, cfg.derivative), vals)


def boundary_transform(u: FormField, r_out: float, cfg: KernelConfig | None = None,
                       npa: int | None = None) -> FormField:
    """Boundary (Leray) part of T, sampled on a grid over B_{r_out}."""
    cfg = cfg or KernelConfig()
    _check_radius(u, r_out)
    g = _output_grid(u, r_out, cfg, npa)
    dom = u.domain.with_radius(r_out)
    vals = boundary_values(u, g.nodes, cfg, sigma=1.0 - g.extent / u.r)
    return FormField(dom, u.q - 1, u.shape, GridRep(g, cfg.derivative), vals)


def lk_values(u: FormField, Zr: np.ndarray, cfg: KernelConfig | None = None,
              sigma: float | None = None) -> dict:
    """Values of T u at arbitrary real points of the open ball."""
    cfg = cfg or KernelConfig()
    out = volume_values(u, Zr, cfg, sigma)
    for K, V in boundary_values(u, Zr, cfg, sigma=sigma).items():
        out[K] = out[K] + V if K in out else V
    return out


def leray_koppelman(u: FormField, r: float | None = None, sigma: float = 0.5,
                    cfg: KernelConfig | None = None, npa: int | None = None) -> FormField:
    """T_{r,q} u sampled on the grid of B_{r(1-sigma)}; degree drops by one."""
    cfg = cfg or KernelConfig()
    if not (0.0 < sigma < 1.0):
        raise ValueError("sigma must lie in (0, 1)")
    if r is not None and r < u.r * (1 - 1e-12):
        u = restrict(u, r)
    r = u.r
    r_out = r * (1.0 - sigma)
    g = _output_grid(u, r_out, cfg, npa)
    dom = u.domain.with_radius(r_out)
    q = max(u.q - 1, 0)
    if u.q == 0:
        raise ValueError("T acts on forms of degree >= 1")
    if u.q > u.n or not u.comps:
        return FormField(dom, q, u.shape, GridRep(g, cfg.derivative), {})
    vals = lk_values(u, g.nodes, cfg, sigma=1.0 - g.extent / r)
    return FormField(dom, q, u.shape, GridRep(g, cfg.derivative), vals)


def homotopy_residual(u: FormField, r: float | None = None, sigma: float = 0.5,
                      cfg: KernelConfig | None = None, hcfg: HolderConfig | None = None,
                      npa: int | None = None, return_field: bool = False):
    """holder_norm (h=0) of u - dbar T u - T dbar u on B_{r(1-sigma)}."""
    cfg = cfg or KernelConfig()
    if r is not None and r < u.r * (1 - 1e-12):
        u = restrict(u, r)
    r = u.r
    Tu = leray_koppelman(u, r, sigma, cfg, npa)
    g = Tu.rep.grid
    du = dbar(u)
    res = to_grid(restrict(u, r * (1 - sigma)), g, cfg.derivative) - dbar(Tu)
    if du.q <= u.n and du.comps and not du.is_zero():
        res = res - leray_koppelman(du, r, sigma, cfg, npa)
    val = holder_norm(res, h=0, config=hcfg)
    return (val, res) if return_field else val


@dataclass
class InteriorFit:
    C: float
    C_lsq: float
    max_ratio: float
    per_h: dict
    samples: list = field(default_factory=list)

    @property
    def spread(self) -> float:
        vals = [v for v in self.per_h.values() if v > 0]
        return max(vals) / min(vals) if vals else math.inf


def fit_interior_constant(samples, hs=(0, 1, 2), sigmas=(0.1, 0.25, 0.5),
                          S: WeightSequence | None = None, cfg: KernelConfig | None = None,
                          hcfg: HolderConfig | None = None, npa: int | None = None) -> InteriorFit:
    """Fit C in ||T u||_{r(1-s),h+1} <= C s^{-s(h)} ||u||_{r,h} over samples, h and sigma."""
    cfg = cfg or KernelConfig()
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")
    hmax = max(hs) + 1
    S = S or WeightSequence.trivial(hmax)
    rows = []
    for idx, u in enumerate(samples):
        for h in hs:
            un = holder_norm(u, h=h, S=S, config=hcfg)
            if un == 0:
                continue
            for sg in sigmas:
                Tu = leray_koppelman(u, u.r, sg, cfg, npa)
                tn = holder_norm(Tu, h=h + 1, S=S, config=hcfg)
                x = sg ** (-cfg.s(u.n, h)) * un
                rows.append({"sample": idx, "h": h, "sigma": sg, "lhs": tn, "rhs_unit": x,
                             "ratio": tn / x})
    if not rows:
        raise ValueError("all samples are zero")
    xs = np.array([r_["rhs_unit"] for r_ in rows])
    ys = np.array([r_["lhs"] for r_ in rows])
    C_lsq = float((xs * ys).sum() / (xs * xs).sum())
    ratios = np.array([r_["ratio"] for r_ in rows])
    per_h = {h: float(max(r_["ratio"] for r_ in rows if r_["h"] == h)) for h in hs
             if any(r_["h"] == h for r_ in rows)}
    C = float(max(C_lsq, ratios.max()))
    assert all(r_["lhs"] <= C * r_["rhs_unit"] * (1 + 1e-12) for r_ in rows)
    return InteriorFit(C=C, C_lsq=C_lsq, max_ratio=float(ratios.max()), per_h=per_h, samples=rows)
