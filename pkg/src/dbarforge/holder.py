"""Scale-invariant weighted Hölder norms and weight sequences.

    ||f||_{r,mu} = sup ||f(z)|| + sup r^mu ||f(z) - f(w)|| / |z - w|^mu
    ||u||_{r,h,mu,q} = sum_{|a| <= h} S_|a| r^(|a|+q) sum_I ||d^a u_I||_{r,mu}

Matrix norms are operator norms.  Both suprema are estimated on a fixed,
deterministic sample: scrambled Sobol points in the ball (all pairs) plus a
tensor grid with its nearest-neighbour pairs.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import qmc

from .forms import FormField, partial, restrict
from .grid import Grid, make_grid


@dataclass(frozen=True)
class HolderConfig:
    mu: float = 0.5
    n_samples: int | None = None  # qmc points; default 2000 (n=1) / 4000 (n=2)
    ref_points_per_axis: int | None = None  # grid used for PolyRep inputs
    seed: int = 20240601
    hmax: int = 4

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0):
            raise ValueError("Hölder exponent must lie in (0, 1)")
        if self.n_samples is not None and self.n_samples < 2:
            raise ValueError("the sample set must contain at least two points")

    def samples_for(self, D: int) -> int:
        if self.n_samples is not None:
            return self.n_samples
        return 2000 if D <= 2 else 4000

    def ref_npa(self, D: int) -> int:
        if self.ref_points_per_axis is not None:
            return self.ref_points_per_axis
        return 33 if D <= 2 else 17


@functools.lru_cache(maxsize=64)
def ball_samples(D: int, r: float, count: int, seed: int) -> np.ndarray:
    """Deterministic quasi-random points in the closed ball of radius r."""
    sob = qmc.Sobol(d=D, scramble=True, seed=seed)
    pts = np.empty((0, D))
    while pts.shape[0] < count:
        m = int(math.ceil(math.log2(max(2 * count, 2))))
        cand = 2.0 * sob.random_base2(m) - 1.0
        cand = cand[(cand ** 2).sum(axis=1) <= 1.0]
        pts = np.concatenate([pts, cand])
    return r * pts[:count]


def opnorm(A: np.ndarray) -> np.ndarray:
    """Operator 2-norm over the trailing two axes."""
    rows, cols = A.shape[-2:]
    if rows == 1 or cols == 1:
        return np.sqrt((np.abs(A) ** 2).sum(axis=(-2, -1)))
    if rows == 2 and cols == 2:
        fro2 = (np.abs(A) ** 2).sum(axis=(-2, -1))
        det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        disc = np.sqrt(np.maximum(fro2 ** 2 - 4.0 * np.abs(det) ** 2, 0.0))
        return np.sqrt(np.maximum(0.5 * (fro2 + disc), 0.0))
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def _max_pair_quotient(F: np.ndarray, X: np.ndarray, mu: float, block: int = 128) -> float:
    """max over i<j of ||F_i - F_j|| / |X_i - X_j|^mu (all pairs)."""
    best = 0.0
    S = F.shape[0]
    for s in range(0, S, block):
        Fi = F[s:s + block]
        Xi = X[s:s + block]
        diff = Fi[:, None] - F[None, :]
        dist = np.sqrt(((Xi[:, None] - X[None, :]) ** 2).sum(axis=-1))
        nrm = opnorm(diff)
        ok = dist > 0
        if ok.any():
            best = max(best, float((nrm[ok] / dist[ok] ** mu).max()))
    return best


@dataclass
class SampleValues:
    """Values of one matrix function on the qmc sample and on a grid."""

    qmc_vals: np.ndarray
    qmc_pts: np.ndarray
    grid_vals: np.ndarray
    grid_pts: np.ndarray
    pairs: tuple[np.ndarray, np.ndarray]


def seminorm_from_samples(sv: SampleValues, r: float, mu: float) -> float:
    sup = 0.0
    for V in (sv.qmc_vals, sv.grid_vals):
        if V.shape[0]:
            sup = max(sup, float(opnorm(V).max()))
    q = 0.0
    if sv.qmc_vals.shape[0] > 1:
        q = _max_pair_quotient(sv.qmc_vals, sv.qmc_pts, mu)
    I, J = sv.pairs
    if len(I):
        diff = opnorm(sv.grid_vals[I] - sv.grid_vals[J])
        dist = np.sqrt(((sv.grid_pts[I] - sv.grid_pts[J]) ** 2).sum(axis=-1))
        q = max(q, float((diff / dist ** mu).max()))
    return sup + r ** mu * q


def holder_seminorm(f, r: float, mu: float = 0.5, config: HolderConfig | None = None,
                    D: int | None = None) -> float:
    """||f||_{r,mu} for a 0-form FormField or a callable ``X (P, D) -> (P, rows, cols)``."""
    config = config or HolderConfig(mu=mu)
    if isinstance(f, FormField):
        if f.q != 0:
            raise ValueError("holder_seminorm expects a matrix function (0-form)")
        u = restrict(f, r) if r < f.r else f
        return _component_seminorms(u, (0,) * u.domain.real_dim, config, mu)[()] if u.comps else 0.0
    if D is None:
        raise ValueError("dimension D is required for callables")
    count = config.samples_for(D)
    if count < 2:
        raise ValueError("empty sample set")
    Xq = ball_samples(D, float(r), count, config.seed)
    g = make_grid(D, float(r), config.ref_npa(D))
    Vq = np.asarray(f(Xq))
    Vg = np.asarray(f(g.nodes[g.interior]))
    sv = SampleValues(Vq, Xq, Vg, g.nodes[g.interior], _interior_pairs(g))
    return seminorm_from_samples(sv, float(r), mu)


def multi_indices_of_order(D: int, k: int) -> list[tuple]:
    out = []
    for combo in itertools.combinations_with_replacement(range(D), k):
        a = [0] * D
        for v in combo:
            a[v] += 1
        out.append(tuple(a))
    return out


def _grid_basis_at(g: Grid, X: np.ndarray, tag) -> np.ndarray:
    key = ("basis_at", tag)
    if key not in g._cache:
        g._cache[key] = g.basis(X)
    return g._cache[key]


def _component_seminorms(u: FormField, alpha, config: HolderConfig, mu: float) -> dict:
    """||d^alpha u_I||_{r,mu} for every stored component I."""
    D = u.domain.real_dim
    r = u.r
    count = config.samples_for(D)
    Xq = ball_samples(D, float(r), count, config.seed)
    out = {}
    if u.is_poly:
        g = make_grid(D, float(r), config.ref_npa(D))
        du = partial(u, alpha) if sum(alpha) else u
        Xg = g.nodes[g.interior]
        vq = du.values_at(Xq)
        vg = du.values_at(Xg)
        I, J = _interior_pairs(g)
        for K in u.comps:
            if K not in vq:
                out[K] = 0.0
                continue
            out[K] = seminorm_from_samples(SampleValues(vq[K], Xq, vg[K], Xg, (I, J)), r, mu)
        return out
    g = u.rep.grid
    Xg = g.nodes[g.interior]
    I, J = _interior_pairs(g)
    from .forms import _grid_partial_values  # local: shares the derivative policy
    for K, A in u.comps.items():
        if u.rep.derivative == "fit":
            coef = g.fit(A)
            for axis, k in enumerate(alpha):
                for _ in range(k):
                    coef = g.coef_deriv(coef, axis)
            flat = coef.reshape(coef.shape[0], -1)
            Bq = _grid_basis_at(g, Xq, ("qmc", count, config.seed))
            Bg = _grid_basis_at(g, Xg, "interior")
            vq = (Bq @ flat).reshape((Xq.shape[0],) + u.shape)
            vg = (Bg @ flat).reshape((Xg.shape[0],) + u.shape)
        else:
            vals = _grid_partial_values(u, A, alpha)
            vg = vals[g.interior]
            vq = g.eval_fit(g.fit(vals), Xq)
        out[K] = seminorm_from_samples(SampleValues(vq, Xq, vg, Xg, (I, J)), r, mu)
    return out


def _interior_pairs(g: Grid) -> tuple[np.ndarray, np.ndarray]:
    key = "interior_pairs"
    if key not in g._cache:
        I, J = g.neighbor_pairs(True)
        remap = -np.ones(g.npts, dtype=np.int64)
        remap[np.nonzero(g.interior)[0]] = np.arange(int(g.interior.sum()))
        g._cache[key] = (remap[I], remap[J])
    return g._cache[key]


def derivative_norms(u: FormField, k: int, config: HolderConfig | None = None) -> dict:
    """sum_{|a|=k} ||d^a u_I||_{r,mu} per component I."""
    config = config or HolderConfig()
    tot: dict = {I: 0.0 for I in u.comps}
    for alpha in multi_indices_of_order(u.domain.real_dim, k):
        for I, v in _component_seminorms(u, alpha, config, config.mu).items():
            tot[I] += v
    return tot


def holder_norm(u: FormField, r: float | None = None, h: int = 0, mu: float | None = None,
                S: "WeightSequence | None" = None, config: HolderConfig | None = None) -> float:
    """The weighted norm ||u||_{r,h,mu,q}."""
    config = config or HolderConfig()
    if mu is not None and mu != config.mu:
        config = HolderConfig(mu=mu, n_samples=config.n_samples,
                              ref_points_per_axis=config.ref_points_per_axis,
                              seed=config.seed, hmax=config.hmax)
    if r is None:
        r = u.r
    if S is None:
        S = WeightSequence.trivial(h)
    if h > len(S) - 1:
        raise ValueError(f"derivative order {h} exceeds the weight table (K={len(S) - 1})")
    if r < u.r:
        u = restrict(u, r)
    if not u.comps or u.is_zero():
        return 0.0
    total = 0.0
    for k in range(h + 1):
        dn = derivative_norms(u, k, config)
        total += S[k] * r ** (k + u.q) * sum(dn.values())
    return total


# -- weight sequences ---------------------------------------------------------------

def D_coefficient(k: int) -> float:
    """[max_{|a+b|=k} binom(a+b, a)]^{-1}; the max is binom(k, k//2)."""
    return 1.0 / math.comb(k, k // 2) if k >= 1 else 1.0


@dataclass
class WeightSequence:
    entries: list
    flags: list = field(default_factory=list)

    def __getitem__(self, k: int) -> float:
        return self.entries[k]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def trivial(cls, K: int) -> "WeightSequence":
        """Weights built from vanishing A_k and no caps (S_0 = S_1 = 1, then the D-clause)."""
        return build_weights([0.0] * (K + 1), K=K)

    def check_submultiplicative(self) -> bool:
        S = self.entries
        for k in range(2, len(S)):
            Dk = D_coefficient(k)
            for j in range(1, k):
                if not S[k] <= Dk * S[j] * S[k - j]:
                    return False
        return all(s > 0 for s in S) and S[0] == 1.0

    def to_json(self) -> list:
        return [{"k": k, "S": s, "clause": f} for k, (s, f) in enumerate(zip(self.entries, self.flags))]


def build_weights(A, caps_R=None, caps_L=None, K: int | None = None, C_nk=None,
                  prefix: "WeightSequence | None" = None) -> WeightSequence:
    """S_0 = 1; S_1 = min(B_1, R_1, L_1); S_k = min(2^-k B_k, R_k, L_k, D_k min_j S_j S_{k-j}).

    ``B_k = 1/max(A_k, C_nk[k])`` when that is positive and 1 otherwise.  Caps
    default to +inf.  ``prefix`` keeps already-built entries unchanged.
    """
    A = list(A)
    K = len(A) - 1 if K is None else K
    if len(A) < K + 1:
        raise ValueError("need A_k for every k <= K")
    if any(a < 0 for a in A) or (C_nk is not None and any(c < 0 for c in C_nk)):
        raise ValueError("base magnitudes must be nonnegative")

    def cap(seq, k):
        if seq is None or k >= len(seq) or seq[k] is None:
            return math.inf
        if seq[k] <= 0:
            raise ValueError("caps must be positive")
        return float(seq[k])

    S = [1.0]
    flags = ["S0"]
    start = 1
    if prefix is not None:
        S = list(prefix.entries[:K + 1])
        flags = list(prefix.flags[:K + 1])
        start = len(S)
    for k in range(start, K + 1):
        base = max(A[k], C_nk[k] if C_nk is not None and k < len(C_nk) else 0.0)
        Bk = 1.0 / base if base > 0 else 1.0
        cands = {}
        if k == 1:
            cands["base"] = Bk
        else:
            cands["cap"] = 2.0 ** (-k) * Bk
            Dk = D_coefficient(k)
            cands["submult"] = min(Dk * S[j] * S[k - j] for j in range(1, k))
        cands["R"] = cap(caps_R, k)
        cands["L"] = cap(caps_L, k)
        name = min(cands, key=lambda c: cands[c])
        val = cands[name]
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"weight S_{k} is not positive and finite")
        S.append(val)
        flags.append(name)
    W = WeightSequence(S, flags)
    if not W.check_submultiplicative():
        raise AssertionError("weight sequence violates S_k <= D_k S_j S_{k-j}")
    return W


# -- the cut-off profile ----------------------------------------------------------------

def _bump_jets(y: np.ndarray, K: int) -> np.ndarray:
    """Taylor coefficients (orders 0..K) of b(y) = exp(1 - 1/(1 - y^2)) at points y."""
    s = np.zeros((K + 1, y.size))
    s[0] = 1.0 - y ** 2
    if K >= 1:
        s[1] = -2.0 * y
    if K >= 2:
        s[2] = -1.0
    R = np.zeros_like(s)
    R[0] = 1.0 / s[0]
    for k in range(1, K + 1):
        acc = np.zeros(y.size)
        for j in range(1, min(k, 2) + 1):
            acc += s[j] * R[k - j]
        R[k] = -acc / s[0]
    a = -R
    a[0] = 1.0 - R[0]
    E = np.zeros_like(s)
    E[0] = np.exp(a[0])
    for k in range(1, K + 1):
        acc = np.zeros(y.size)
        for j in range(1, k + 1):
            acc += j * a[j] * E[k - j]
        E[k] = acc / k
    return E


@functools.lru_cache(maxsize=4)
def cutoff_derivative_bounds(K: int = 40, mu: float = 0.5, npts: int = 4001) -> tuple:
    """Estimates of ||rho^(k)||_{1,mu}, k = 0..K, for the smooth step

        rho(x) = 1 - F(x)/F(1),  F(x) = int_0^x b(2t - 1) dt,

    equal to 1 for x <= 0 and 0 for x >= 1.  The Hölder part uses the
    interpolation bound (2 sup|f|)^(1-mu) (sup|f'|)^mu.
    """
    y = np.linspace(-1.0, 1.0, npts)[1:-1]
    E = _bump_jets(y, K + 1)
    fact = np.array([math.factorial(k) for k in range(K + 2)], dtype=float)
    bder = np.abs(E * fact[:, None]).max(axis=1)  # sup |b^(j)|
    # F(1) = (1/2) int_{-1}^{1} b
    yy = np.linspace(-1.0, 1.0, 200001)
    bb = np.where(np.abs(yy) < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - yy ** 2, 1e-300)), 0.0)
    F1 = 0.5 * trapezoid(bb, yy)
    M = np.empty(K + 2)
    M[0] = 1.0
    for k in range(1, K + 2):
        M[k] = 2.0 ** (k - 1) * bder[k - 1] / F1
    out = [float(M[k] + (2.0 * M[k]) ** (1.0 - mu) * M[k + 1] ** mu) for k in range(K + 1)]
    return tuple(out)
