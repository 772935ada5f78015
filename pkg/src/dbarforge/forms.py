"""Matrix-valued (0,q)-forms on closed balls.

A :class:`FormField` stores one coefficient block per strictly increasing
multi-index ``I`` (0-based internally, 1-based in JSON).  Two representations
are supported:

* :class:`PolyRep`: truncated polynomials in ``z, zbar`` (complex balls) or in
  ``x`` (real balls), float or exact Gaussian-rational coefficients.  Blocks are
  arrays of shape ``(M, rows, cols)`` over the graded monomial basis.
* :class:`GridRep`: samples on a ball-restricted tensor grid, blocks of shape
  ``(npts, rows, cols)``.

Real coordinates of a complex point are interleaved ``(x1, y1, x2, y2, ...)``.
The same class serves the real exterior calculus (``BallDomain(real=True)``),
where ``dbar`` is the exterior derivative ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np
from sympy.polys.domains import QQ_I

from . import poly as P
from .grid import Grid, make_grid

Index = tuple


@dataclass(frozen=True)
class BallDomain:
    n: int
    r: float
    real: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.n}")
        if not (0.0 < self.r <= 1.0 + 1e-12):
            raise ValueError(f"radius must lie in (0, 1], got {self.r}")

    @property
    def nvars(self) -> int:
        """Number of polynomial variables (z and zbar, or x)."""
        return self.n if self.real else 2 * self.n

    @property
    def real_dim(self) -> int:
        return self.n if self.real else 2 * self.n

    def with_radius(self, r: float) -> "BallDomain":
        return replace(self, r=float(r))


@dataclass(frozen=True)
class PolyRep:
    dmax: int = 12
    exact: bool = False
    prec: float = math.inf  # coefficients of degree <= prec are exact

    @property
    def kind(self) -> str:
        return "poly"


@dataclass(frozen=True, eq=False)
class GridRep:
    grid: Grid
    derivative: str = "fit"  # "fit" (differentiate the LSQ fit) or "fd4"

    @property
    def kind(self) -> str:
        return "grid"

    def same_grid(self, other: "GridRep") -> bool:
        return self.grid is other.grid or self.grid.key == other.grid.key


def multi_indices(n: int, q: int) -> list:
    return list(combinations(range(n), q))


def merge_sign(I: Index, J: Index) -> tuple[int, Index | None]:
    """Sign and sorted index of dzbar_I ^ dzbar_J (sign 0 when they overlap)."""
    if set(I) & set(J):
        return 0, None
    cat = list(I) + list(J)
    inv = sum(1 for a in range(len(cat)) for b in range(a + 1, len(cat)) if cat[a] > cat[b])
    return (-1) ** inv, tuple(sorted(cat))


class FormField:
    """Immutable matrix-valued (0,q)-form on a ball."""

    __slots__ = ("domain", "q", "shape", "rep", "comps")

    def __init__(self, domain: BallDomain, q: int, shape, rep, comps: dict | None = None):
        self.domain = domain
        self.q = int(q)
        self.shape = (int(shape[0]), int(shape[1]))
        self.rep = rep
        comps = dict(comps or {})
        if self.q < 0:
            raise ValueError("negative form degree")
        if self.q > domain.n:
            comps = {}
        for I, A in comps.items():
            if len(I) != self.q or list(I) != sorted(set(I)) or (I and (I[0] < 0 or I[-1] >= domain.n)):
                raise ValueError(f"bad multi-index {I} for degree {self.q}")
            if A.shape[1:] != self.shape:
                raise ValueError(f"component shape {A.shape[1:]} != {self.shape}")
            lead = self.basis.size if isinstance(rep, PolyRep) else rep.grid.npts
            if A.shape[0] != lead:
                raise ValueError("component length does not match representation")
        self.comps = comps

    # -- constructors -----------------------------------------------------------
    @classmethod
    def zero(cls, domain, q, shape, rep) -> "FormField":
        return cls(domain, q, shape, rep, {})

    @classmethod
    def from_terms(cls, domain: BallDomain, q: int, shape, terms, dmax: int = 12,
                   exact: bool = False) -> "FormField":
        """PolyRep form from ``(I, exponent, matrix)`` triples.

        ``exponent`` has length 2n (z exponents then zbar exponents) for complex
        balls and length n for real balls; scalars are accepted for 1x1 shapes.
        """
        rep = PolyRep(dmax=dmax, exact=exact)
        basis = P.monomial_basis(domain.nvars, dmax)
        comps: dict = {}
        for I, e, mat in terms:
            I = tuple(I)
            e = tuple(int(x) for x in e)
            if len(e) != domain.nvars:
                raise ValueError("exponent length mismatch")
            if sum(e) > dmax:
                raise ValueError("term exceeds the truncation degree")
            M = np.asarray(mat).reshape(shape) if np.ndim(mat) else np.full(shape, mat)
            M = P.to_exact_array(M) if exact else np.asarray(M, dtype=complex)
            sign, K = merge_sign((), I) if I == tuple(sorted(I)) else (None, None)
            if sign is None:
                raise ValueError("multi-indices must be strictly increasing")
            if K not in comps:
                comps[K] = P.zeros((basis.size,) + tuple(shape), exact)
            comps[K][basis.index[e]] = comps[K][basis.index[e]] + M
        return cls(domain, q, shape, rep, comps)

    @classmethod
    def constant(cls, domain: BallDomain, mat, dmax: int = 12, exact: bool = False) -> "FormField":
        mat = np.atleast_2d(np.asarray(mat))
        return cls.from_terms(domain, 0, mat.shape, [((), (0,) * domain.nvars, mat)], dmax, exact)

    @classmethod
    def from_function(cls, domain: BallDomain, q: int, shape, func, grid: Grid,
                      derivative: str = "fit") -> "FormField":
        """GridRep form with ``func(X) -> {I: (P, rows, cols)}`` sampled on ``grid``."""
        vals = func(grid.nodes)
        comps = {tuple(I): np.asarray(v, dtype=complex).reshape((grid.npts,) + tuple(shape))
                 for I, v in vals.items()}
        return cls(domain, q, shape, GridRep(grid, derivative), comps)

    # -- basic properties --------------------------------------------------------
    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def r(self) -> float:
        return self.domain.r

    @property
    def is_poly(self) -> bool:
        return isinstance(self.rep, PolyRep)

    @property
    def exact(self) -> bool:
        return self.is_poly and self.rep.exact

    @property
    def basis(self) -> P.MonomialBasis:
        return P.monomial_basis(self.domain.nvars, self.rep.dmax)

    def _like(self, q=None, shape=None, comps=None, rep=None, domain=None) -> "FormField":
        return FormField(domain or self.domain, self.q if q is None else q,
                         self.shape if shape is None else shape, rep or self.rep, comps or {})

    def is_zero(self) -> bool:
        if self.is_poly:
            return not any(P.nonzero_mask(A).any() for A in self.comps.values())
        return not any(np.any(A != 0) for A in self.comps.values())

    def component(self, I) -> np.ndarray:
        I = tuple(I)
        if I in self.comps:
            return self.comps[I]
        lead = self.basis.size if self.is_poly else self.rep.grid.npts
        return P.zeros((lead,) + self.shape, self.exact)

    def order(self) -> float:
        """Lowest monomial degree present (PolyRep), or the unknown tail's degree."""
        o = min((P.order(A, self.basis) for A in self.comps.values()), default=math.inf)
        return min(o, self.rep.prec + 1)

    def __repr__(self) -> str:
        return (f"FormField(n={self.n}, r={self.r}, q={self.q}, shape={self.shape}, "
                f"rep={self.rep.kind}, comps={sorted(self.comps)})")

    # -- conversions ---------------------------------------------------------------
    def to_exact(self) -> "FormField":
        if not self.is_poly:
            raise TypeError("exact arithmetic requires PolyRep")
        if self.exact:
            return self
        comps = {I: P.to_exact_array(A) for I, A in self.comps.items()}
        return self._like(comps=comps, rep=replace(self.rep, exact=True))

    def to_float(self) -> "FormField":
        if not self.exact:
            return self
        comps = {I: P.to_float_array(A) for I, A in self.comps.items()}
        return self._like(comps=comps, rep=replace(self.rep, exact=False))

    def with_domain(self, domain: BallDomain) -> "FormField":
        return FormField(domain, self.q, self.shape, self.rep, self.comps)

    # -- arithmetic ----------------------------------------------------------------
    def _coerce(self, other: "FormField") -> tuple["FormField", "FormField"]:
        if other.domain.n != self.domain.n or other.domain.real != self.domain.real:
            raise ValueError("forms live on different spaces")
        a, b = self, other
        if a.is_poly and b.is_poly:
            if a.rep.dmax != b.rep.dmax:
                raise ValueError("PolyRep truncation degrees differ")
            if a.exact != b.exact:
                a, b = a.to_exact(), b.to_exact()
            return a, b
        if a.is_poly:
            a = to_grid(a, b.rep.grid, b.rep.derivative)
        if b.is_poly:
            b = to_grid(b, a.rep.grid, a.rep.derivative)
        if not a.rep.same_grid(b.rep):
            raise ValueError("GridRep operands must share one grid")
        return a, b

    def __add__(self, other: "FormField") -> "FormField":
        a, b = self._coerce(other)
        if a.q != b.q or a.shape != b.shape:
            raise ValueError("degree or shape mismatch in sum")
        comps = dict(a.comps)
        for I, B in b.comps.items():
            comps[I] = comps[I] + B if I in comps else B
        rep = a.rep
        if a.is_poly:
            rep = replace(rep, prec=min(a.rep.prec, b.rep.prec))
        return a._like(comps=comps, rep=rep)

    def __neg__(self) -> "FormField":
        return self.scale(-1)

    def __sub__(self, other: "FormField") -> "FormField":
        return self + (-other)

    def scale(self, c) -> "FormField":
        if self.exact:
            c = P.exact_scalar(c)
        return self._like(comps={I: A * c for I, A in self.comps.items()})

    def __mul__(self, c) -> "FormField":
        return self.scale(c)

    __rmul__ = __mul__

    def lmul(self, M) -> "FormField":
        """Left multiplication of every coefficient by a constant matrix."""
        M = np.atleast_2d(np.asarray(M))
        if self.exact:
            M = P.to_exact_array(M)
        comps = {I: np.matmul(M, A) for I, A in self.comps.items()}
        return self._like(shape=(M.shape[0], self.shape[1]), comps=comps)

    def rmul(self, M) -> "FormField":
        M = np.atleast_2d(np.asarray(M))
        if self.exact:
            M = P.to_exact_array(M)
        comps = {I: np.matmul(A, M) for I, A in self.comps.items()}
        return self._like(shape=(self.shape[0], M.shape[1]), comps=comps)

    # -- evaluation -----------------------------------------------------------------
    def _vars_at(self, X: np.ndarray) -> np.ndarray:
        """Polynomial variable values at real points X (P, real_dim)."""
        if self.domain.real:
            return X.astype(complex)
        n = self.n
        Z = X[:, 0::2] + 1j * X[:, 1::2]
        return np.concatenate([Z, Z.conj()], axis=1)

    def values_at(self, X: np.ndarray) -> dict:
        """Coefficient blocks at real points X (P, real_dim): ``{I: (P, rows, cols)}``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.domain.real_dim)
        out = {}
        if self.is_poly:
            flats = {I: (P.to_float_array(A) if self.exact else A) for I, A in self.comps.items()}
            # only the monomials that actually occur
            used = np.nonzero(np.any([P.nonzero_mask(A) for A in flats.values()], axis=0))[0] \
                if flats else np.zeros(0, dtype=np.int64)
            Vars = self._vars_at(X)
            exps = self.basis.exps[used]
            dmax = int(exps.max()) if exps.size else 0
            V = np.ones((X.shape[0], len(used)), dtype=complex)
            for v in range(Vars.shape[1]):
                if dmax == 0 or not exps[:, v].any():
                    continue
                pw = np.ones((X.shape[0], dmax + 1), dtype=complex)
                for k in range(1, dmax + 1):
                    pw[:, k] = pw[:, k - 1] * Vars[:, v]
                V *= pw[:, exps[:, v]]
            for I, A in flats.items():
                Au = A[used].reshape(len(used), self.shape[0] * self.shape[1])
                out[I] = (V @ Au).reshape((X.shape[0],) + self.shape)
            return out
        g = self.rep.grid
        for I, A in self.comps.items():
            out[I] = g.eval_fit(g.fit(A), X)
        return out


# -- real-coordinate helpers ------------------------------------------------------

def complex_to_real(z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def _point_to_real(u: FormField, point) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(point))
    if u.domain.real:
        X = pt.astype(float)
    else:
        X = complex_to_real(pt.astype(complex))
    if X.shape[-1] != u.domain.real_dim:
        raise ValueError("point has the wrong dimension")
    return X


# -- module-level operations -------------------------------------------------------

def _poly_partial(u: FormField, axis: int) -> dict:
    """Real partial derivative of each PolyRep block along a real coordinate."""
    basis = u.basis
    out = {}
    if u.domain.real:
        for I, A in u.comps.items():
            out[I] = P.poly_deriv(basis, A, axis)
        return out
    j, imag = divmod(axis, 2)
    n = u.n
    for I, A in u.comps.items():
        dz = P.poly_deriv(basis, A, j)
        dzb = P.poly_deriv(basis, A, n + j)
        if not imag:
            out[I] = dz + dzb
        else:
            c = QQ_I(0, 1) if u.exact else 1j
            out[I] = (dz - dzb) * c
    return out


def _grid_partial_values(u: FormField, A: np.ndarray, alpha) -> np.ndarray:
    """Real derivative d^alpha of node values A on the grid of u."""
    g = u.rep.grid
    alpha = tuple(alpha)
    if sum(alpha) == 0:
        return A
    if u.rep.derivative == "fd4":
        vals = A
        flat_shape = A.shape
        for axis, k in enumerate(alpha):
            for _ in range(k):
                D, bad = g.fd_matrix(axis)
                flat = vals.reshape(g.npts, -1)
                new = D @ flat
                if bad.any():
                    coef = g.coef_deriv(g.fit(flat), axis)
                    new[bad] = g.basis(g.nodes[bad]) @ coef
                vals = new.reshape(flat_shape)
        return vals
    coef = g.fit(A)
    for axis, k in enumerate(alpha):
        for _ in range(k):
            coef = g.coef_deriv(coef, axis)
    if "Vnodes" not in g._cache:
        g._cache["Vnodes"] = g.basis(g.nodes)
    V = g._cache["Vnodes"]
    return (V @ coef.reshape(coef.shape[0], -1)).reshape(A.shape)


def partial(u: FormField, alpha) -> FormField:
    """Componentwise real derivative d^alpha (alpha indexes real coordinates)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != u.domain.real_dim:
        raise ValueError("multi-index length must equal the real dimension")
    if u.is_poly:
        cur = u
        for axis, k in enumerate(alpha):
            for _ in range(k):
                cur = cur._like(comps=_poly_partial(cur, axis),
                                rep=replace(cur.rep, prec=cur.rep.prec - 1))
        return cur
    comps = {I: _grid_partial_values(u, A, alpha) for I, A in u.comps.items()}
    return u._like(comps=comps)


def dbar(u: FormField) -> FormField:
    """The (0,1)-part of the exterior derivative (``d`` on real balls)."""
    n = u.n
    if u.q + 1 > n:
        return u._like(q=u.q + 1, comps={})
    exact = u.exact
    comps: dict = {}

    def put(K, sign, B):
        B = B * (QQ_I(sign, 0) if exact else sign)
        comps[K] = comps[K] + B if K in comps else B

    if u.is_poly:
        basis = u.basis
        for I, A in u.comps.items():
            for j in range(n):
                if j in I:
                    continue
                v = j if u.domain.real else n + j
                dA = P.poly_deriv(basis, A, v)
                sign, K = merge_sign((j,), I)
                put(K, sign, dA)
        rep = replace(u.rep, prec=u.rep.prec - 1)
        return u._like(q=u.q + 1, comps=comps, rep=rep)
    for I, A in u.comps.items():
        for j in range(n):
            if j in I:
                continue
            if u.domain.real:
                alpha = [0] * n
                alpha[j] = 1
                dA = _grid_partial_values(u, A, alpha)
            else:
                ax = [0] * (2 * n)
                ay = [0] * (2 * n)
                ax[2 * j] = 1
                ay[2 * j + 1] = 1
                dA = 0.5 * (_grid_partial_values(u, A, ax) + 1j * _grid_partial_values(u, A, ay))
            sign, K = merge_sign((j,), I)
            put(K, sign, dA)
    return u._like(q=u.q + 1, comps=comps)


d = dbar


def wedge(a: FormField, b: FormField) -> FormField:
    """Matrix product combined with the exterior product of the dzbar factors."""
    a, b = a._coerce(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} ^ {b.shape}")
    q = a.q + b.q
    shape = (a.shape[0], b.shape[1])
    if q > a.n:
        return a._like(q=q, shape=shape, comps={})
    comps: dict = {}
    dropped = False
    exact = a.exact
    for I, A in a.comps.items():
        for J, B in b.comps.items():
            sign, K = merge_sign(I, J)
            if sign == 0:
                continue
            if a.is_poly:
                C, dr = P.poly_mul(a.basis, A, B)
                dropped = dropped or dr
            else:
                C = np.matmul(A, B)
            if sign < 0:
                C = C * (QQ_I(-1, 0) if exact else -1)
            comps[K] = comps[K] + C if K in comps else C
    rep = a.rep
    if a.is_poly:
        oa, ob = a.order(), b.order()
        prec = min(a.rep.prec + ob, b.rep.prec + oa)
        if dropped:
            prec = min(prec, a.rep.dmax)
        rep = replace(rep, prec=prec)
    return a._like(q=q, shape=shape, comps=comps, rep=rep)


def matrix_inverse(g: FormField) -> FormField:
    """Pointwise inverse of a square matrix 0-form (truncated series in PolyRep)."""
    if g.q != 0 or g.shape[0] != g.shape[1]:
        raise ValueError("inverse needs a square matrix function")
    p = g.shape[0]
    if g.is_poly:
        G = g.component(())
        try:
            inv, dropped = P.poly_inverse(g.basis, G)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("matrix function is singular at the centre") from exc
        prec = min(g.rep.prec, g.rep.dmax) if dropped else g.rep.prec
        return g._like(comps={(): inv}, rep=replace(g.rep, prec=prec))
    G = g.component(())
    return g._like(comps={(): np.linalg.inv(G)})


def identity_form(domain: BallDomain, p: int, rep) -> FormField:
    if isinstance(rep, PolyRep):
        return FormField.constant(domain, np.eye(p), rep.dmax, rep.exact)
    grid = rep.grid
    A = np.broadcast_to(np.eye(p, dtype=complex), (grid.npts, p, p)).copy()
    return FormField(domain, 0, (p, p), rep, {(): A})


def restrict(u: FormField, r_new: float, npa: int | None = None) -> FormField:
    """Restriction to the concentric ball of radius r_new (resampled in GridRep)."""
    if r_new > u.r * (1 + 1e-12):
        raise ValueError(f"cannot restrict from radius {u.r} to larger radius {r_new}")
    if r_new <= 0:
        raise ValueError("radius must be positive")
    if math.isclose(r_new, u.r, rel_tol=1e-15, abs_tol=0.0) and npa is None:
        return u
    dom = u.domain.with_radius(r_new)
    if u.is_poly:
        return u.with_domain(dom)
    g = u.rep.grid
    g2 = make_grid(g.D, float(r_new), npa or g.npa)
    comps = {I: g.eval_fit(g.fit(A), g2.nodes) for I, A in u.comps.items()}
    return FormField(dom, u.q, u.shape, GridRep(g2, u.rep.derivative), comps)


def to_grid(u: FormField, grid: Grid | int | None = None, derivative: str = "fit") -> FormField:
    """Sample a form on a grid over its ball (grid given as Grid or points per axis)."""
    if grid is None or isinstance(grid, (int, np.integer)):
        npa = int(grid) if grid is not None else (33 if u.domain.real_dim <= 2 else 17)
        grid = make_grid(u.domain.real_dim, float(u.r), npa)
    if grid.D != u.domain.real_dim:
        raise ValueError("grid dimension does not match the domain")
    if not u.is_poly and u.rep.same_grid(GridRep(grid)):
        return u
    vals = u.values_at(grid.nodes)
    return FormField(u.domain, u.q, u.shape, GridRep(grid, derivative), vals)


def evaluate(u: FormField, point, strict: bool = True):
    """Coefficients at one point; a matrix for 0-forms, ``{I: matrix}`` otherwise.

    ``strict=False`` lets a PolyRep form be evaluated as a polynomial anywhere.
    """
    X = _point_to_real(u, point)
    if (strict or not u.is_poly) and np.linalg.norm(X) > u.r * (1 + 1e-12):
        raise ValueError("point lies outside the closed ball")
    vals = u.values_at(X[None, :])
    res = {I: V[0] for I, V in vals.items()}
    if u.q == 0:
        return res.get((), np.zeros(u.shape, dtype=complex))
    return res


def coefficients_equal(a: FormField, b: FormField) -> bool:
    """Exact equality of PolyRep coefficients up to the degree both are known."""
    a, b = a._coerce(b)
    if not a.is_poly:
        raise TypeError("exact comparison needs PolyRep")
    if a.q != b.q or a.shape != b.shape:
        return False
    cap = min(a.rep.prec, b.rep.prec, a.rep.dmax)
    if cap < 0:
        return True
    sel = a.basis.degree <= cap
    diff = (a - b)
    for A in diff.comps.values():
        if P.nonzero_mask(A[sel]).any() if A[sel].size else False:
            return False
    return True


def truncate_to_precision(u: FormField) -> FormField:
    """Drop PolyRep coefficients above the degree up to which they are known."""
    if not u.is_poly or u.rep.prec >= u.rep.dmax:
        return u
    keep = u.basis.degree <= u.rep.prec
    comps = {}
    for I, A in u.comps.items():
        B = A.copy()
        B[~keep] = P.EXACT_ZERO if u.exact else 0
        comps[I] = B
    return u._like(comps=comps)


def vanishes(u: FormField, tol: float = 0.0) -> bool:
    """Exact (PolyRep, up to precision) or tolerance-based vanishing test."""
    if u.is_poly and u.exact:
        return all(not P.nonzero_mask(A).any() for A in truncate_to_precision(u).comps.values())
    u = truncate_to_precision(u)
    return max_abs_coefficient(u) <= tol


def max_abs_coefficient(u: FormField) -> float:
    vals = [np.abs(P.to_float_array(A)).max() for A in u.comps.values() if A.size]
    return float(max(vals, default=0.0))


# -- serialization -------------------------------------------------------------------

def _fmt_exact(x) -> list:
    return [str(x.x), str(x.y)]


def to_json(u: FormField) -> dict:
    out = {"n": u.n, "r": u.r, "q": u.q, "rows": u.shape[0], "cols": u.shape[1],
           "field": "real" if u.domain.real else "complex", "rep": u.rep.kind}
    comps = {}
    if u.is_poly:
        out["dmax"] = u.rep.dmax
        out["exact"] = u.rep.exact
        out["prec"] = None if math.isinf(u.rep.prec) else u.rep.prec
        basis = u.basis
        nz_all = basis.exps
        for I, A in u.comps.items():
            mask = P.nonzero_mask(A)
            entries = []
            for i in range(u.shape[0]):
                row = []
                for j in range(u.shape[1]):
                    terms = []
                    for m in np.nonzero(mask)[0]:
                        c = A[m, i, j]
                        if u.exact:
                            if not bool(c):
                                continue
                            re, im = _fmt_exact(c)
                        else:
                            if c == 0:
                                continue
                            re, im = float(c.real), float(c.imag)
                        e = [int(x) for x in nz_all[m]]
                        if u.domain.real:
                            terms.append([e, re, im])
                        else:
                            terms.append([e[:u.n], e[u.n:], re, im])
                    row.append(terms)
                entries.append(row)
            comps[",".join(str(i + 1) for i in I)] = entries
    else:
        out["grid"] = u.rep.grid.descriptor()
        out["derivative"] = u.rep.derivative
        for I, A in u.comps.items():
            flat = A.reshape(-1)
            comps[",".join(str(i + 1) for i in I)] = np.stack([flat.real, flat.imag], axis=1).tolist()
    out["components"] = comps
    return out


def _parse_index(key: str) -> tuple:
    key = key.strip()
    return tuple(int(s) - 1 for s in key.split(",")) if key else ()


def from_json(obj: dict) -> FormField:
    try:
        real = obj.get("field", "complex") == "real"
        dom = BallDomain(int(obj["n"]), float(obj["r"]), real)
        q, shape = int(obj["q"]), (int(obj["rows"]), int(obj["cols"]))
        if obj["rep"] == "poly":
            from fractions import Fraction
            exact = bool(obj.get("exact", False))
            dmax = int(obj.get("dmax", 12))
            terms = []
            for key, entries in obj["components"].items():
                I = _parse_index(key)
                for i, row in enumerate(entries):
                    for j, tl in enumerate(row):
                        for t in tl:
                            if real:
                                e, re, im = t
                            else:
                                ez, ezb, re, im = t
                                e = list(ez) + list(ezb)
                            M = np.zeros(shape, dtype=object if exact else complex)
                            if exact:
                                M.fill(0)
                                M[i, j] = QQ_I(P.QQ(Fraction(re).numerator, Fraction(re).denominator),
                                               P.QQ(Fraction(im).numerator, Fraction(im).denominator))
                            else:
                                M[i, j] = complex(float(re), float(im))
                            terms.append((I, e, M))
            u = FormField.from_terms(dom, q, shape, terms, dmax, exact)
            prec = obj.get("prec")
            if prec is not None:
                u = u._like(comps=u.comps, rep=replace(u.rep, prec=prec))
            return u
        if obj["rep"] == "grid":
            gd = obj["grid"]
            g = make_grid(int(gd["dim"]), float(gd["radius"]), int(gd["points_per_axis"]),
                          int(gd["fit_degree"]), float(gd.get("extent", gd["radius"])))
            comps = {}
            for key, data in obj["components"].items():
                arr = np.asarray(data, dtype=float)
                comps[_parse_index(key)] = (arr[:, 0] + 1j * arr[:, 1]).reshape((g.npts,) + shape)
            return FormField(dom, q, shape, GridRep(g, obj.get("derivative", "fit")), comps)
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed form record: {exc}") from exc
    raise ValueError(f"unknown representation {obj.get('rep')!r}")
