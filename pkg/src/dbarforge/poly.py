"""Dense truncated matrix polynomials.

A matrix polynomial in ``nvars`` commuting variables is stored as an array of
shape ``(M, rows, cols)`` where ``M`` indexes the monomials of total degree at
most ``dmax`` (graded order).  Coefficients are either ``complex128`` or exact
Gaussian rationals (sympy ``QQ_I`` elements in an object array).
"""

from __future__ import annotations

import functools
import math
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np
from sympy.polys.domains import QQ, QQ_I

EXACT_ZERO = QQ_I(0, 0)
EXACT_ONE = QQ_I(1, 0)


class MonomialBasis:
    """Graded enumeration of monomials with product and derivative tables."""

    def __init__(self, nvars: int, dmax: int):
        self.nvars = nvars
        self.dmax = dmax
        exps = []
        for d in range(dmax + 1):
            for combo in combinations_with_replacement(range(nvars), d):
                e = [0] * nvars
                for v in combo:
                    e[v] += 1
                exps.append(tuple(e))
        # combinations_with_replacement yields each multiset once
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), nvars)
        self.size = len(exps)
        self.degree = self.exps.sum(axis=1)
        self.index = {e: i for i, e in enumerate(exps)}
        self._mul = None
        self._deriv = {}

    @property
    def mul_table(self) -> np.ndarray:
        if self._mul is None:
            M = self.size
            tab = np.full((M, M), -1, dtype=np.int64)
            for a in range(M):
                ea = self.exps[a]
                for b in range(M):
                    if self.degree[a] + self.degree[b] > self.dmax:
                        continue
                    tab[a, b] = self.index[tuple(ea + self.exps[b])]
            self._mul = tab
        return self._mul

    def deriv_table(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Target index (or -1) and integer factor of d/dvar_v per monomial."""
        if v not in self._deriv:
            tgt = np.full(self.size, -1, dtype=np.int64)
            fac = np.zeros(self.size, dtype=np.int64)
            for i, e in enumerate(self.exps):
                if e[v] > 0:
                    e2 = e.copy()
                    e2[v] -= 1
                    tgt[i] = self.index[tuple(e2)]
                    fac[i] = e[v]
            self._deriv[v] = (tgt, fac)
        return self._deriv[v]

    def values(self, X: np.ndarray) -> np.ndarray:
        """Monomial values at points X of shape (P, nvars); returns (P, M)."""
        X = np.asarray(X)
        P = X.shape[0]
        out = np.ones((P, self.size), dtype=np.result_type(X.dtype, np.float64))
        for v in range(self.nvars):
            pw = np.ones((P, self.dmax + 1), dtype=out.dtype)
            for k in range(1, self.dmax + 1):
                pw[:, k] = pw[:, k - 1] * X[:, v]
            out *= pw[:, self.exps[:, v]]
        return out


@functools.lru_cache(maxsize=32)
def monomial_basis(nvars: int, dmax: int) -> MonomialBasis:
    return MonomialBasis(nvars, dmax)


# -- scalars -----------------------------------------------------------------

def exact_scalar(x) -> object:
    """Convert int/float/complex/Fraction/QQ_I to an exact Gaussian rational."""
    if isinstance(x, type(EXACT_ZERO)):
        return x
    if isinstance(x, (int, np.integer)):
        return QQ_I(int(x), 0)
    if isinstance(x, Fraction):
        return QQ_I(QQ(x.numerator, x.denominator), 0)
    z = complex(x)
    re, im = Fraction(z.real), Fraction(z.imag)
    return QQ_I(QQ(re.numerator, re.denominator), QQ(im.numerator, im.denominator))


def float_scalar(x) -> complex:
    if isinstance(x, type(EXACT_ZERO)):
        return complex(float(x.x), float(x.y))
    return complex(x)


def to_exact_array(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == object:
        return np.vectorize(exact_scalar, otypes=[object])(a) if a.size else a.copy()
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for i, v in enumerate(a.reshape(-1)):
        flat[i] = exact_scalar(v)
    return out


def to_float_array(a: np.ndarray) -> np.ndarray:
    if a.dtype != object:
        return np.asarray(a, dtype=complex)
    out = np.empty(a.shape, dtype=complex)
    flat = out.reshape(-1)
    for i, v in enumerate(a.reshape(-1)):
        flat[i] = float_scalar(v)
    return out


def zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(EXACT_ZERO)
        return out
    return np.zeros(shape, dtype=complex)


def identity(p: int, exact: bool) -> np.ndarray:
    out = zeros((p, p), exact)
    for i in range(p):
        out[i, i] = EXACT_ONE if exact else 1.0
    return out


def nonzero_mask(C: np.ndarray) -> np.ndarray:
    """Per-monomial mask of nonzero coefficient matrices."""
    flat = C.reshape(C.shape[0], -1)
    if C.dtype == object:
        return np.array([any(bool(x) for x in row) for row in flat], dtype=bool)
    return np.any(flat != 0, axis=1)


def order(C: np.ndarray, basis: MonomialBasis) -> float:
    """Lowest degree carrying a nonzero coefficient (inf for zero)."""
    nz = nonzero_mask(C)
    if not nz.any():
        return math.inf
    return int(basis.degree[nz].min())


# -- arithmetic --------------------------------------------------------------

def poly_mul(basis: MonomialBasis, A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, bool]:
    """Product A*B truncated at dmax; also returns whether nonzero terms were dropped."""
    exact = A.dtype == object or B.dtype == object
    M = basis.size
    out = zeros((M, A.shape[1], B.shape[2]), exact)
    na = np.nonzero(nonzero_mask(A))[0]
    nb = np.nonzero(nonzero_mask(B))[0]
    if len(na) == 0 or len(nb) == 0:
        return out, False
    tab = basis.mul_table[np.ix_(na, nb)]
    dropped = bool((tab < 0).any())
    if not exact:
        prod = np.einsum("arm,bmc->abrc", A[na], B[nb])
        keep = tab >= 0
        np.add.at(out, tab[keep], prod[keep])
        return out, dropped
    Bn = B[nb]
    for ia, a in enumerate(na):
        row = tab[ia]
        keep = row >= 0
        if not keep.any():
            continue
        contrib = np.matmul(A[a], Bn[keep])
        for t, c in zip(row[keep], contrib):
            out[t] = out[t] + c
    return out, dropped


def poly_deriv(basis: MonomialBasis, A: np.ndarray, v: int) -> np.ndarray:
    tgt, fac = basis.deriv_table(v)
    exact = A.dtype == object
    out = zeros(A.shape, exact)
    for i in np.nonzero(tgt >= 0)[0]:
        if exact:
            f = QQ_I(int(fac[i]), 0)
            out[tgt[i]] = A[i] * f
        else:
            out[tgt[i]] = A[i] * fac[i]
    return out


def mat_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a constant square matrix; exact Gauss-Jordan for object arrays."""
    if A.dtype != object:
        return np.linalg.inv(A)
    p = A.shape[0]
    M = np.concatenate([A.copy(), identity(p, True)], axis=1)
    for c in range(p):
        piv = next((r for r in range(c, p) if bool(M[r, c])), None)
        if piv is None:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != c:
            M[[c, piv]] = M[[piv, c]]
        M[c] = M[c] * (EXACT_ONE / M[c, c])
        for r in range(p):
            if r != c and bool(M[r, c]):
                M[r] = M[r] - M[c] * M[r, c]
    return M[:, p:]


def poly_inverse(basis: MonomialBasis, G: np.ndarray) -> tuple[np.ndarray, bool]:
    """Truncated inverse of a square matrix polynomial with invertible constant term.

    G = G0 + N with N of order >= 1, so G^{-1} = sum_k (-G0^{-1} N)^k G0^{-1};
    the series is cut once the powers exceed dmax.
    """
    exact = G.dtype == object
    G0inv = mat_inverse(G[0])
    N = G.copy()
    N[0] = zeros(G.shape[1:], exact)
    step = np.empty_like(N)
    for i in range(basis.size):
        step[i] = -np.matmul(G0inv, N[i]) if not exact else np.matmul(G0inv, N[i]) * QQ_I(-1, 0)
    term = zeros(G.shape, exact)
    term[0] = G0inv
    total = term.copy()
    dropped = False
    for _ in range(basis.dmax):
        term, dr = poly_mul(basis, step, term)
        dropped = dropped or dr
        if not nonzero_mask(term).any():
            break
        total = total + term
    return total, dropped
