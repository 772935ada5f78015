"""Tensor grids restricted to a ball, least-squares polynomial fits, derivatives.

Nodes sit on the lattice ``-radius + i*h`` (``h = 2*radius/(npa-1)``) in each
real coordinate and are kept when they lie in the closed ball of radius
``extent`` (``extent >= radius``; the excess is a ghost layer).  A field sampled
on the nodes is also represented by its least-squares fit in a total-degree
Chebyshev basis, which provides evaluation off the lattice and (in ``"fit"``
mode) derivatives.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


def _total_degree_indices(D: int, p: int) -> np.ndarray:
    out = []
    for d in range(p + 1):
        for combo in itertools.combinations_with_replacement(range(D), d):
            k = [0] * D
            for v in combo:
                k[v] += 1
            out.append(k)
    return np.array(out, dtype=np.int64).reshape(-1, D)


def _cheb_table(x: np.ndarray, p: int) -> np.ndarray:
    """T_0..T_p evaluated at x (shape (P,)); returns (P, p+1)."""
    T = np.empty((x.shape[0], p + 1))
    T[:, 0] = 1.0
    if p >= 1:
        T[:, 1] = x
    for k in range(2, p + 1):
        T[:, k] = 2.0 * x * T[:, k - 1] - T[:, k - 2]
    return T


def _cheb_deriv_matrix(p: int) -> np.ndarray:
    """d/dx in the Chebyshev basis: column k holds the coefficients of T_k'."""
    Dm = np.zeros((p + 1, p + 1))
    for k in range(1, p + 1):
        for j in range(k - 1, -1, -2):
            Dm[j, k] = 2.0 * k if j > 0 else float(k)
    return Dm


# 5-point first-derivative weights on offsets, keyed by the node position in the window
_FD5 = {
    0: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    1: np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
    2: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
    3: np.array([-1.0, 6.0, -18.0, 10.0, 3.0]) / 12.0,
    4: np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / 12.0,
}


def default_fit_degree(D: int, npa: int) -> int:
    """Largest total degree that keeps the equispaced least-squares fit well conditioned."""
    if D <= 2:
        return int(min(24, max(4, round(0.62 * (npa - 1)))))
    return int(min(10, max(3, round(0.7 * (npa - 1)))))


@dataclass(eq=False)
class Grid:
    D: int
    radius: float
    npa: int
    fit_degree: int
    extent: float
    nodes: np.ndarray = field(repr=False)
    lattice: np.ndarray = field(repr=False)
    interior: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return 2.0 * self.radius / (self.npa - 1)

    @property
    def npts(self) -> int:
        return self.nodes.shape[0]

    @property
    def key(self) -> tuple:
        return (self.D, float(self.radius), self.npa, self.fit_degree, float(self.extent))

    def descriptor(self) -> dict:
        return {"dim": self.D, "radius": self.radius, "points_per_axis": self.npa,
                "fit_degree": self.fit_degree, "extent": self.extent}

    # -- fit ------------------------------------------------------------------
    @property
    def basis_index(self) -> np.ndarray:
        if "bidx" not in self._cache:
            self._cache["bidx"] = _total_degree_indices(self.D, self.fit_degree)
        return self._cache["bidx"]

    def basis(self, X: np.ndarray) -> np.ndarray:
        """Chebyshev basis values at real points X (P, D) -> (P, nb)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.D)
        L = self.extent * (1.0 + 1e-9)
        tabs = [_cheb_table(X[:, a] / L, self.fit_degree) for a in range(self.D)]
        if self.D == 1:
            return tabs[0]
        # products over each half of the axes, then one gather-multiply
        (lo, ilo), (hi, ihi) = self._half_index()
        A = self._half_products(tabs[:lo.shape[1]], lo)
        B = self._half_products(tabs[lo.shape[1]:], hi)
        return A[:, ilo] * B[:, ihi]

    def _half_index(self):
        if "half" not in self._cache:
            idx = self.basis_index
            k = self.D // 2
            out = []
            for part in (idx[:, :k], idx[:, k:]):
                uniq, inv = np.unique(part, axis=0, return_inverse=True)
                out.append((uniq, inv.reshape(-1)))
            self._cache["half"] = tuple(out)
        return self._cache["half"]

    @staticmethod
    def _half_products(tabs, exps):
        V = tabs[0][:, exps[:, 0]]
        for a in range(1, exps.shape[1]):
            V = V * tabs[a][:, exps[:, a]]
        return V

    def _solver(self):
        if "solver" not in self._cache:
            V = self.basis(self.nodes)
            Q, R = np.linalg.qr(V)
            self._cache["solver"] = (Q, R)
        return self._cache["solver"]

    def fit(self, values: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for node values of shape (npts, ...)."""
        Q, R = self._solver()
        flat = values.reshape(self.npts, -1)
        coef = np.linalg.solve(R, Q.T @ flat) if flat.dtype != complex else (
            np.linalg.solve(R, Q.T @ flat.real) + 1j * np.linalg.solve(R, Q.T @ flat.imag))
        return coef.reshape((coef.shape[0],) + values.shape[1:])

    def eval_fit(self, coef: np.ndarray, X: np.ndarray, chunk: int = 20000) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.D)
        flat = coef.reshape(coef.shape[0], -1)
        out = np.empty((X.shape[0], flat.shape[1]), dtype=flat.dtype)
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk] = self.basis(X[s:s + chunk]) @ flat
        return out.reshape((X.shape[0],) + coef.shape[1:])

    def coef_deriv(self, coef: np.ndarray, axis: int) -> np.ndarray:
        key = ("dmat", axis)
        if key not in self._cache:
            idx = self.basis_index
            lookup = {tuple(k): i for i, k in enumerate(idx)}
            d1 = _cheb_deriv_matrix(self.fit_degree)
            rows, cols, vals = [], [], []
            for i, k in enumerate(idx):
                ka = k[axis]
                for j in range(ka - 1, -1, -2):
                    k2 = k.copy()
                    k2[axis] = j
                    rows.append(lookup[tuple(k2)])
                    cols.append(i)
                    vals.append(d1[j, ka])
            L = self.extent * (1.0 + 1e-9)
            nb = idx.shape[0]
            self._cache[key] = sp.csr_matrix((np.array(vals) / L, (rows, cols)), shape=(nb, nb))
        Dm = self._cache[key]
        flat = coef.reshape(coef.shape[0], -1)
        return (Dm @ flat).reshape(coef.shape)

    # -- finite differences ------------------------------------------------------
    def fd_matrix(self, axis: int) -> tuple[sp.csr_matrix, np.ndarray]:
        """Sparse 5-point derivative along ``axis`` and a mask of nodes it cannot serve."""
        key = ("fd", axis)
        if key not in self._cache:
            lookup = {tuple(l): i for i, l in enumerate(self.lattice)}
            rows, cols, vals = [], [], []
            bad = np.zeros(self.npts, dtype=bool)
            for i, l in enumerate(self.lattice):
                # contiguous chord of available nodes through i along axis
                lo = 0
                while True:
                    l2 = l.copy()
                    l2[axis] -= lo + 1
                    if tuple(l2) in lookup and lo < 4:
                        lo += 1
                    else:
                        break
                hi = 0
                while True:
                    l2 = l.copy()
                    l2[axis] += hi + 1
                    if tuple(l2) in lookup and hi < 4:
                        hi += 1
                    else:
                        break
                if lo + hi < 4:
                    bad[i] = True
                    continue
                pos = min(lo, 2) if hi >= 2 else 4 - hi
                w = _FD5[pos]
                for o in range(5):
                    l2 = l.copy()
                    l2[axis] += o - pos
                    rows.append(i)
                    cols.append(lookup[tuple(l2)])
                    vals.append(w[o] / self.h)
            self._cache[key] = (sp.csr_matrix((vals, (rows, cols)), shape=(self.npts, self.npts)), bad)
        return self._cache[key]

    def neighbor_pairs(self, interior_only: bool = True) -> tuple[np.ndarray, np.ndarray]:
        key = ("pairs", interior_only)
        if key not in self._cache:
            lookup = {tuple(l): i for i, l in enumerate(self.lattice)}
            I, J = [], []
            for i, l in enumerate(self.lattice):
                if interior_only and not self.interior[i]:
                    continue
                for a in range(self.D):
                    l2 = l.copy()
                    l2[a] += 1
                    j = lookup.get(tuple(l2))
                    if j is not None and (not interior_only or self.interior[j]):
                        I.append(i)
                        J.append(j)
            self._cache[key] = (np.array(I, dtype=np.int64), np.array(J, dtype=np.int64))
        return self._cache[key]


def make_grid(D: int, radius: float, npa: int, fit_degree: int | None = None,
              extent: float | None = None) -> Grid:
    """Cached grid factory; equal parameters return the same object."""
    if npa < 3:
        raise ValueError("need at least 3 points per axis")
    if fit_degree is None:
        fit_degree = default_fit_degree(D, npa)
    extent = float(radius) if extent is None else max(float(extent), float(radius))
    return _make_grid(int(D), float(radius), int(npa), int(fit_degree), extent)


@functools.lru_cache(maxsize=64)
def _make_grid(D: int, radius: float, npa: int, fit_degree: int, extent: float) -> Grid:
    h = 2.0 * radius / (npa - 1)
    g = int(math.ceil((extent - radius) / h - 1e-12))
    ax = np.arange(-g, npa + g)
    lat = np.array(list(itertools.product(ax, repeat=D)), dtype=np.int64)
    X = -radius + lat * h
    rr = np.sqrt((X ** 2).sum(axis=1))
    keep = rr <= extent * (1 + 1e-12)
    lat, X, rr = lat[keep], X[keep], rr[keep]
    interior = rr <= radius * (1 + 1e-12)
    return Grid(D=D, radius=float(radius), npa=npa, fit_degree=int(fit_degree), extent=float(extent),
                nodes=X, lattice=lat, interior=interior)
