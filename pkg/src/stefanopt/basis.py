"""Orthonormal coefficient basis for the convection/reaction control blocks.

The family is built from tensor cosine products cos(i*pi*x/ell)*cos(j*pi*t/T)
enumerated by total degree i+j.  Under the first-order Sobolev inner product

    <u, v> = int_D (u v + u_x v_x + u_t v_t)

the raw family is orthogonal (each factor integral is diagonal), so
orthonormalization reduces to scaling; orthonormality is still verified
numerically via :meth:`CoefficientBasis.gram_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import interval_rule


def _degree_sequence(size: int) -> list[tuple[int, int]]:
    degrees = []
    d = 0
    while len(degrees) < size:
        for i in range(d + 1):
            degrees.append((i, d - i))
            if len(degrees) == size:
                break
        d += 1
    return degrees


def _cos_antideriv(freqs: np.ndarray, edges: np.ndarray, length: float) -> np.ndarray:
    """Integrals of cos(q*pi*x/length) over each cell of ``edges``; shape (nfreq, ncells)."""
    out = np.empty((freqs.size, edges.size - 1))
    for row, q in enumerate(freqs):
        if q == 0:
            out[row] = np.diff(edges)
        else:
            w = q * math.pi / length
            out[row] = (np.sin(w * edges[1:]) - np.sin(w * edges[:-1])) / w
    return out


@dataclass(frozen=True)
class CoefficientBasis:
    size: int
    ell: float
    T: float

    @property
    def degrees(self) -> list[tuple[int, int]]:
        return _degree_sequence(self.size)

    def _scales(self) -> np.ndarray:
        scales = np.empty(self.size)
        for k, (i, j) in enumerate(self.degrees):
            xi = self.ell if i == 0 else self.ell / 2
            ti = self.T if j == 0 else self.T / 2
            xd = 0.0 if i == 0 else (i * math.pi / self.ell) ** 2 * self.ell / 2
            td = 0.0 if j == 0 else (j * math.pi / self.T) ** 2 * self.T / 2
            scales[k] = 1.0 / math.sqrt(xi * ti + xd * ti + xi * td)
        return scales

    def evaluate(self, k: int, x, t):
        i, j = self.degrees[k]
        a = self._scales()[k]
        return a * np.cos(i * math.pi * np.asarray(x) / self.ell) \
                 * np.cos(j * math.pi * np.asarray(t) / self.T)

    def evaluate_with_derivatives(self, k: int, x, t):
        """Returns (value, d/dx, d/dt) arrays of basis function k."""
        i, j = self.degrees[k]
        a = self._scales()[k]
        wx = i * math.pi / self.ell
        wt = j * math.pi / self.T
        cx, ct = np.cos(wx * np.asarray(x)), np.cos(wt * np.asarray(t))
        sx, st = np.sin(wx * np.asarray(x)), np.sin(wt * np.asarray(t))
        return a * cx * ct, -a * wx * sx * ct, -a * wt * cx * st

    def expansion(self, coords):
        """The function d(x, t) = sum_k coords[k] * psi_k(x, t)."""
        coords = np.asarray(coords, dtype=float)

        def fn(x, t):
            out = np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
            for k, c in enumerate(coords):
                if c != 0.0:
                    out = out + c * self.evaluate(k, x, t)
            return out

        return fn

    def cell_averages(self, coords, x_edges, t_edges) -> np.ndarray:
        """Cell averages of the expansion over the tensor cells of the two
        partitions; shape (n_xcells, n_tcells).  Exact (cosine antiderivatives)."""
        coords = np.asarray(coords, dtype=float)
        if coords.size != self.size:
            raise ValueError(f"expected {self.size} coordinates, got {coords.size}")
        x_edges = np.asarray(x_edges, dtype=float)
        t_edges = np.asarray(t_edges, dtype=float)
        ifreq = np.array([i for i, _ in self.degrees])
        jfreq = np.array([j for _, j in self.degrees])
        ix = _cos_antideriv(ifreq, x_edges, self.ell)      # (K, nx)
        it = _cos_antideriv(jfreq, t_edges, self.T)        # (K, nt)
        weighted = (coords * self._scales())[:, None] * ix  # (K, nx)
        total = np.einsum("ki,kj->ij", weighted, it)
        area = np.outer(np.diff(x_edges), np.diff(t_edges))
        return total / area

    def project(self, fn, fn_x=None, fn_t=None, n_sub: int = 24, n_pts: int = 4,
                fd_step: float = 1e-6) -> np.ndarray:
        """Coordinates <d, psi_k> of a function under the Sobolev inner product.

        Derivatives of ``fn`` are taken by central differences unless closed
        forms are supplied.
        """
        xp, xw = interval_rule(0.0, self.ell, n_sub, n_pts)
        tp, tw = interval_rule(0.0, self.T, n_sub, n_pts)
        X, Tm = np.meshgrid(xp, tp, indexing="ij")
        W = np.outer(xw, tw)
        f = fn(X, Tm)
        if fn_x is not None:
            fx = fn_x(X, Tm)
        else:
            fx = (fn(X + fd_step, Tm) - fn(X - fd_step, Tm)) / (2 * fd_step)
        if fn_t is not None:
            ft = fn_t(X, Tm)
        else:
            ft = (fn(X, Tm + fd_step) - fn(X, Tm - fd_step)) / (2 * fd_step)
        coords = np.empty(self.size)
        for k in range(self.size):
            v, vx, vt = self.evaluate_with_derivatives(k, X, Tm)
            coords[k] = float(np.sum(W * (f * v + fx * vx + ft * vt)))
        return coords

    def gram_matrix(self, n_sub: int = 24, n_pts: int = 4) -> np.ndarray:
        """Numerical Gram matrix under the Sobolev inner product (identity check)."""
        xp, xw = interval_rule(0.0, self.ell, n_sub, n_pts)
        tp, tw = interval_rule(0.0, self.T, n_sub, n_pts)
        X, Tm = np.meshgrid(xp, tp, indexing="ij")
        W = np.outer(xw, tw)
        vals = [self.evaluate_with_derivatives(k, X, Tm) for k in range(self.size)]
        gram = np.empty((self.size, self.size))
        for a in range(self.size):
            va, vxa, vta = vals[a]
            for b in range(a, self.size):
                vb, vxb, vtb = vals[b]
                gram[a, b] = gram[b, a] = float(np.sum(W * (va * vb + vxa * vxb + vta * vtb)))
        return gram

    def uniform_bound(self) -> float:
        """Constant C with max_cell |avg of expansion| <= C * ||coords||_2.

        Each basis function is bounded by its scale factor, so Cauchy-Schwarz
        over the coordinate vector gives C = sqrt(sum_k scale_k^2).
        """
        return float(np.sqrt(np.sum(self._scales() ** 2)))
