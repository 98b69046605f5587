"""One-dimensional quadrature rules and polynomial bases.

Three families of 1-D functions are tabulated here:

* ``legendre``       L_0 .. L_K on [-1, 1]
* ``shen_interior``  eta_k = L_k - L_{k+2} on [-1, 1] (vanish at both ends)
* ``hermite_cubic``  the four cubic Hermite shapes on [0, 1]

Every table carries values, first and second derivatives computed from
recurrences or closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("legendre", "shen_interior", "hermite_cubic")

_NEWTON_TOL = 1e-15
_NEWTON_MAXIT = 100


@dataclass(frozen=True)
class QuadRule1D:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, fvals):
        return float(np.dot(self.weights, fvals))


@dataclass(frozen=True)
class Basis1DTable:
    kind: str
    max_index: int
    points: np.ndarray
    values: np.ndarray         # (max_index + 1, npts)
    first_derivs: np.ndarray
    second_derivs: np.ndarray

    def derivs(self, order):
        return (self.values, self.first_derivs, self.second_derivs)[order]


def legendre_all(n, x):
    """Values and first two derivatives of L_0..L_n at ``x``.

    Returns three arrays of shape (n + 1, len(x)).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    P = np.zeros((n + 1, x.size))
    dP = np.zeros_like(P)
    d2P = np.zeros_like(P)
    P[0] = 1.0
    if n >= 1:
        P[1] = x
        dP[1] = 1.0
    for k in range(1, n):
        # (k+1) L_{k+1} = (2k+1) x L_k - k L_{k-1}, differentiated termwise
        P[k + 1] = ((2 * k + 1) * x * P[k] - k * P[k - 1]) / (k + 1)
        dP[k + 1] = ((2 * k + 1) * (P[k] + x * dP[k]) - k * dP[k - 1]) / (k + 1)
        d2P[k + 1] = ((2 * k + 1) * (2 * dP[k] + x * d2P[k]) - k * d2P[k - 1]) / (k + 1)
    return P, dP, d2P


def gauss_legendre_rule(n: int) -> QuadRule1D:
    """n-point Gauss-Legendre rule on [-1, 1], exact for degree 2n - 1."""
    if int(n) != n or n < 1:
        raise ValueError(f"number of Gauss points must be a positive integer, got {n!r}")
    n = int(n)
    if n == 1:
        return QuadRule1D(np.array([0.0]), np.array([2.0]))
    k = np.arange(1, n + 1)
    x = -np.cos((4 * k - 1) * np.pi / (4 * n + 2))  # ascending Chebyshev-like guess
    for _ in range(_NEWTON_MAXIT):
        P, dP, _ = legendre_all(n, x)
        dx = P[n] / dP[n]
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    P, dP, _ = legendre_all(n, x)
    w = 2.0 / ((1.0 - x**2) * dP[n] ** 2)
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadRule1D(x, w)


def gauss_lobatto_points(n: int) -> np.ndarray:
    """The n + 1 Gauss-Lobatto-Legendre points (endpoints included)."""
    if n < 1:
        raise ValueError("Lobatto rule needs n >= 1")
    if n == 1:
        return np.array([-1.0, 1.0])
    # interior points are the roots of L_n'
    k = np.arange(1, n)
    x = -np.cos(np.pi * k / n)
    for _ in range(_NEWTON_MAXIT):
        _, dP, d2P = legendre_all(n, x)
        dx = dP[n] / d2P[n]
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    x = 0.5 * (x - x[::-1])
    return np.concatenate(([-1.0], x, [1.0]))


def map_rule(rule: QuadRule1D, a: float, b: float) -> QuadRule1D:
    if not a < b:
        raise ValueError(f"interval must satisfy a < b, got [{a}, {b}]")
    half = 0.5 * (b - a)
    return QuadRule1D(a + half * (rule.nodes + 1.0), half * rule.weights)


def _hermite(t):
    t = np.asarray(t, dtype=float)
    t2, t3 = t * t, t * t * t
    one = np.ones_like(t)
    # order: value@0, slope@0, value@1, slope@1
    vals = np.array([2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2])
    d1 = np.array([6 * t2 - 6 * t, 3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t])
    d2 = np.array([12 * t - 6 * one, 6 * t - 4 * one, -12 * t + 6 * one, 6 * t - 2 * one])
    return vals, d1, d2


def tabulate_basis_1d(kind: str, max_index: int, points) -> Basis1DTable:
    """Tabulate a 1-D basis (indices 0..max_index) at reference points.

    ``hermite_cubic`` always has the four shapes (value@0, slope@0, value@1,
    slope@1), so ``max_index`` must be 3 for that kind.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    tol = 1e-14
    if kind in ("legendre", "shen_interior"):
        if np.any(pts < -1 - tol) or np.any(pts > 1 + tol):
            raise ValueError(f"{kind} basis is defined on [-1, 1]")
        if max_index < 0:
            raise ValueError("max_index must be nonnegative")
        if kind == "legendre":
            P, dP, d2P = legendre_all(max_index, pts)
            return Basis1DTable(kind, max_index, pts, P, dP, d2P)
        P, dP, d2P = legendre_all(max_index + 2, pts)
        return Basis1DTable(kind, max_index, pts, P[:-2] - P[2:], dP[:-2] - dP[2:],
                            d2P[:-2] - d2P[2:])
    if kind == "hermite_cubic":
        if np.any(pts < -tol) or np.any(pts > 1 + tol):
            raise ValueError("hermite_cubic basis is defined on [0, 1]")
        if max_index != 3:
            raise ValueError("hermite_cubic has exactly four shapes (max_index=3)")
        v, d1, d2 = _hermite(pts)
        return Basis1DTable(kind, 3, pts, v, d1, d2)
    raise ValueError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
