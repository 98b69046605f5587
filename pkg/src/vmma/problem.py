"""Problem data for  -eps*Bilap(u) + det(D^2 u) = f,  u = g and Lap(u) = q on the boundary.

All callables take an (npts, dim) array of points.  ``f`` and ``q`` also take
``eps``.  Exact-solution callables return values (npts,), gradients
(npts, dim), Hessians (npts, dim, dim) and bilaplacians (npts,).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .function_space import BoxDomain

LIMIT = "solves_limit_problem"
REGULARIZED = "solves_regularized_problem"
NONE = "none"

BUILTIN_IDS = ("test1a", "test1b", "test2a", "test2b", "test3a", "test3b")


class ProblemStateError(RuntimeError):
    """Operation needs data the problem does not carry."""


@dataclass(frozen=True)
class ExactSolution:
    u: Callable
    grad: Callable
    hess: Callable
    bilap: Optional[Callable] = None


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    domain: BoxDomain
    f: Callable
    g: Callable
    g_grad: Callable
    q: Optional[Callable] = None   # None means Lap(u) = eps on the boundary
    exact: Optional[ExactSolution] = None
    exact_kind: str = NONE

    @property
    def dim(self):
        return self.domain.dim

    def boundary_laplacian(self, eps):
        """The boundary Laplacian data as a callable of points."""
        if self.q is None:
            return lambda x: np.full(len(np.atleast_2d(x)), float(eps))
        return lambda x: self.q(x, eps)


def _xy(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x[:, 0], x[:, 1]


def _diag_hess(hxx, hyy, hxy=None):
    out = np.zeros(hxx.shape + (2, 2))
    out[:, 0, 0] = hxx
    out[:, 1, 1] = hyy
    if hxy is not None:
        out[:, 0, 1] = out[:, 1, 0] = hxy
    return out


# u = exp((x^2 + y^2)/2)

def _exp_u(x):
    X, Y = _xy(x)
    return np.exp((X**2 + Y**2) / 2)


def _exp_grad(x):
    X, Y = _xy(x)
    e = np.exp((X**2 + Y**2) / 2)
    return np.stack([X * e, Y * e], axis=-1)


def _exp_hess(x):
    X, Y = _xy(x)
    e = np.exp((X**2 + Y**2) / 2)
    return _diag_hess((1 + X**2) * e, (1 + Y**2) * e, X * Y * e)


def _exp_bilap(x):
    X, Y = _xy(x)
    r2 = X**2 + Y**2
    return (r2**2 + 8 * r2 + 8) * np.exp(r2 / 2)


EXP_SOLUTION = ExactSolution(_exp_u, _exp_grad, _exp_hess, _exp_bilap)


# u = x^4 + y^2

QUARTIC_SOLUTION = ExactSolution(
    u=lambda x: _xy(x)[0] ** 4 + _xy(x)[1] ** 2,
    grad=lambda x: np.stack([4 * _xy(x)[0] ** 3, 2 * _xy(x)[1]], axis=-1),
    hess=lambda x: _diag_hess(12 * _xy(x)[0] ** 2, np.full_like(_xy(x)[1], 2.0)),
    bilap=lambda x: np.full(len(_xy(x)[0]), 24.0),
)


# u = 20 x^6 + y^6

SEXTIC_SOLUTION = ExactSolution(
    u=lambda x: 20 * _xy(x)[0] ** 6 + _xy(x)[1] ** 6,
    grad=lambda x: np.stack([120 * _xy(x)[0] ** 5, 6 * _xy(x)[1] ** 5], axis=-1),
    hess=lambda x: _diag_hess(600 * _xy(x)[0] ** 4, 30 * _xy(x)[1] ** 4),
    bilap=lambda x: 7200 * _xy(x)[0] ** 2 + 360 * _xy(x)[1] ** 2,
)


# u = x sin x + y sin y

def _xsin_second(t):
    return 2 * np.cos(t) - t * np.sin(t)


XSIN_SOLUTION = ExactSolution(
    u=lambda x: _xy(x)[0] * np.sin(_xy(x)[0]) + _xy(x)[1] * np.sin(_xy(x)[1]),
    grad=lambda x: np.stack([np.sin(t) + t * np.cos(t) for t in _xy(x)], axis=-1),
    hess=lambda x: _diag_hess(*[_xsin_second(t) for t in _xy(x)]),
    bilap=lambda x: sum(t * np.sin(t) - 4 * np.cos(t) for t in _xy(x)),
)


def _limit_problem(pid, sol, f):
    return ProblemSpec(id=pid, domain=BoxDomain.unit(2), f=f, g=sol.u, g_grad=sol.grad,
                       q=None, exact=sol, exact_kind=LIMIT)


def _test1a():
    def f(x, eps):
        X, Y = _xy(x)
        r2 = X**2 + Y**2
        return (1 + r2) * np.exp(r2)
    return _limit_problem("test1a", EXP_SOLUTION, f)


def _quartic_limit(pid):
    return _limit_problem(pid, QUARTIC_SOLUTION, lambda x, eps: 24 * _xy(x)[0] ** 2)


def _test2a():
    def f(x, eps):
        X, Y = _xy(x)
        return 18000 * X**4 * Y**4 - eps * (7200 * X**2 + 360 * Y**2)

    def q(x, eps):
        X, Y = _xy(x)
        return 600 * X**4 + 30 * Y**4

    return ProblemSpec("test2a", BoxDomain.unit(2), f, SEXTIC_SOLUTION.u, SEXTIC_SOLUTION.grad,
                       q=q, exact=SEXTIC_SOLUTION, exact_kind=REGULARIZED)


def _test2b():
    def f(x, eps):
        X, Y = _xy(x)
        return (_xsin_second(X) * _xsin_second(Y)
                - eps * (X * np.sin(X) - 4 * np.cos(X) + Y * np.sin(Y) - 4 * np.cos(Y)))

    def q(x, eps):
        X, Y = _xy(x)
        return _xsin_second(X) + _xsin_second(Y)

    return ProblemSpec("test2b", BoxDomain.unit(2), f, XSIN_SOLUTION.u, XSIN_SOLUTION.grad,
                       q=q, exact=XSIN_SOLUTION, exact_kind=REGULARIZED)


def _test3b():
    return _limit_problem("test3b", SEXTIC_SOLUTION,
                          lambda x, eps: 18000 * _xy(x)[0] ** 4 * _xy(x)[1] ** 4)


_BUILDERS = {
    "test1a": _test1a,
    "test1b": lambda: _quartic_limit("test1b"),
    "test2a": _test2a,
    "test2b": _test2b,
    "test3a": lambda: _quartic_limit("test3a"),
    "test3b": _test3b,
}


def builtin_problem(pid: str) -> ProblemSpec:
    try:
        return _BUILDERS[pid]()
    except KeyError:
        raise ValueError(f"unknown problem id {pid!r}; expected one of {BUILTIN_IDS}") from None


def quadratic_problem(dim=2) -> ProblemSpec:
    """u = |x|^2/2 solves the regularized problem exactly: f = 1, q = dim."""
    def u(x):
        x = np.atleast_2d(x)
        return 0.5 * np.sum(x**2, axis=1)

    def grad(x):
        return np.atleast_2d(np.asarray(x, dtype=float)).copy()

    def hess(x):
        return np.broadcast_to(np.eye(dim), (len(np.atleast_2d(x)), dim, dim)).copy()

    def bilap(x):
        return np.zeros(len(np.atleast_2d(x)))

    sol = ExactSolution(u, grad, hess, bilap)
    return ProblemSpec(
        id="quadratic", domain=BoxDomain.unit(dim),
        f=lambda x, eps: np.ones(len(np.atleast_2d(x))),
        g=u, g_grad=grad, q=lambda x, eps: np.full(len(np.atleast_2d(x)), float(dim)),
        exact=sol, exact_kind=REGULARIZED)


def verify_manufactured(p: ProblemSpec, eps: float, samples) -> float:
    """max |-eps*Bilap(u) + det(D^2 u) - f| over the sample points."""
    if p.exact is None or p.exact.bilap is None:
        raise ProblemStateError(f"problem {p.id!r} carries no exact solution with fourth derivatives")
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    res = -eps * p.exact.bilap(x) + np.linalg.det(p.exact.hess(x)) - p.f(x, eps)
    return float(np.max(np.abs(res)))
