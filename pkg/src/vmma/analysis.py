"""Error norms, power-law fits and the convergence-study drivers."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .function_space import build_space
from .nonlinear_solver import (SolveResult, SolverFailure, SolverOptions, epsilon_cascade,
                               newton_solve, seed_solution)

STUDY_KINDS = ("test1", "test2", "test3")
NORM_CONVENTION = "full norms; H2 part uses the Frobenius norm of the Hessian (mixed term counted twice)"


@dataclass
class ConvergenceRecord:
    study: str
    problem: str
    disc: str
    eps: float
    h: float
    N: str
    dofs: int
    newton_iters: int
    converged: bool
    err_L2: float
    err_H1: float
    err_H2: float
    min_hessian_eig: float
    wall_time: float
    h2_norm: float = float("nan")
    status: str = "ok"            # ok | not_converged | linear_failure | skipped
    solution: object = field(default=None, repr=False, compare=False)   # (space, coeffs)

    @property
    def ratio_L2_eps(self):
        return self.err_L2 / self.eps

    @property
    def ratio_H1_sqrteps(self):
        return self.err_H1 / math.sqrt(self.eps)

    @property
    def ratio_H2_qrteps(self):
        return self.err_H2 / self.eps ** 0.25


@dataclass(frozen=True)
class RateFit:
    alpha: float
    beta: float
    residual: float
    mode: str

    def __call__(self, x):
        return self.beta * np.asarray(x, dtype=float) ** self.alpha


def _norm_table(space, quad_points):
    return space.tabulate(quad_points or space.default_quad_points() + 4)


def _sobolev(table, vals, grads, hessians):
    """Squared L2, H1-seminorm and H2-seminorm pieces from fields on the quadrature grid."""
    w = table.weights
    d = table.dim
    l2 = np.sum(w * vals**2)
    h1 = sum(np.sum(w * grads[a] ** 2) for a in range(d))
    h2 = sum(np.sum(w * hessians[a][b] ** 2) for a in range(d) for b in range(d))
    return l2, h1, h2


def error_norms(space, coeffs, exact, quad_points=None):
    """Full L2, H1 and H2 norms of (u_h - u_exact)."""
    table = _norm_table(space, quad_points)
    d = space.dim
    pts = table.points.reshape(-1, d)
    shape = table.weights.shape
    u, grad, hess = table.field_derivs(coeffs)
    eu = u - exact.u(pts).reshape(shape)
    G = np.asarray(exact.grad(pts))
    H = np.asarray(exact.hess(pts))
    eg = [grad[a] - G[:, a].reshape(shape) for a in range(d)]
    eh = [[hess[a, b] - H[:, a, b].reshape(shape) for b in range(d)] for a in range(d)]
    l2, s1, s2 = _sobolev(table, eu, eg, eh)
    return math.sqrt(l2), math.sqrt(l2 + s1), math.sqrt(l2 + s1 + s2)


def field_norms(space, coeffs, quad_points=None):
    """Full L2, H1, H2 norms of the discrete field itself."""
    table = _norm_table(space, quad_points)
    u, grad, hess = table.field_derivs(coeffs)
    l2, s1, s2 = _sobolev(table, u, grad, hess)
    return math.sqrt(l2), math.sqrt(l2 + s1), math.sqrt(l2 + s1 + s2)


def rate_fit(pairs, mode="free", alpha=None) -> RateFit:
    """Least-squares fit of y = beta * x**alpha in log-log coordinates."""
    pairs = [(float(x), float(y)) for x, y in pairs]
    if not pairs:
        raise ValueError("no data to fit")
    if any(x <= 0 or y <= 0 or not math.isfinite(x) or not math.isfinite(y) for x, y in pairs):
        raise ValueError("power-law fits need positive finite data")
    lx = np.log([x for x, _ in pairs])
    ly = np.log([y for _, y in pairs])
    if mode == "fixed_alpha":
        if alpha is None:
            raise ValueError("fixed_alpha mode needs alpha")
        a = float(alpha)
        logb = float(np.mean(ly - a * lx))
    elif mode == "free":
        if len(pairs) < 2 or np.ptp(lx) == 0:
            raise ValueError("free fit needs at least two distinct x values")
        a, logb = np.polyfit(lx, ly, 1)
        a, logb = float(a), float(logb)
    else:
        raise ValueError(f"unknown fit mode {mode!r}")
    res = ly - (logb + a * lx)
    return RateFit(a, math.exp(logb), float(np.sqrt(np.mean(res**2))), mode)


def observed_rates(hs, errs):
    """log2-style pairwise rates log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    return [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1])
            for i in range(len(hs) - 1)]


def converged_spectral_order(eps):
    return min(48, max(16, math.ceil(4.0 / math.sqrt(eps))))


def coupled_order(disc, eps, gamma):
    h = eps ** gamma
    n = max(1, int(round(1.0 / h)))
    return max(2, n) if disc == "spectral" else n


def _record(study, p, space, eps, res, wall):
    nan = float("nan")
    if res.coeffs is not None and res.converged:
        l2, h1, h2 = error_norms(space, res.coeffs, p.exact)
        norm_h2 = field_norms(space, res.coeffs)[2]
    else:
        l2 = h1 = h2 = norm_h2 = nan
    if res.converged:
        status = "ok"
    elif res.linear_failure:
        status = "linear_failure"
    elif res.message.startswith("skipped"):
        status = "skipped"
    else:
        status = "not_converged"
    solution = (space, res.coeffs) if res.converged else None
    return ConvergenceRecord(
        study=study, problem=p.id, disc=space.kind, eps=float(eps), h=float(space.h),
        N=space.order_token, dofs=int(space.dof_count), newton_iters=int(res.iterations),
        converged=bool(res.converged), err_L2=l2, err_H1=h1, err_H2=h2,
        min_hessian_eig=float(res.min_hessian_eigenvalue), wall_time=wall, h2_norm=norm_h2,
        status=status, solution=solution)


def _space(disc, p, order):
    return build_space(disc, p.domain, order)


def run_study(kind, p, disc, orders=None, eps=None, gamma=None, opts=None,
              progress=None) -> list:
    """Run one of the three study types and return records in plan order.

    test1  eps list (decreasing) at one resolution; ``orders=None`` picks the
           converged spectral resolution per eps.
    test2  one eps, list of resolutions (N values or mesh counts).
    test3  eps list with resolution h = eps**gamma, gamma in {1, 1/2}.
    """
    if kind not in STUDY_KINDS:
        raise ValueError(f"unknown study kind {kind!r}")
    if p.exact is None:
        raise ValueError(f"problem {p.id!r} has no exact solution to measure against")
    opts = opts or SolverOptions()
    eps_list = [float(e) for e in np.atleast_1d(eps)] if eps is not None else []
    if not eps_list or min(eps_list) <= 0:
        raise ValueError("eps plan must be a nonempty list of positive values")
    if gamma is not None and kind != "test3":
        raise ValueError("a coupling exponent is only meaningful for test3")
    order_list = list(np.atleast_1d(orders)) if orders is not None else []
    order_list = [int(o) if np.ndim(o) == 0 else tuple(o) for o in order_list]

    if kind == "test2":
        if len(eps_list) != 1:
            raise ValueError("test2 uses a single eps")
        if not order_list:
            raise ValueError("test2 needs a list of resolutions")
        return _run_test2(p, disc, order_list, eps_list[0], opts, progress)

    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps plan must be strictly decreasing")
    if kind == "test1":
        if len(order_list) > 1:
            raise ValueError("test1 uses one fixed resolution")
        if order_list:
            fixed = _space(disc, p, order_list[0])
            space_for = lambda e: fixed  # noqa: E731
        elif disc == "spectral":
            cache = {}
            space_for = lambda e: cache.setdefault(  # noqa: E731
                converged_spectral_order(e), _space(disc, p, converged_spectral_order(e)))
        else:
            raise ValueError("test1 with hermite_fem needs an explicit mesh")
    else:
        if gamma not in (1, 1.0, 0.5):
            raise ValueError("test3 needs a coupling exponent gamma in {1, 0.5}")
        if order_list:
            raise ValueError("test3 derives resolutions from gamma; do not pass orders")
        space_for = lambda e: _space(disc, p, coupled_order(disc, e, gamma))  # noqa: E731

    results = _timed_cascade(p, space_for, eps_list, opts)
    records = []
    for e in eps_list:
        res, wall = results[e]
        rec = _record(kind, p, res.space, e, res, wall)
        records.append(rec)
        if progress:
            progress(rec)
    return records


def _timed_cascade(p, space_for, eps_list, opts):
    """epsilon_cascade, with per-stage wall time attributed from stage timestamps."""
    stamps = []

    def timed_space(e):
        stamps.append(time.perf_counter())
        return space_for(e)

    out = epsilon_cascade(p, timed_space, eps_list, opts)
    stamps.append(time.perf_counter())
    return {e: (res, stamps[i + 1] - stamps[i]) for i, (e, res) in enumerate(out.items())}


def continuation_ladder(eps, start=1.0, factor=10.0 ** 0.5):
    """Geometric eps ladder from ``start`` down to (and ending at) ``eps``."""
    ladder = []
    e = start
    while e > eps * factor ** 0.5:
        ladder.append(e)
        e /= factor
    return ladder + [float(eps)]


def _solve_single(p, space, eps, opts):
    """Seed plus Newton; if that misses, walk eps down a continuation ladder."""
    try:
        res = newton_solve(p, space, eps, seed_solution(p, space, eps, opts), opts)
        if res.converged and res.min_hessian_eigenvalue > 0:
            return res
    except SolverFailure:
        pass
    # intermediate stages are only warm starts; a looser tolerance avoids
    # stalling on round-off where eps is large and the mesh fine
    ladder = continuation_ladder(eps)
    loose = replace(opts, newton_tol=max(opts.newton_tol, 1e-8))
    res = None
    start = None
    for e in ladder:
        if start is None:
            try:
                start = seed_solution(p, space, e, opts)
            except SolverFailure as exc:
                return SolveResult.from_failure(exc, space, eps)
        try:
            res = newton_solve(p, space, e, start, opts if e == ladder[-1] else loose)
        except SolverFailure as exc:
            return SolveResult.from_failure(exc, space, eps)
        if not res.converged:
            break
        start = res.coeffs
    return res


def _run_test2(p, disc, orders, eps, opts, progress):
    records = []
    for order in orders:
        space = _space(disc, p, order)
        t0 = time.perf_counter()
        res = _solve_single(p, space, eps, opts)
        rec = _record("test2", p, space, eps, res, time.perf_counter() - t0)
        records.append(rec)
        if progress:
            progress(rec)
    return records


def record_fields():
    return [f.name for f in fields(ConvergenceRecord)]


__all__ = ["ConvergenceRecord", "RateFit", "error_norms", "field_norms", "rate_fit",
           "observed_rates", "run_study", "converged_spectral_order", "coupled_order",
           "NORM_CONVENTION", "continuation_ladder"]
