"""Newton's method, epsilon continuation and the fixed-point correction map."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import assembly
from .function_space import transfer, with_boundary
from .linear_solver import SingularMatrixError, factor, solve

log = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    def __init__(self, message, iteration=None, linear=False):
        super().__init__(message)
        self.iteration = iteration
        self.linear = linear   # raised because a linear system could not be solved


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    max_iters: int = 50
    damping: str = "halving"   # or "none"
    max_halvings: int = 20
    quad_points: Optional[int] = None

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.damping not in ("none", "halving"):
            raise ValueError(f"unknown damping mode {self.damping!r}")


@dataclass
class SolveResult:
    coeffs: Optional[np.ndarray]
    iterations: int
    residual_history: list
    converged: bool
    min_hessian_eigenvalue: float = float("nan")
    linear_solves: int = 0
    space: object = None
    eps: float = float("nan")
    damped_steps: list = field(default_factory=list)
    message: str = ""
    linear_failure: bool = False

    @classmethod
    def from_failure(cls, exc, space, eps):
        return cls(None, exc.iteration or 0, [], False, space=space, eps=eps, message=str(exc),
                   linear_failure=exc.linear)


def _table(space, opts):
    return space.tabulate(opts.quad_points)


def _lift(p, space):
    return space.boundary_lift(p.g, p.g_grad)


def _step(u, space, d):
    out = u.copy()
    out[space.free_dofs] += d
    return out


def seed_solution(p, space, eps, opts=None, table=None):
    """Solve the problem with det(D2u) linearized about |x|^2/2 (cofactor = I).

    det(D2u) ~ tr(D2u) - (dim - 1) there, which makes the residual affine in u;
    one B-solve with the identity coefficient lands on its root.
    """
    opts = opts or SolverOptions()
    table = table or _table(space, opts)
    d = space.dim
    u0 = _lift(p, space)
    lap = sum(table.field(u0, assembly.hess_index(d, a, a)) for a in range(d))
    R = assembly.residual_from_det(table, p, eps, u0, lap - (d - 1))
    Phi = np.broadcast_to(np.eye(d), lap.shape + (d, d))
    B = assembly.assemble_B_with(table, eps, Phi)
    try:
        delta = solve(factor(B.matrix), R)
    except SingularMatrixError as exc:
        raise SolverFailure(f"seed solve failed: {exc}", 0, linear=True) from exc
    return _step(u0, space, delta)


def newton_solve(p, space, eps, initial, opts=None) -> SolveResult:
    """Damped Newton iteration on the Galerkin residual.

    Each step solves B(u) d = R(u) and updates u + d; at least one step is
    always taken.  Constrained DOFs of ``initial`` are never modified.
    """
    opts = opts or SolverOptions()
    table = _table(space, opts)
    u = np.array(initial, dtype=float)
    if u.shape != (space.dof_count,):
        raise ValueError("initial guess does not match the space")

    def resid(v):
        return assembly.assemble_residual(space, table, p, eps, v)

    r = resid(u)
    rn = float(np.max(np.abs(r))) if r.size else 0.0
    history = [rn]
    damped = []
    solves = 0
    converged = False
    it = 0
    message = ""
    for it in range(1, opts.max_iters + 1):
        B = assembly.assemble_B_form(space, table, eps, u)
        try:
            d = solve(factor(B.matrix), r)
        except SingularMatrixError as exc:
            raise SolverFailure(f"singular Newton matrix at iteration {it}: {exc}", it,
                                linear=True) from exc
        solves += 1
        lam = 1.0
        u_new = _step(u, space, d)
        r_new = resid(u_new)
        rn_new = float(np.max(np.abs(r_new))) if r_new.size else 0.0
        if opts.damping == "halving" and not rn_new <= rn and rn > opts.newton_tol:
            for _ in range(opts.max_halvings):
                lam *= 0.5
                u_try = _step(u, space, lam * d)
                r_try = resid(u_try)
                rn_try = float(np.max(np.abs(r_try)))
                if rn_try < rn:
                    u_new, r_new, rn_new = u_try, r_try, rn_try
                    break
            else:
                message = f"line search failed at iteration {it}"
                history.append(rn_new)
                damped.append(lam)
                break
        u, r, rn = u_new, r_new, rn_new
        history.append(rn)
        damped.append(lam)
        if not np.isfinite(rn):
            message = f"residual not finite at iteration {it}"
            break
        if rn <= opts.newton_tol:
            converged = True
            break
    else:
        message = f"no convergence in {opts.max_iters} iterations"
    if message:
        log.info("newton (%s, eps=%g): %s", space, eps, message)
    result = SolveResult(coeffs=u, iterations=it, residual_history=history,
                         converged=converged, linear_solves=solves, space=space, eps=eps,
                         damped_steps=damped, message=message)
    if np.all(np.isfinite(u)):
        result.min_hessian_eigenvalue = convexity_diagnostic(space, u, 10)[0]
    return result


def epsilon_cascade(p, space, eps_list, opts=None, initial=None) -> dict:
    """Solve for decreasing eps, warm-starting each stage from the previous one.

    ``space`` is a space or a callable eps -> space (resolution per eps).
    Returns an insertion-ordered dict eps -> SolveResult; once a stage fails
    the remaining entries are reported as skipped.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps list is empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or min(eps_list) <= 0:
        raise ValueError("eps list must be positive and strictly decreasing")
    opts = opts or SolverOptions()
    space_for: Callable = space if callable(space) else (lambda e: space)
    out = {}
    prev_space, prev = None, None
    failed_at = None
    for k, eps in enumerate(eps_list):
        sp_k = space_for(eps)
        if failed_at is not None:
            out[eps] = SolveResult(None, 0, [], False, space=sp_k, eps=eps,
                                   message=f"skipped: cascade aborted at eps={failed_at:g}")
            continue
        try:
            if k == 0:
                start = seed_solution(p, sp_k, eps, opts) if initial is None else initial
            else:
                warm = with_boundary(sp_k, transfer(prev_space, prev, sp_k), _lift(p, sp_k))
                start = _closer_start(p, sp_k, eps, opts, warm)
            res = newton_solve(p, sp_k, eps, start, opts)
        except SolverFailure as exc:
            res = SolveResult.from_failure(exc, sp_k, eps)
        out[eps] = res
        if res.converged:
            prev_space, prev = sp_k, res.coeffs
        else:
            failed_at = eps
    return out


def _closer_start(p, space, eps, opts, warm):
    """The warm start or the linearized seed, whichever has the smaller residual."""
    table = _table(space, opts)
    seed = seed_solution(p, space, eps, opts, table)

    def size(u):
        return float(np.max(np.abs(assembly.assemble_residual(space, table, p, eps, u))))

    return seed if size(seed) < size(warm) else warm


def fixed_point_step(space, table, eps, reference_u, w, p, mode="frozen", _fact=None):
    """The correction map T(w) = w - z with B z = -R(w).

    ``mode="frozen"`` builds B with the cofactor of ``reference_u``;
    ``mode="quasi"`` uses ``w`` itself (then T is exactly a Newton step).
    """
    if mode not in ("frozen", "quasi"):
        raise ValueError(f"unknown fixed-point mode {mode!r}")
    fact = _fact
    if fact is None:
        at = reference_u if mode == "frozen" else w
        B = assembly.assemble_B_form(space, table, eps, at)
        try:
            fact = factor(B.matrix)
        except SingularMatrixError as exc:
            raise SolverFailure(f"fixed-point operator is singular: {exc}", linear=True) from exc
    rhs = -assembly.assemble_residual(space, table, p, eps, w)
    z = solve(fact, rhs)
    return _step(w, space, -z)


def picard_iterate(p, space, eps, initial, reference_u=None, mode="frozen", tol=1e-12,
                   max_iters=200, opts=None) -> SolveResult:
    """Iterate T until successive iterates agree to ``tol`` (max coefficient change)."""
    opts = opts or SolverOptions()
    table = _table(space, opts)
    w = np.array(initial, dtype=float)
    ref = w if reference_u is None else reference_u
    fact = None
    if mode == "frozen":
        try:
            fact = factor(assembly.assemble_B_form(space, table, eps, ref).matrix)
        except SingularMatrixError as exc:
            raise SolverFailure(f"fixed-point operator is singular: {exc}", linear=True) from exc
    history = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        w_new = fixed_point_step(space, table, eps, ref, w, p, mode=mode, _fact=fact)
        change = float(np.max(np.abs(w_new - w)))
        history.append(change)
        w = w_new
        if not np.isfinite(change):
            break
        if change <= tol:
            converged = True
            break
    return SolveResult(w, it, history, converged, linear_solves=it, space=space, eps=eps)


def _sample_grid(domain, m):
    axes = [lo + (hi - lo) * np.arange(1, m + 1) / (m + 1)
            for lo, hi in zip(domain.lower, domain.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)


def min_eigenvalues(H):
    """Smallest eigenvalue of each symmetric matrix in a stack (..., d, d)."""
    H = np.asarray(H, dtype=float)
    if H.shape[-1] == 2:
        a, b, c = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
        return 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)
    return np.linalg.eigvalsh(H)[..., 0]


def convexity_diagnostic(space, coeffs, m=10, points=None):
    """(min eigenvalue of the discrete Hessian, where) over an m^dim interior grid."""
    if m < 2 and points is None:
        raise ValueError("need m >= 2 samples per direction")
    pts = _sample_grid(space.domain, m) if points is None else np.atleast_2d(points)
    _, _, H = space.evaluate(coeffs, pts)
    lam = min_eigenvalues(H)
    k = int(np.argmin(lam))
    return float(lam[k]), pts[k]


def with_options(opts, **kw):
    return replace(opts or SolverOptions(), **kw)
