"""C1-conforming discrete spaces on box domains.

Two discretizations share one interface:

``SpectralSpace``
    Tensor products of the 1-D basis ``[eta_0, ..., eta_{N-2}, phi_lo, phi_hi]``
    where ``eta_k = L_k - L_{k+2}`` vanish at both ends and
    ``phi_lo = (1 - xi)/2``, ``phi_hi = (1 + xi)/2`` carry boundary values.
    The span is Q_N (degree <= N in each variable).  DOFs are numbered
    lexicographically (C order, first axis slowest) over the 1-D indices;
    free DOFs are those whose every 1-D index is a Shen index.

``HermiteSpace``
    Bicubic Hermite (Bogner-Fox-Schmit) rectangles on a uniform
    ``nx x ny`` mesh.  Nodes are numbered ``j * (nx + 1) + i``; each node
    carries ``[u, u_x, u_y, u_xy]`` in that order (node-major).

Coefficient vectors are plain float arrays of length ``space.dof_count``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from string import ascii_lowercase

import numpy as np
import scipy.sparse as sp

from .quadrature import gauss_legendre_rule, gauss_lobatto_points, map_rule, tabulate_basis_1d

SOLUTION_MAGIC = "vmma-solution 1"


@dataclass(frozen=True)
class BoxDomain:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise ValueError("box domain must be 2-D or 3-D with matching bounds")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} x {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim=2):
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, pts, tol=1e-12):
        pts = np.atleast_2d(pts)
        lo, hi = np.array(self.lower), np.array(self.upper)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)

    def boundary_samples(self, n=101):
        """``n`` equispaced points along every edge (2-D) or an n x n grid on every face (3-D)."""
        t = np.linspace(0.0, 1.0, n)
        out = []
        for ax in range(self.dim):
            others = [a for a in range(self.dim) if a != ax]
            grids = np.meshgrid(*[self.lower[a] + t * (self.upper[a] - self.lower[a])
                                  for a in others], indexing="ij")
            for side in (self.lower[ax], self.upper[ax]):
                pts = np.empty(grids[0].shape + (self.dim,))
                pts[..., ax] = side
                for a, gr in zip(others, grids):
                    pts[..., a] = gr
                out.append(pts.reshape(-1, self.dim))
        return np.concatenate(out)


def grad_index(dim, a):
    alpha = [0] * dim
    alpha[a] += 1
    return tuple(alpha)


def hess_index(dim, a, b):
    alpha = [0] * dim
    alpha[a] += 1
    alpha[b] += 1
    return tuple(alpha)


def _check_coeffs(space, coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.dof_count,):
        raise ValueError(f"coefficient vector has shape {coeffs.shape}, "
                         f"space expects ({space.dof_count},)")
    return coeffs


# --------------------------------------------------------------------------
# spectral


class SpectralSpace:
    kind = "spectral"

    def __init__(self, domain: BoxDomain, N: int):
        if int(N) != N or N < 2:
            raise ValueError(f"spectral degree must be an integer >= 2, got {N!r}")
        self.domain = domain
        self.N = int(N)
        self.dim = domain.dim
        self.n1d = self.N + 1
        self.nfree1d = self.N - 1
        self.dof_count = self.n1d ** self.dim
        idx = np.indices((self.n1d,) * self.dim).reshape(self.dim, -1)
        free = np.all(idx < self.nfree1d, axis=0)
        self.free_dofs = np.flatnonzero(free)
        self.constrained_dofs = np.flatnonzero(~free)
        self.h = 1.0 / self.N
        self._lobatto = gauss_lobatto_points(self.N)
        V = self._ref_basis(self._lobatto)[0].T  # V[p, k] = psi_k(xi_p)
        self._interp_inv = np.linalg.inv(V)

    @property
    def order(self):
        return self.N

    @property
    def order_token(self):
        return str(self.N)

    def default_quad_points(self):
        return math.ceil((self.dim + 1) * self.N / 2) + 2

    def _ref_basis(self, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        shen = tabulate_basis_1d("shen_interior", self.N - 2, xi)
        lo = np.stack([(1 - xi) / 2, np.full_like(xi, -0.5), np.zeros_like(xi)])
        hi = np.stack([(1 + xi) / 2, np.full_like(xi, 0.5), np.zeros_like(xi)])
        return [np.vstack([shen.derivs(o), lo[o], hi[o]]) for o in range(3)]

    def to_reference(self, ax, x):
        a, b = self.domain.lower[ax], self.domain.upper[ax]
        return 2.0 * (np.asarray(x, dtype=float) - a) / (b - a) - 1.0

    def basis_1d(self, ax, xi):
        """Physical-coordinate tables [values, d/dx, d2/dx2], each (n1d, len(xi))."""
        s = 2.0 / (self.domain.upper[ax] - self.domain.lower[ax])
        t0, t1, t2 = self._ref_basis(xi)
        return [t0, s * t1, s * s * t2]

    def tabulate(self, quad_points_per_direction=None):
        return SpectralTable(self, quad_points_per_direction or self.default_quad_points())

    def evaluate(self, coeffs, points):
        coeffs = _check_coeffs(self, coeffs)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.all(self.domain.contains(pts)):
            raise ValueError("evaluation point outside the domain")
        d = self.dim
        tabs = [self.basis_1d(ax, np.clip(self.to_reference(ax, pts[:, ax]), -1, 1))
                for ax in range(d)]
        c = coeffs.reshape((self.n1d,) * d)
        sub = ",".join(f"{ascii_lowercase[ax]}p" for ax in range(d))
        expr = ascii_lowercase[:d] + "," + sub + "->p"

        def apply(alpha):
            return np.einsum(expr, c, *[tabs[ax][alpha[ax]] for ax in range(d)])

        val = apply((0,) * d)
        grad = np.stack([apply(grad_index(d, a)) for a in range(d)], axis=-1)
        hess = np.empty((len(pts), d, d))
        for a in range(d):
            for b in range(a, d):
                hess[:, a, b] = hess[:, b, a] = apply(hess_index(d, a, b))
        return val, grad, hess

    def _coeffs_from_grid(self, G):
        """Coefficients of the Q_N interpolant of values on the Lobatto grid."""
        c = G
        for _ in range(G.ndim):
            c = np.tensordot(c, self._interp_inv, axes=([0], [1]))
        return c

    def interpolate(self, u, grad=None, hess=None):
        """Q_N interpolant at the tensor Gauss-Lobatto grid (exact on Q_N)."""
        d = self.dim
        grids = [self.domain.lower[ax] + (self._lobatto + 1) / 2
                 * (self.domain.upper[ax] - self.domain.lower[ax]) for ax in range(d)]
        mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)
        G = np.asarray(u(mesh.reshape(-1, d)), dtype=float).reshape((self.n1d,) * d)
        return self._coeffs_from_grid(G).ravel()

    def boundary_lift(self, g, grad_g=None):
        """Polynomial lift of g: per-face Lobatto interpolation, blended transfinitely.

        Each face's interpolant fixes the coefficients whose index along the
        face normal is a boundary index; shared edges receive identical values
        from both faces, so the assembly is the transfinite blend.
        """
        d = self.dim
        c = np.zeros((self.n1d,) * d)
        for ax in range(d):
            others = [a for a in range(d) if a != ax]
            grids = [self.domain.lower[a] + (self._lobatto + 1) / 2
                     * (self.domain.upper[a] - self.domain.lower[a]) for a in others]
            mesh = np.meshgrid(*grids, indexing="ij")
            for side, idx in ((self.domain.lower[ax], self.N - 1),
                              (self.domain.upper[ax], self.N)):
                pts = np.empty(mesh[0].shape + (d,))
                pts[..., ax] = side
                for a, m in zip(others, mesh):
                    pts[..., a] = m
                G = np.asarray(g(pts.reshape(-1, d)), dtype=float).reshape(mesh[0].shape)
                face = self._coeffs_from_grid(G)
                sl = [slice(None)] * d
                sl[ax] = idx
                c[tuple(sl)] = face
        return c.ravel()

    def same_family(self, other):
        return isinstance(other, SpectralSpace) and other.domain == self.domain

    def embed(self, coeffs, other):
        """Re-express a field of this space in ``other`` (same domain).

        Shen indices are shared between degrees, so raising N is exact;
        lowering N truncates the Shen expansion.
        """
        coeffs = _check_coeffs(self, coeffs)
        d = self.dim
        src = coeffs.reshape((self.n1d,) * d)
        m = min(self.nfree1d, other.nfree1d)
        idx_src = list(range(m)) + [self.N - 1, self.N]
        idx_dst = list(range(m)) + [other.N - 1, other.N]
        out = np.zeros((other.n1d,) * d)
        out[np.ix_(*[idx_dst] * d)] = src[np.ix_(*[idx_src] * d)]
        return out.ravel()

    def __repr__(self):
        return f"SpectralSpace(dim={self.dim}, N={self.N}, dofs={self.dof_count})"


class SpectralTable:
    """Tensor-product Gauss tables for a spectral space.

    Everything is kept in factored form (one 1-D table per axis), and all
    contractions are done by sum factorization, which keeps N ~ 50 in 2-D
    cheap in both memory and time.
    """

    def __init__(self, space: SpectralSpace, nq: int):
        if nq < 2:
            raise ValueError("need at least 2 quadrature points per direction")
        self.space = space
        self.nq = int(nq)
        d = space.dim
        ref = gauss_legendre_rule(self.nq)
        self.rules = [map_rule(ref, space.domain.lower[ax], space.domain.upper[ax])
                      for ax in range(d)]
        self.tabs = [space.basis_1d(ax, ref.nodes) for ax in range(d)]
        w = self.rules[0].weights
        for r in self.rules[1:]:
            w = np.multiply.outer(w, r.weights)
        self.weights = w
        self.points = np.stack(np.meshgrid(*[r.nodes for r in self.rules], indexing="ij"),
                               axis=-1)
        self.nfree = len(space.free_dofs)

    @property
    def dim(self):
        return self.space.dim

    def field(self, coeffs, alpha):
        """D^alpha u at all quadrature points, shape (nq,)*dim."""
        coeffs = _check_coeffs(self.space, coeffs)
        d = self.dim
        r = coeffs.reshape((self.space.n1d,) * d)
        for ax in range(d):
            r = np.tensordot(r, self.tabs[ax][alpha[ax]], axes=([0], [0]))
        return r

    def field_derivs(self, coeffs):
        d = self.dim
        u = self.field(coeffs, (0,) * d)
        grad = np.stack([self.field(coeffs, grad_index(d, a)) for a in range(d)])
        hess = np.empty((d, d) + u.shape)
        for a in range(d):
            for b in range(a, d):
                hess[a, b] = hess[b, a] = self.field(coeffs, hess_index(d, a, b))
        return u, grad, hess

    def _free_tab(self, ax, order):
        return self.tabs[ax][order][: self.space.nfree1d]

    def linear_form(self, terms):
        """sum_q w * sum_terms s(q) D^alpha v(q) for each free v.

        ``terms`` is an iterable of ``(alpha, s)`` with ``s`` on the quadrature grid.
        """
        out = 0.0
        for alpha, s in terms:
            r = np.asarray(s) * self.weights
            for ax in range(self.dim):
                r = np.tensordot(r, self._free_tab(ax, alpha[ax]), axes=([0], [1]))
            out = out + r
        return np.ravel(out)

    def bilinear_form(self, terms):
        """Dense matrix M[v, w] = sum_q w * sum_terms c(q) D^a v D^b w over free DOFs.

        ``terms`` is an iterable of ``(c, alpha_test, alpha_trial)``.
        """
        d, n = self.dim, self.space.nfree1d
        out = np.zeros((n,) * (2 * d))
        for c, a_test, a_trial in terms:
            r = np.asarray(c) * self.weights
            for ax in range(d):
                A = self._free_tab(ax, a_test[ax])
                B = self._free_tab(ax, a_trial[ax])
                P = (A[:, None, :] * B[None, :, :]).reshape(n * n, -1)
                r = np.tensordot(r, P, axes=([0], [1]))
            out += r.reshape((n,) * (2 * d))
        # (i0, k0, i1, k1, ...) -> (i0, i1, ..., k0, k1, ...)
        perm = [2 * ax for ax in range(d)] + [2 * ax + 1 for ax in range(d)]
        return out.transpose(perm).reshape(self.nfree, self.nfree)

    def boundary_normal_form(self, qfun):
        """sum over faces of  int_face q * dv/dnu ds  for each free v."""
        sp_ = self.space
        d = self.dim
        out = np.zeros(self.nfree)
        for ax in range(d):
            others = [a for a in range(d) if a != ax]
            for xi, sign in ((-1.0, -1.0), (1.0, 1.0)):
                side = sp_.domain.lower[ax] if xi < 0 else sp_.domain.upper[ax]
                mesh = np.meshgrid(*[self.rules[a].nodes for a in others], indexing="ij")
                pts = np.empty(mesh[0].shape + (d,))
                pts[..., ax] = side
                for a, m in zip(others, mesh):
                    pts[..., a] = m
                w = np.ones(())
                for a in others:
                    w = np.multiply.outer(w, self.rules[a].weights)
                qv = np.asarray(qfun(pts.reshape(-1, d)), dtype=float).reshape(mesh[0].shape)
                # insert the normal axis as a singleton quadrature axis
                r = np.expand_dims(qv * w, ax)
                normal_tab = sign * sp_.basis_1d(ax, [xi])[1][: sp_.nfree1d]
                for a in range(d):
                    T = normal_tab if a == ax else self._free_tab(a, 0)
                    r = np.tensordot(r, T, axes=([0], [1]))
                out += r.ravel()
        return out

    def dense(self):
        """Explicit per-basis-function tables (all DOFs x flattened quadrature points)."""
        d = self.dim
        sp_ = self.space
        n = sp_.n1d
        nqt = self.weights.size
        letters = ascii_lowercase[:d]
        qletters = ascii_lowercase[d:2 * d]
        expr = ",".join(f"{letters[a]}{qletters[a]}" for a in range(d)) + "->" + letters + qletters

        def full(alpha):
            return np.einsum(expr, *[self.tabs[a][alpha[a]] for a in range(d)]).reshape(n ** d, nqt)

        values = full((0,) * d)
        grads = np.stack([full(grad_index(d, a)) for a in range(d)], axis=-1)
        hess = np.empty((n ** d, nqt, d, d))
        for a in range(d):
            for b in range(a, d):
                hess[..., a, b] = hess[..., b, a] = full(hess_index(d, a, b))
        return {"values": values, "gradients": grads, "hessians": hess,
                "laplacians": np.trace(hess, axis1=2, axis2=3),
                "weights": self.weights.ravel(), "points": self.points.reshape(-1, d)}


# --------------------------------------------------------------------------
# bicubic Hermite


class HermiteSpace:
    kind = "hermite_fem"
    DOF_NAMES = ("u", "u_x", "u_y", "u_xy")

    def __init__(self, domain: BoxDomain, nx: int, ny: int | None = None):
        if domain.dim != 2:
            raise ValueError("the Hermite rectangle element is 2-D only")
        ny = nx if ny is None else ny
        if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
            raise ValueError(f"mesh counts must be positive integers, got {nx}, {ny}")
        self.domain = domain
        self.dim = 2
        self.nx, self.ny = int(nx), int(ny)
        self.hx = (domain.upper[0] - domain.lower[0]) / self.nx
        self.hy = (domain.upper[1] - domain.lower[1]) / self.ny
        self.h = max(self.hx, self.hy)
        self.n_nodes = (self.nx + 1) * (self.ny + 1)
        self.dof_count = 4 * self.n_nodes

        I, J = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1), indexing="xy")
        self.node_ij = np.stack([I.ravel(), J.ravel()], axis=1)  # node id = j*(nx+1)+i
        self.node_xy = np.stack([domain.lower[0] + self.node_ij[:, 0] * self.hx,
                                 domain.lower[1] + self.node_ij[:, 1] * self.hy], axis=1)
        on_x = (self.node_ij[:, 0] == 0) | (self.node_ij[:, 0] == self.nx)
        on_y = (self.node_ij[:, 1] == 0) | (self.node_ij[:, 1] == self.ny)
        constrained = np.zeros((self.n_nodes, 4), dtype=bool)
        constrained[:, 0] = on_x | on_y
        constrained[:, 1] = on_y   # u_x is tangential on horizontal edges
        constrained[:, 2] = on_x   # u_y is tangential on vertical edges
        mask = constrained.ravel()
        self.constrained_dofs = np.flatnonzero(mask)
        self.free_dofs = np.flatnonzero(~mask)

        # local DOF layout: local node (a, b) -> 4*(2*b + a) + comp
        ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        ex, ey = ex.ravel(), ey.ravel()
        self.n_elements = self.nx * self.ny
        self.element_origin = np.stack([domain.lower[0] + ex * self.hx,
                                        domain.lower[1] + ey * self.hy], axis=1)
        local = []
        self._local_hx, self._local_hy = [], []
        for b in (0, 1):
            for a in (0, 1):
                node = (ey + b) * (self.nx + 1) + (ex + a)
                for comp in range(4):
                    local.append(4 * node + comp)
                    self._local_hx.append(2 * a + (1 if comp in (1, 3) else 0))
                    self._local_hy.append(2 * b + (1 if comp in (2, 3) else 0))
        self.element_dofs = np.stack(local, axis=1)  # (n_elements, 16)
        self._local_hx = np.array(self._local_hx)
        self._local_hy = np.array(self._local_hy)

    @property
    def order(self):
        return (self.nx, self.ny)

    @property
    def order_token(self):
        return f"{self.nx}x{self.ny}"

    def default_quad_points(self):
        return 8

    def local_basis(self, tx, ty):
        """Local shape tables at reference points (tx, ty) in [0,1]^2.

        Returns a dict alpha -> (16, npts) array of physical derivatives.
        """
        hx, hy = self.hx, self.hy
        X = tabulate_basis_1d("hermite_cubic", 3, tx)
        Y = tabulate_basis_1d("hermite_cubic", 3, ty)
        # slope shapes scaled by h so that their physical derivative is one at the node
        sx = np.array([1.0, hx, 1.0, hx])[:, None]
        sy = np.array([1.0, hy, 1.0, hy])[:, None]
        xt = [sx * X.values, sx * X.first_derivs / hx, sx * X.second_derivs / hx**2]
        yt = [sy * Y.values, sy * Y.first_derivs / hy, sy * Y.second_derivs / hy**2]
        out = {}
        for ox in range(3):
            for oy in range(3 - ox):
                out[(ox, oy)] = xt[ox][self._local_hx] * yt[oy][self._local_hy]
        return out

    def tabulate(self, quad_points_per_direction=None):
        return HermiteTable(self, quad_points_per_direction or self.default_quad_points())

    def locate(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not np.all(self.domain.contains(pts)):
            raise ValueError("evaluation point outside the domain")
        fx = (pts[:, 0] - self.domain.lower[0]) / self.hx
        fy = (pts[:, 1] - self.domain.lower[1]) / self.hy
        ex = np.clip(np.floor(fx).astype(int), 0, self.nx - 1)
        ey = np.clip(np.floor(fy).astype(int), 0, self.ny - 1)
        tx = np.clip(fx - ex, 0.0, 1.0)
        ty = np.clip(fy - ey, 0.0, 1.0)
        return ey * self.nx + ex, tx, ty

    def evaluate(self, coeffs, points):
        coeffs = _check_coeffs(self, coeffs)
        el, tx, ty = self.locate(points)
        tab = self.local_basis(tx, ty)
        C = coeffs[self.element_dofs[el]]  # (npts, 16)

        def apply(alpha):
            return np.einsum("pk,kp->p", C, tab[alpha])

        val = apply((0, 0))
        grad = np.stack([apply((1, 0)), apply((0, 1))], axis=-1)
        hess = np.empty((len(val), 2, 2))
        hess[:, 0, 0] = apply((2, 0))
        hess[:, 1, 1] = apply((0, 2))
        hess[:, 0, 1] = hess[:, 1, 0] = apply((1, 1))
        return val, grad, hess

    def interpolate(self, u, grad=None, hess=None):
        """Nodal Hermite interpolant; needs the gradient and Hessian callables."""
        if grad is None or hess is None:
            raise ValueError("Hermite interpolation needs gradient and Hessian data")
        X = self.node_xy
        out = np.empty((self.n_nodes, 4))
        out[:, 0] = u(X)
        G = np.asarray(grad(X))
        out[:, 1:3] = G
        out[:, 3] = np.asarray(hess(X))[:, 0, 1]
        return out.ravel()

    def boundary_lift(self, g, grad_g=None):
        """Nodal interpolation of g and its tangential derivatives at boundary nodes."""
        if grad_g is None:
            raise ValueError("the Hermite lift needs tangential derivatives of g")
        c = np.zeros(self.dof_count)
        X = self.node_xy
        vals = np.asarray(g(X), dtype=float)
        G = np.asarray(grad_g(X), dtype=float)
        full = np.column_stack([vals, G[:, 0], G[:, 1], np.zeros(self.n_nodes)]).ravel()
        c[self.constrained_dofs] = full[self.constrained_dofs]
        return c

    def same_family(self, other):
        return False

    def __repr__(self):
        return f"HermiteSpace({self.nx}x{self.ny}, dofs={self.dof_count})"


class HermiteTable:
    """Element-wise Gauss tables; all elements share one reference table."""

    def __init__(self, space: HermiteSpace, nq: int):
        if nq < 2:
            raise ValueError("need at least 2 quadrature points per direction")
        self.space = space
        self.nq = int(nq)
        ref = map_rule(gauss_legendre_rule(self.nq), 0.0, 1.0)
        tx, ty = np.meshgrid(ref.nodes, ref.nodes, indexing="ij")
        self._tx, self._ty = tx.ravel(), ty.ravel()
        self.local = space.local_basis(self._tx, self._ty)
        wloc = np.outer(ref.weights, ref.weights).ravel() * space.hx * space.hy
        ne = space.n_elements
        self.weights = np.broadcast_to(wloc, (ne, wloc.size))
        self.points = np.stack([space.element_origin[:, None, 0] + self._tx * space.hx,
                                space.element_origin[:, None, 1] + self._ty * space.hy],
                               axis=-1)
        self._edge_rule = ref
        dofmap = -np.ones(space.dof_count, dtype=int)
        dofmap[space.free_dofs] = np.arange(len(space.free_dofs))
        self._free_local = dofmap[space.element_dofs]  # (ne, 16), -1 for constrained
        self.nfree = len(space.free_dofs)

    dim = 2

    def field(self, coeffs, alpha):
        coeffs = _check_coeffs(self.space, coeffs)
        return coeffs[self.space.element_dofs] @ self.local[tuple(alpha)]

    def field_derivs(self, coeffs):
        u = self.field(coeffs, (0, 0))
        grad = np.stack([self.field(coeffs, (1, 0)), self.field(coeffs, (0, 1))])
        hess = np.empty((2, 2) + u.shape)
        hess[0, 0] = self.field(coeffs, (2, 0))
        hess[1, 1] = self.field(coeffs, (0, 2))
        hess[0, 1] = hess[1, 0] = self.field(coeffs, (1, 1))
        return u, grad, hess

    def _scatter_vector(self, local):
        fl = self._free_local.ravel()
        keep = fl >= 0
        return np.bincount(fl[keep], weights=local.ravel()[keep], minlength=self.nfree)

    def linear_form(self, terms):
        local = 0.0
        for alpha, s in terms:
            local = local + (np.asarray(s) * self.weights) @ self.local[tuple(alpha)].T
        return self._scatter_vector(np.broadcast_to(local, self._free_local.shape))

    def bilinear_form(self, terms):
        """Sparse (CSR) matrix over free DOFs; rows are test functions."""
        local = 0.0
        for c, a_test, a_trial in terms:
            A = self.local[tuple(a_test)]
            B = self.local[tuple(a_trial)]
            P = (A[:, None, :] * B[None, :, :]).reshape(256, -1)
            local = local + (np.asarray(c) * self.weights) @ P.T
        local = np.broadcast_to(local, (self.space.n_elements, 256))
        rows = np.repeat(self._free_local, 16, axis=1).ravel()
        cols = np.tile(self._free_local, (1, 16)).ravel()
        vals = local.ravel()
        keep = (rows >= 0) & (cols >= 0)
        M = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(self.nfree, self.nfree))
        return M.tocsr()

    def _boundary_edges(self):
        s = self.space
        ex, ey = np.arange(s.nx), np.arange(s.ny)
        # (elements, fixed reference coordinate, axis, outward sign)
        yield ex, 0.0, 1, -1.0                     # bottom, y = lower
        yield (s.ny - 1) * s.nx + ex, 1.0, 1, 1.0  # top
        yield ey * s.nx, 0.0, 0, -1.0              # left
        yield ey * s.nx + s.nx - 1, 1.0, 0, 1.0    # right

    def boundary_normal_form(self, qfun):
        s = self.space
        r = self._edge_rule
        local = np.zeros(self._free_local.shape)
        for elems, t_fixed, ax, sign in self._boundary_edges():
            fixed = np.full_like(r.nodes, t_fixed)
            if ax == 1:
                tab = s.local_basis(r.nodes, fixed)
                length = s.hx
            else:
                tab = s.local_basis(fixed, r.nodes)
                length = s.hy
            dn = sign * tab[(1, 0) if ax == 0 else (0, 1)]  # (16, nq)
            org = s.element_origin[elems]
            pts = np.empty((len(elems), len(r.nodes), 2))
            if ax == 1:
                pts[..., 0] = org[:, None, 0] + r.nodes * s.hx
                pts[..., 1] = org[:, None, 1] + t_fixed * s.hy
            else:
                pts[..., 0] = org[:, None, 0] + t_fixed * s.hx
                pts[..., 1] = org[:, None, 1] + r.nodes * s.hy
            qv = np.asarray(qfun(pts.reshape(-1, 2)), dtype=float).reshape(len(elems), -1)
            np.add.at(local, elems, (qv * r.weights * length) @ dn.T)
        return self._scatter_vector(local)

    def dense(self):
        """Global per-DOF tables over all quadrature points (zero off-support)."""
        s = self.space
        ne, nql = self.weights.shape
        out = {}
        values = np.zeros((s.dof_count, ne * nql))
        grads = np.zeros((s.dof_count, ne * nql, 2))
        hess = np.zeros((s.dof_count, ne * nql, 2, 2))
        for e in range(ne):
            cols = slice(e * nql, (e + 1) * nql)
            dofs = s.element_dofs[e]
            values[dofs, cols] = self.local[(0, 0)]
            grads[dofs, cols, 0] = self.local[(1, 0)]
            grads[dofs, cols, 1] = self.local[(0, 1)]
            hess[dofs, cols, 0, 0] = self.local[(2, 0)]
            hess[dofs, cols, 1, 1] = self.local[(0, 2)]
            hess[dofs, cols, 0, 1] = hess[dofs, cols, 1, 0] = self.local[(1, 1)]
        out.update(values=values, gradients=grads, hessians=hess,
                   laplacians=np.trace(hess, axis1=2, axis2=3),
                   weights=self.weights.ravel(), points=self.points.reshape(-1, 2),
                   element_dofs=s.element_dofs)
        return out


# --------------------------------------------------------------------------
# module-level API


def build_space(kind, domain: BoxDomain, order):
    """Construct a space.

    ``order`` is N for ``spectral`` and ``n`` or ``(nx, ny)`` for ``hermite_fem``.
    """
    if kind == "spectral":
        return SpectralSpace(domain, order)
    if kind == "hermite_fem":
        if domain.dim != 2:
            raise ValueError("hermite_fem is available in 2-D only")
        nx, ny = (order, order) if np.isscalar(order) else order
        return HermiteSpace(domain, nx, ny)
    raise ValueError(f"unknown space kind {kind!r}")


def tabulate(space, quad_points_per_direction=None):
    return space.tabulate(quad_points_per_direction)


def evaluate_field(space, coeffs, points):
    """Value, gradient and Hessian of the discrete field at ``points``."""
    return space.evaluate(coeffs, points)


def boundary_lift(space, g, grad_g=None):
    return space.boundary_lift(g, grad_g)


def transfer(src, coeffs, dst):
    """Move a field into another space of the same domain.

    Spectral-to-spectral is an exact coefficient embedding (or truncation);
    anything else goes through ``dst``'s interpolation of the evaluated field.
    """
    if src is dst:
        return np.array(coeffs, dtype=float)
    if src.same_family(dst):
        return src.embed(coeffs, dst)

    def u(x):
        return src.evaluate(coeffs, x)[0]

    def grad(x):
        return src.evaluate(coeffs, x)[1]

    def hess(x):
        return src.evaluate(coeffs, x)[2]

    return dst.interpolate(u, grad, hess)


def with_boundary(space, coeffs, lift):
    """Copy of ``coeffs`` whose constrained DOFs are taken from ``lift``."""
    out = np.array(coeffs, dtype=float)
    out[space.constrained_dofs] = lift[space.constrained_dofs]
    return out


def write_solution(path, space, coeffs, epsilon):
    coeffs = _check_coeffs(space, coeffs)
    lines = [SOLUTION_MAGIC, f"{space.kind} {space.dim} {space.order_token} {epsilon!r}"]
    lines.extend(f"{c:.17g}" for c in coeffs)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_solution(path):
    """Return (kind, dim, order_token, epsilon, coefficients)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != SOLUTION_MAGIC:
        raise ValueError(f"{path}: not a {SOLUTION_MAGIC!r} file")
    kind, dim, order, eps = lines[1].split()
    coeffs = np.array([float(v) for v in lines[2:] if v.strip()])
    return kind, int(dim), order, float(eps), coeffs


def space_from_header(kind, dim, order_token, domain=None):
    domain = domain or BoxDomain.unit(dim)
    if kind == "spectral":
        return SpectralSpace(domain, int(order_token))
    nx, ny = (int(v) for v in order_token.split("x"))
    return HermiteSpace(domain, nx, ny)
