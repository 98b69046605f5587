"""Hessian algebra and Galerkin assembly.

Sign conventions (rows index test functions v, columns trial functions w)::

    R(u)[v]  = -eps (Lap u, Lap v) + (det D2u - f, v) + eps <q, dv/dnu>
    J[v, w]  = -eps (Lap w, Lap v) + (cof(D2u) : D2w, v)
    B[v, w]  =  eps (Lap w, Lap v) + (cof(D2u) Dw, Dv)

With exact quadrature J = -B, so the Newton correction solves ``B d = R``
and the update is ``u + d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .function_space import grad_index, hess_index


@dataclass(frozen=True)
class AssembledOperator:
    matrix: object           # ndarray (spectral) or scipy CSR (FEM)
    rhs: np.ndarray | None
    eps: float
    space: object

    @property
    def shape(self):
        return self.matrix.shape

    def dense(self):
        return self.matrix.toarray() if hasattr(self.matrix, "toarray") else np.asarray(self.matrix)


def hessian_det(H):
    """Determinant of one matrix or a stack (..., d, d)."""
    H = np.asarray(H, dtype=float)
    if H.shape[-1] == 2:
        return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    if H.shape[-1] == 3:
        return np.sum(H[..., 0, :] * cofactor(H)[..., 0, :], axis=-1)
    return np.linalg.det(H)


def cofactor(H):
    """Cofactor matrix: ``H @ cof(H).T == det(H) * I``."""
    H = np.asarray(H, dtype=float)
    d = H.shape[-1]
    C = np.empty_like(H)
    if d == 2:
        C[..., 0, 0] = H[..., 1, 1]
        C[..., 0, 1] = -H[..., 1, 0]
        C[..., 1, 0] = -H[..., 0, 1]
        C[..., 1, 1] = H[..., 0, 0]
        return C
    if d == 3:
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            for j in range(3):
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                # cyclic index order absorbs the (-1)^(i+j) sign
                C[..., i, j] = H[..., i1, j1] * H[..., i2, j2] - H[..., i1, j2] * H[..., i2, j1]
        return C
    raise ValueError("cofactor implemented for 2x2 and 3x3 matrices")


def _pointwise(hess_field):
    """(d, d, *qshape) -> (*qshape, d, d)."""
    return np.moveaxis(np.moveaxis(hess_field, 0, -1), 0, -1)


def _check(space, table):
    if table.space is not space:
        raise ValueError("evaluation table was built for a different space")


def hessian_at_quadrature(table, u):
    _, _, hess = table.field_derivs(u)
    return _pointwise(hess)


def _bilap_terms(table, coef):
    d = table.dim
    return [(coef, hess_index(d, a, a), hess_index(d, b, b))
            for a in range(d) for b in range(d)]


def b_terms(table, eps, Phi):
    """Terms of  eps (Lap w, Lap v) + (Phi Dw, Dv)  with Phi of shape (*qshape, d, d)."""
    d = table.dim
    terms = _bilap_terms(table, eps)
    terms += [(Phi[..., a, b], grad_index(d, a), grad_index(d, b))
              for a in range(d) for b in range(d)]
    return terms


def residual_from_det(table, p, eps, u, det_values):
    """Residual with a supplied pointwise det(D2u) field (used for linearized seeds)."""
    d = table.dim
    lap = sum(table.field(u, hess_index(d, a, a)) for a in range(d))
    fvals = p.f(table.points.reshape(-1, d), eps).reshape(lap.shape)
    terms = [((0,) * d, det_values - fvals)]
    terms += [(hess_index(d, a, a), -eps * lap) for a in range(d)]
    vec = table.linear_form(terms)
    return vec + table.boundary_normal_form(lambda x: eps * p.boundary_laplacian(eps)(x))


def assemble_residual(space, table, p, eps, u):
    """R(u)[v] for every free basis function v (``u`` carries the boundary lift)."""
    _check(space, table)
    H = hessian_at_quadrature(table, u)
    return residual_from_det(table, p, eps, u, hessian_det(H))


def assemble_jacobian(space, table, eps, u) -> AssembledOperator:
    _check(space, table)
    d = table.dim
    Phi = cofactor(hessian_at_quadrature(table, u))
    terms = _bilap_terms(table, -eps)
    terms += [(Phi[..., a, b], (0,) * d, hess_index(d, a, b))
              for a in range(d) for b in range(d)]
    return AssembledOperator(table.bilinear_form(terms), None, eps, space)


def assemble_B_form(space, table, eps, u) -> AssembledOperator:
    _check(space, table)
    Phi = cofactor(hessian_at_quadrature(table, u))
    return AssembledOperator(table.bilinear_form(b_terms(table, eps, Phi)), None, eps, space)


def assemble_B_with(table, eps, Phi) -> AssembledOperator:
    """B form with a given pointwise coefficient matrix (e.g. the identity)."""
    return AssembledOperator(table.bilinear_form(b_terms(table, eps, Phi)), None, eps, table.space)


def boundary_load(space, table, eps, q):
    """eps * sum_faces int q dv/dnu ds; ``q`` is a number or a callable of points."""
    _check(space, table)
    if callable(q):
        qf = q
    else:
        qconst = float(q)
        if qconst == 0.0:
            return np.zeros(table.nfree)

        def qf(x):
            return np.full(len(np.atleast_2d(x)), qconst)
    return eps * table.boundary_normal_form(qf)
