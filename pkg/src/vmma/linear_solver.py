"""Direct factor-and-solve: LAPACK LU for dense systems, SuperLU for sparse ones."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_RTOL = 1e-14


class SingularMatrixError(RuntimeError):
    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"matrix is numerically singular at pivot {pivot_index}")


@dataclass(frozen=True)
class Factorization:
    kind: str          # "dense" or "sparse"
    data: object
    n: int
    pivot_growth: float


def _inf_norm(A):
    if sp.issparse(A):
        return float(abs(A).sum(axis=1).max()) if A.shape[0] else 0.0
    return float(np.abs(A).sum(axis=1).max()) if A.shape[0] else 0.0


def factor(A) -> Factorization:
    """LU factorization with partial pivoting (dense) or SuperLU (sparse)."""
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    n = A.shape[0]
    norm = _inf_norm(A)
    thresh = PIVOT_RTOL * norm
    if sp.issparse(A):
        try:
            lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise SingularMatrixError(-1, str(exc)) from exc
        diag = np.abs(lu.U.diagonal())
        bad = np.flatnonzero(diag <= thresh)
        if norm == 0.0 or bad.size:
            raise SingularMatrixError(int(bad[0]) if bad.size else 0)
        growth = abs(lu.U).max() / max(abs(A).max(), np.finfo(float).tiny)
        return Factorization("sparse", lu, n, float(growth))
    A = np.asarray(A, dtype=float)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag <= thresh)
    if norm == 0.0 or bad.size:
        raise SingularMatrixError(int(bad[0]) if bad.size else 0)
    growth = np.abs(np.triu(lu)).max() / max(np.abs(A).max(), np.finfo(float).tiny)
    return Factorization("dense", (lu, piv), n, float(growth))


def solve(fact: Factorization, b):
    b = np.asarray(b, dtype=float)
    if b.shape[0] != fact.n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, system has {fact.n}")
    if fact.kind == "sparse":
        return fact.data.solve(b)
    return sla.lu_solve(fact.data, b)


def factor_solve(A, b):
    return solve(factor(A), b)
