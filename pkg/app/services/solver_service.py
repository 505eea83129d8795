# app/services/solver_service.py
"""
Solvers lineales: factorización densa para sistemas chicos, gradiente
conjugado (simétrico) o BiCGStab/GMRES (no simétrico) con precondicionador
de Jacobi para el resto, y LU dispersa opcional. Una solución de Krylov que
no alcanza la tolerancia se corrige con LU dispersa antes de declarar falla.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.core.config import settings
from app.core.exceptions import SolverFailureError
from app.schemas.system_schema import SparseSystem

logger = logging.getLogger(__name__)

REFINEMENT_STEPS = 2


def relative_residual(matrix: sp.spmatrix, x: np.ndarray, rhs: np.ndarray) -> float:
    norm_b = np.linalg.norm(rhs)
    residual = np.linalg.norm(matrix @ x - rhs)
    return float(residual / norm_b) if norm_b > 0 else float(residual)


class LinearSolver:
    """Solver para una matriz fija; reutiliza la factorización entre llamadas."""

    def __init__(
        self,
        matrix: sp.spmatrix,
        symmetric: bool,
        tol: Optional[float] = None,
        dense_threshold: Optional[int] = None,
        method: str = "auto",
    ) -> None:
        self.matrix = sp.csr_matrix(matrix)
        self.symmetric = symmetric
        self.tol = tol if tol is not None else settings.LINEAR_TOL
        self.n = self.matrix.shape[0]
        threshold = dense_threshold if dense_threshold is not None else settings.DENSE_THRESHOLD
        if method == "direct":
            self.kind = "direct"
        elif self.n < threshold:
            self.kind = "dense"
        else:
            self.kind = "iterative"
        self._factor = None
        self._jacobi = None
        self._lu = None

    # ------------- factorizaciones ------------- #
    def _sparse_lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix.tocsc()).solve
            except RuntimeError as exc:
                raise SolverFailureError(f"LU dispersa falló: {exc}", residual=float("inf")) from exc
        return self._lu

    def _factorize(self):
        if self._factor is not None:
            return self._factor
        if self.kind == "dense":
            dense = self.matrix.toarray()
            if self.symmetric:
                try:
                    factor = la.cho_factor(dense)
                    self._factor = lambda b: la.cho_solve(factor, b)
                    return self._factor
                except la.LinAlgError:
                    logger.debug("Cholesky falló; se usa LU")
            factor = la.lu_factor(dense, check_finite=False)
            self._factor = lambda b: la.lu_solve(factor, b, check_finite=False)
        else:
            self._factor = self._sparse_lu()
        return self._factor

    def _preconditioner(self) -> spla.LinearOperator:
        if self._jacobi is None:
            diag = self.matrix.diagonal()
            inv = np.where(diag != 0.0, 1.0 / np.where(diag != 0.0, diag, 1.0), 1.0)
            self._jacobi = spla.LinearOperator((self.n, self.n), matvec=lambda v: inv * v)
        return self._jacobi

    # ------------- resolución ------------- #
    def _solve_factorized(self, rhs: np.ndarray) -> np.ndarray:
        solve = self._factorize()
        x = solve(rhs)
        for _ in range(REFINEMENT_STEPS):
            # pivote nulo: lu_solve devuelve inf/NaN
            if not np.all(np.isfinite(x)):
                raise SolverFailureError(
                    f"Matriz singular: la factorización {self.kind} produjo valores no finitos",
                    residual=float("inf"),
                )
            if relative_residual(self.matrix, x, rhs) <= self.tol:
                break
            x = x + solve(rhs - self.matrix @ x)
        return x

    def _solve_iterative(self, rhs: np.ndarray, x0: Optional[np.ndarray]) -> tuple[np.ndarray, int]:
        maxiter = 10 * self.n
        kwargs = dict(x0=x0, rtol=self.tol, atol=0.0, maxiter=maxiter, M=self._preconditioner())
        if self.symmetric:
            x, info = spla.cg(self.matrix, rhs, **kwargs)
        else:
            x, info = spla.bicgstab(self.matrix, rhs, **kwargs)
            if info < 0 or relative_residual(self.matrix, x, rhs) > self.tol:
                logger.debug("BiCGStab sin convergencia (info=%d); se reintenta con GMRES", info)
                x, info = spla.gmres(
                    self.matrix, rhs, x0=x, rtol=self.tol, atol=0.0,
                    restart=min(50, self.n), maxiter=maxiter, M=self._preconditioner(),
                )
        return x, info

    def _polish(self, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Corrige con LU dispersa una solución de Krylov que no alcanzó la tolerancia."""
        solve = self._sparse_lu()
        for _ in range(REFINEMENT_STEPS):
            x = x + solve(rhs - self.matrix @ x)
            if relative_residual(self.matrix, x, rhs) <= self.tol:
                break
        return x

    def solve(self, rhs: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.n == 0:
            return np.zeros(0)
        if not np.any(rhs):
            return np.zeros(self.n)
        info = 0
        if self.kind == "iterative":
            x, info = self._solve_iterative(rhs, x0)
            residual = relative_residual(self.matrix, x, rhs)
            if np.all(np.isfinite(x)) and residual > self.tol:
                logger.warning(
                    "Krylov terminó con residuo %.3e > %.1e (info=%d); se corrige con LU dispersa",
                    residual, self.tol, info,
                )
                x = self._polish(x, rhs)
        else:
            x = self._solve_factorized(rhs)
        residual = relative_residual(self.matrix, x, rhs)
        if not np.isfinite(residual) or residual > self.tol:
            raise SolverFailureError(
                f"Residuo relativo {residual:.3e} > {self.tol:.1e} ({self.kind}, info={info})",
                residual=residual,
                iterations=10 * self.n if info > 0 else 0,
            )
        return x


def solve_linear(
    system: SparseSystem,
    symmetric: bool,
    tol: Optional[float] = None,
    dense_threshold: Optional[int] = None,
    method: str = "auto",
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    return LinearSolver(system.matrix, symmetric, tol, dense_threshold, method).solve(system.rhs, x0)
