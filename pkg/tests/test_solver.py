import logging

import numpy as np
import pytest
import scipy.sparse as sp

from app.core.config import settings
from app.core.exceptions import SolverFailureError
from app.schemas.system_schema import SparseSystem
from app.services import solver_service
from app.services.solver_service import LinearSolver, relative_residual, solve_linear


def laplacian_1d(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def convection_1d(n: int, peclet: float = 0.4) -> sp.csr_matrix:
    return (laplacian_1d(n) + sp.diags([-peclet * np.ones(n - 1), peclet * np.ones(n - 1)], [-1, 1])).tocsr()


def test_relative_residual():
    A = sp.identity(3, format="csr")
    assert relative_residual(A, np.array([1.0, 2.0, 2.0]), np.array([1.0, 2.0, 2.0])) == 0.0
    assert relative_residual(A, np.zeros(3), np.array([0.0, 3.0, 4.0])) == pytest.approx(1.0)
    assert relative_residual(A, np.ones(3), np.zeros(3)) == pytest.approx(np.sqrt(3.0))


@pytest.mark.parametrize(("n", "threshold", "kind"), [(50, 100, "dense"), (300, 100, "iterative")])
def test_symmetric_paths(n, threshold, kind, rng):
    A = laplacian_1d(n)
    x_true = rng.standard_normal(n)
    solver = LinearSolver(A, symmetric=True, tol=1e-10, dense_threshold=threshold)
    assert solver.kind == kind
    x = solver.solve(A @ x_true)
    assert relative_residual(A, x, A @ x_true) <= 1e-10


@pytest.mark.parametrize(("n", "threshold"), [(40, 100), (400, 100)])
def test_nonsymmetric_paths(n, threshold, rng):
    A = convection_1d(n)
    b = rng.standard_normal(n)
    x = LinearSolver(A, symmetric=False, tol=1e-10, dense_threshold=threshold).solve(b)
    assert relative_residual(A, x, b) <= 1e-10


def test_direct_method(rng):
    A = convection_1d(500)
    solver = LinearSolver(A, symmetric=False, tol=1e-12, method="direct")
    assert solver.kind == "direct"
    b = rng.standard_normal(500)
    assert relative_residual(A, solver.solve(b), b) <= 1e-12


def test_factorization_is_reused(rng):
    solver = LinearSolver(laplacian_1d(30), symmetric=True, tol=1e-12, dense_threshold=100)
    solver.solve(rng.standard_normal(30))
    factor = solver._factor
    solver.solve(rng.standard_normal(30))
    assert solver._factor is factor


def test_indefinite_symmetric_falls_back_to_lu():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    x = LinearSolver(A, symmetric=True, tol=1e-12, dense_threshold=10).solve(np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0])


def test_zero_rhs_and_empty_system():
    A = laplacian_1d(5)
    assert np.array_equal(LinearSolver(A, True).solve(np.zeros(5)), np.zeros(5))
    empty = LinearSolver(sp.csr_matrix((0, 0)), True)
    assert empty.solve(np.zeros(0)).shape == (0,)


def test_warm_start_is_accepted(rng):
    A = laplacian_1d(400)
    b = rng.standard_normal(400)
    solver = LinearSolver(A, symmetric=True, tol=1e-10, dense_threshold=10)
    x = solver.solve(b)
    again = solver.solve(b, x0=x)
    assert relative_residual(A, again, b) <= 1e-10


@pytest.mark.parametrize("symmetric", [True, False])
@pytest.mark.parametrize("method", ["auto", "direct"])
def test_singular_matrix_raises(symmetric, method):
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverFailureError) as info:
        LinearSolver(A, symmetric=symmetric, tol=1e-10, dense_threshold=10, method=method).solve(np.array([1.0, 0.0]))
    assert not np.isfinite(info.value.residual) or info.value.residual > 1e-10


def test_unreachable_tolerance_reports_residual(rng):
    A = convection_1d(60)
    with pytest.raises(SolverFailureError) as info:
        LinearSolver(A, symmetric=False, tol=1e-30, dense_threshold=100).solve(rng.standard_normal(60))
    assert info.value.residual is not None
    assert info.value.residual > 1e-30


def test_solve_linear_wrapper(rng):
    A = laplacian_1d(20)
    b = rng.standard_normal(20)
    x = solve_linear(SparseSystem(matrix=A, rhs=b), symmetric=True, tol=1e-12)
    assert np.allclose(A @ x, b)


# ───────────────────────── tolerancia por defecto ─────────────────────────
def laplacian_2d(n: int) -> sp.csr_matrix:
    eye = sp.identity(n, format="csr")
    return (sp.kron(laplacian_1d(n), eye) + sp.kron(eye, laplacian_1d(n))).tocsr()


def test_default_tolerance_is_reachable_by_cg_on_large_grids(rng):
    # 63² incógnitas libres, como el Poisson P1 del cuadrado n=64
    A = laplacian_2d(63)
    b = rng.standard_normal(A.shape[0])
    solver = LinearSolver(A, symmetric=True)
    assert solver.kind == "iterative"
    assert solver.tol == settings.LINEAR_TOL == 1e-10
    x = solver.solve(b)
    assert relative_residual(A, x, b) <= settings.LINEAR_TOL


@pytest.mark.parametrize("symmetric", [True, False])
def test_krylov_shortfall_is_corrected_with_sparse_lu(monkeypatch, caplog, rng, symmetric):
    A = laplacian_1d(300) if symmetric else convection_1d(300)
    b = rng.standard_normal(300)

    def stalled(matrix, rhs, x0=None, **kwargs):
        return np.zeros_like(rhs), 1

    for name in ("cg", "bicgstab", "gmres"):
        monkeypatch.setattr(solver_service.spla, name, stalled)
    solver = LinearSolver(A, symmetric=symmetric, tol=1e-10, dense_threshold=100)
    with caplog.at_level(logging.WARNING):
        x = solver.solve(b)
    assert relative_residual(A, x, b) <= 1e-10
    assert "LU dispersa" in caplog.text
