# app/services/vem_local_service.py
"""
Maquinaria VEM por elemento: dofs D1–D3, proyectores Π∇_k, Π⁰_k, Π⁰_{k−1},
Π⁰_{k−1}∇, Π⁰_k∇ y las matrices locales de a_h, m_h, b_{i,h}, b̃_h y cargas.
"""
from __future__ import annotations

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from app.core.constants import PIVOT_TOL, SUPPORTED_ORDERS
from app.core.exceptions import ProjectorSingularError, UnsupportedOrderError
from app.schemas.quadrature_schema import polynomial_dimension
from app.schemas.vem_schema import DofLayout, EdgeData, LocalMatrices, LocalSpace
from app.services.mesh_service import polygon_geometry
from app.services.quadrature_service import (
    default_order, edge_quadrature, eval_basis, grad_basis, polygon_quadrature, scaled_monomials
)

logger = logging.getLogger(__name__)

ScalarField = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


# ═══════════════════════════════════════════════════════════
#                          HELPERS
# ═══════════════════════════════════════════════════════════
def dense_solve(matrix: np.ndarray, rhs: np.ndarray, what: str = "proyector") -> np.ndarray:
    """LU con pivoteo parcial; pivote < PIVOT_TOL·‖fila‖ se trata como singular."""
    lu, piv = lu_factor(matrix)
    row_norm = np.linalg.norm(matrix, axis=1).max()
    if np.abs(np.diag(lu)).min() < PIVOT_TOL * row_norm:
        raise ProjectorSingularError(f"Sistema del {what} singular (elemento degenerado)")
    return lu_solve((lu, piv), rhs)


def derivative_matrices(exponents: List[Tuple[int, int]], n_rows: int, h: float) -> np.ndarray:
    """(2, n_rows, n_k): ∂_d m_β = Σ_γ Dd[β, γ] m_γ."""
    index = {e: i for i, e in enumerate(exponents)}
    out = np.zeros((2, n_rows, len(exponents)))
    for beta, (a, b) in enumerate(exponents[:n_rows]):
        if a > 0:
            out[0, beta, index[(a - 1, b)]] = a / h
        if b > 0:
            out[1, beta, index[(a, b - 1)]] = b / h
    return out


def laplacian_matrix(exponents: List[Tuple[int, int]], n_low: int, h: float) -> np.ndarray:
    """(n_k, n_low): Δm_α expresado en los monomios de grado ≤ k−2."""
    index = {e: i for i, e in enumerate(exponents)}
    out = np.zeros((len(exponents), n_low))
    for alpha, (a, b) in enumerate(exponents):
        if a > 1:
            out[alpha, index[(a - 2, b)]] += a * (a - 1) / h ** 2
        if b > 1:
            out[alpha, index[(a, b - 2)]] += b * (b - 1) / h ** 2
    return out


def edge_trace(k: int, s: np.ndarray) -> np.ndarray:
    """
    Base de la traza sobre una arista parametrizada por s∈[0,1]:
    columnas (inicio, fin) para k=1 y (inicio, fin, media) para k=2.
    """
    if k == 1:
        return np.column_stack([1.0 - s, s])
    bubble = 6.0 * s * (1.0 - s)          # media 1, nula en los extremos
    return np.column_stack([1.0 - s - 0.5 * bubble, s - 0.5 * bubble, bubble])


def _element_edges(pts: np.ndarray, k: int) -> List[EdgeData]:
    n = len(pts)
    edges = []
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        d = b - a
        length = float(np.hypot(d[0], d[1]))
        dofs = (i, (i + 1) % n) + ((n + i,) if k == 2 else ())
        edges.append(EdgeData(
            start=(float(a[0]), float(a[1])),
            end=(float(b[0]), float(b[1])),
            length=length,
            normal=(float(d[1] / length), float(-d[0] / length)),
            dofs=dofs,
        ))
    return edges


def boundary_integrals(
    edges: List[EdgeData],
    k: int,
    n_dofs: int,
    integrand: Callable[[np.ndarray, EdgeData], np.ndarray],
    order: int,
) -> np.ndarray:
    """(n_poly, N): Σ_e ∫_e g_p φ_j ds usando la traza conocida de cada φ_j."""
    out = None
    for edge in edges:
        rule = edge_quadrature(np.array(edge.start), np.array(edge.end), order)
        s, _ = _edge_parameters(rule.points, edge)
        values = integrand(rule.points, edge)               # (n_q, n_poly)
        contrib = (values * rule.weights[:, None]).T @ edge_trace(k, s)
        if out is None:
            out = np.zeros((values.shape[1], n_dofs))
        out[:, list(edge.dofs)] += contrib
    return out


def _edge_parameters(points: np.ndarray, edge: EdgeData) -> Tuple[np.ndarray, float]:
    a, b = np.array(edge.start), np.array(edge.end)
    return (points - a) @ (b - a) / edge.length ** 2, edge.length


# ═══════════════════════════════════════════════════════════
#                     DOFS Y PROYECTORES
# ═══════════════════════════════════════════════════════════
def build_dof_layout(n_vertices: int, k: int) -> DofLayout:
    if k not in SUPPORTED_ORDERS:
        raise UnsupportedOrderError(f"Orden k={k} no soportado (k ∈ {SUPPORTED_ORDERS})")
    return DofLayout(k=k, n_vertices=n_vertices)


def build_projectors(
    pts: np.ndarray,
    k: int,
    order: Optional[int] = None,
    element: Optional[int] = None,
) -> LocalSpace:
    pts = np.asarray(pts, dtype=np.float64)
    layout = build_dof_layout(len(pts), k)
    geometry = polygon_geometry(pts, element=element)
    quadrature = polygon_quadrature(pts, order or default_order(k), geometry)
    basis = scaled_monomials(geometry, k)
    exps = basis.exponents
    h, area = geometry.diameter, geometry.area
    nk, N, nv = basis.size, layout.n_dofs, len(pts)
    n_low = polynomial_dimension(k - 2)
    n_km1 = polynomial_dimension(k - 1)
    internal = layout.internal_slice
    edge_order = 2 * k + 2
    edges = _element_edges(pts, k)

    values = eval_basis(basis, quadrature.points)
    H = (values * quadrature.weights[:, None]).T @ values

    # ── D: dofs de los monomios ──
    D = np.zeros((N, nk))
    D[:nv] = eval_basis(basis, pts)
    if k == 2:
        for i, edge in enumerate(edges):
            rule = edge_quadrature(np.array(edge.start), np.array(edge.end), edge_order)
            D[nv + i] = rule.integrate(eval_basis(basis, rule.points)) / edge.length
    D[internal] = H[:n_low] / area

    # ── B: ∫∇m_α·∇φ_j por partes; fila 0 = media sobre ∂E ──
    B = boundary_integrals(
        edges, k, N, lambda x, e: grad_basis(basis, x) @ np.array(e.normal), edge_order
    )
    if n_low:
        B[:, internal] -= area * laplacian_matrix(exps, n_low, h)
    perimeter = sum(e.length for e in edges)
    B[0] = boundary_integrals(edges, k, N, lambda x, e: np.ones((len(x), 1)), edge_order)[0] / perimeter

    G = B @ D
    pi_nabla = dense_solve(G, B, "proyector Π∇")
    pi_nabla_dof = D @ pi_nabla

    # ── C: momentos (v, m_α); los de P_k ⊖ P_{k−2} se toman de Π∇ v ──
    HP = H @ pi_nabla
    C = HP.copy()
    if n_low:
        known = np.zeros((n_low, N))
        known[:, internal] = area * np.eye(n_low)
        proj_low = dense_solve(H[:n_low, :n_low], H[:n_low], "proyector Π⁰_{k−2}").T
        C[:n_low] = known
        C[n_low:] = HP[n_low:] - proj_low[n_low:] @ (HP[:n_low] - known)

    pi0 = dense_solve(H, C, "proyector Π⁰_k")
    pi0_km1 = dense_solve(H[:n_km1, :n_km1], C[:n_km1], "proyector Π⁰_{k−1}")

    # ── proyecciones L² del gradiente: −∫ v ∂q + ∫_∂E v q n ──
    def grad_projection(n_m: int) -> np.ndarray:
        deriv = derivative_matrices(exps, n_m, h)
        out = np.empty((2, n_m, N))
        for d in range(2):
            rhs = -deriv[d] @ C + boundary_integrals(
                edges, k, N, lambda x, e: eval_basis(basis, x)[:, :n_m] * e.normal[d], edge_order
            )
            out[d] = dense_solve(H[:n_m, :n_m], rhs, "proyector Π⁰∇")
        return out

    return LocalSpace(
        element=element,
        vertices=pts,
        geometry=geometry,
        layout=layout,
        basis=basis,
        quadrature=quadrature,
        edges=edges,
        H=H, D=D, B=B, G=G, C=C,
        pi_nabla=pi_nabla,
        pi_nabla_dof=pi_nabla_dof,
        pi0=pi0,
        pi0_dof=D @ pi0,
        pi0_km1=pi0_km1,
        grad_pi0_km1=grad_projection(n_km1),
        grad_pi0_k=grad_projection(nk),
    )


def dofs_of_polynomial(space: LocalSpace, coefficients: np.ndarray) -> np.ndarray:
    """Vector de dofs de q = Σ c_α m_α."""
    return space.D @ np.asarray(coefficients, dtype=float)


def interpolate_local(space: LocalSpace, field: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Dofs de una función suave: valores en vértices, medias en aristas y en el elemento."""
    layout = space.layout
    dofs = np.zeros(layout.n_dofs)
    dofs[layout.vertex_slice] = field(space.vertices)
    if space.k == 2:
        for i, edge in enumerate(space.edges):
            rule = edge_quadrature(np.array(edge.start), np.array(edge.end), 2 * space.k + 2)
            dofs[layout.n_vertices + i] = rule.integrate(field(rule.points)) / edge.length
    if layout.n_internal:
        quad = space.quadrature
        low = eval_basis(space.basis, quad.points)[:, :layout.n_internal]
        dofs[layout.internal_slice] = quad.integrate(field(quad.points)[:, None] * low) / space.geometry.area
    return dofs


# ═══════════════════════════════════════════════════════════
#                     MATRICES LOCALES
# ═══════════════════════════════════════════════════════════
def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def local_stiffness(space: LocalSpace) -> np.ndarray:
    """Consistencia con Π⁰_{k−1}∇ + estabilización dofi-dofi sobre (I − Π∇)."""
    n1 = space.pi0_km1.shape[0]
    H1 = space.H[:n1, :n1]
    consistency = sum(g.T @ H1 @ g for g in space.grad_pi0_km1)
    kernel = np.eye(space.n_dofs) - space.pi_nabla_dof
    return _symmetrize(consistency + kernel.T @ kernel)


def local_mass(space: LocalSpace) -> np.ndarray:
    """Consistencia con Π⁰_k + |E|·dofi-dofi sobre (I − Π⁰_k)."""
    consistency = space.pi0.T @ space.H @ space.pi0
    kernel = np.eye(space.n_dofs) - space.pi0_dof
    return _symmetrize(consistency + space.geometry.area * kernel.T @ kernel)


def local_projected_mass(space: LocalSpace) -> np.ndarray:
    """∫_E Π⁰_{k−1}φ_c Π⁰_{k−1}φ_r."""
    n1 = space.pi0_km1.shape[0]
    return _symmetrize(space.pi0_km1.T @ space.H[:n1, :n1] @ space.pi0_km1)


def _projected_values(space: LocalSpace):
    """Valores en cuadratura de Π⁰_{k−1}φ, Π⁰_{k−1}∇φ y Π⁰_k∇φ."""
    n1 = space.pi0_km1.shape[0]
    vals = eval_basis(space.basis, space.quadrature.points)
    u = vals[:, :n1] @ space.pi0_km1
    grad_v = np.stack([vals[:, :n1] @ g for g in space.grad_pi0_km1])   # (2, n_q, N)
    grad_psi = np.stack([vals @ g for g in space.grad_pi0_k])            # (2, n_q, N)
    return u, grad_v, grad_psi


def local_coupling_tensor(space: LocalSpace) -> np.ndarray:
    """T[r, c, j] = ∫ (Π⁰_{k−1}φ_c)(Π⁰_k∇φ_j)·(Π⁰_{k−1}∇φ_r)."""
    u, grad_v, grad_psi = _projected_values(space)
    w = space.quadrature.weights
    return np.einsum("q,dqr,qc,dqj->rcj", w, grad_v, u, grad_psi, optimize=True)


def local_coupling_b(space: LocalSpace, psi_dofs: np.ndarray, q_i: float) -> np.ndarray:
    """K[r, c] = q^i ∫ (Π⁰_{k−1}φ_c)(Π⁰_k∇ψ_h)·(Π⁰_{k−1}∇φ_r); sin estabilización."""
    u, grad_v, grad_psi = _projected_values(space)
    w = space.quadrature.weights
    drift = np.einsum("dqj,j->dq", grad_psi, np.asarray(psi_dofs, dtype=float))
    flux = np.einsum("dqr,dq->qr", grad_v, drift)
    return q_i * (flux * w[:, None]).T @ u


def local_coupling_btilde(space: LocalSpace, q1: float, q2: float) -> Tuple[np.ndarray, np.ndarray]:
    """B̃_i = −q^i ∫ Π⁰_{k−1}φ_c Π⁰_{k−1}φ_r, una matriz por especie."""
    base = local_projected_mass(space)
    return -q1 * base, -q2 * base


def load_values(space: LocalSpace) -> np.ndarray:
    """(n_q, N): Π⁰_k φ_r evaluado en los puntos de cuadratura."""
    return eval_basis(space.basis, space.quadrature.points) @ space.pi0


def local_load(space: LocalSpace, g: ScalarField, t: float) -> np.ndarray:
    """L[r] = ∫_E g(t,·) Π⁰_k φ_r."""
    quad = space.quadrature
    samples = np.broadcast_to(g(t, quad.points[:, 0], quad.points[:, 1]), quad.weights.shape)
    return (quad.weights * samples) @ load_values(space)


def local_matrices(space: LocalSpace) -> LocalMatrices:
    return LocalMatrices(
        A=local_stiffness(space),
        M=local_mass(space),
        M_km1=local_projected_mass(space),
        coupling=local_coupling_tensor(space),
        load_values=load_values(space),
        load_weights=space.quadrature.weights,
        load_points=space.quadrature.points,
    )
