from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.schemas.mesh_schema import ElementGeometry
from app.schemas.quadrature_schema import QuadratureRule, ScaledMonomialBasis, polynomial_dimension


class DofLayout(BaseModel):
    """
    Orden fijo de los grados de libertad locales:
    valores en vértices (D1), medias en aristas contra P_{k−2}(e) (D2),
    medias internas contra P_{k−2}(E) (D3).
    """
    k: int
    n_vertices: int

    model_config = ConfigDict(frozen=True)

    @property
    def edge_dofs_per_edge(self) -> int:
        return self.k - 1

    @property
    def n_internal(self) -> int:
        return polynomial_dimension(self.k - 2)

    @property
    def n_dofs(self) -> int:
        return self.n_vertices * self.k + self.n_internal

    @property
    def vertex_slice(self) -> slice:
        return slice(0, self.n_vertices)

    @property
    def edge_slice(self) -> slice:
        return slice(self.n_vertices, self.n_vertices * self.k)

    @property
    def internal_slice(self) -> slice:
        return slice(self.n_vertices * self.k, self.n_dofs)

    def kinds(self) -> List[str]:
        return (
            ["vertex"] * self.n_vertices
            + ["edge"] * (self.n_vertices * self.edge_dofs_per_edge)
            + ["internal"] * self.n_internal
        )


class EdgeData(BaseModel):
    start: Tuple[float, float]
    end: Tuple[float, float]
    length: float
    normal: Tuple[float, float]     # normal unitaria exterior
    dofs: Tuple[int, ...]           # dofs locales con traza no nula: inicio, fin, momentos

    model_config = ConfigDict(frozen=True)


class LocalSpace(BaseModel):
    """Espacio local Q_h^k(E): matrices de proyección en coordenadas de monomios y de dofs."""
    element: Optional[int] = None
    vertices: np.ndarray
    geometry: ElementGeometry
    layout: DofLayout
    basis: ScaledMonomialBasis
    quadrature: QuadratureRule
    edges: List[EdgeData]

    H: np.ndarray                 # (n_k, n_k) masa de monomios
    D: np.ndarray                 # (N, n_k) dofs de cada monomio
    B: np.ndarray                 # (n_k, N)
    G: np.ndarray                 # (n_k, n_k) = B D
    C: np.ndarray                 # (n_k, N) momentos (v, m_α) en el espacio mejorado
    pi_nabla: np.ndarray          # (n_k, N)  Π∇_k en monomios
    pi_nabla_dof: np.ndarray      # (N, N)    Π∇_k en dofs
    pi0: np.ndarray               # (n_k, N)  Π⁰_k
    pi0_dof: np.ndarray           # (N, N)
    pi0_km1: np.ndarray           # (n_{k−1}, N) Π⁰_{k−1}
    grad_pi0_km1: np.ndarray      # (2, n_{k−1}, N) Π⁰_{k−1}∇
    grad_pi0_k: np.ndarray        # (2, n_k, N)     Π⁰_k∇

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def k(self) -> int:
        return self.layout.k

    @property
    def n_dofs(self) -> int:
        return self.layout.n_dofs


class LocalMatrices(BaseModel):
    A: np.ndarray                 # a_h^E
    M: np.ndarray                 # m_h^E
    M_km1: np.ndarray             # ∫ Π⁰_{k−1}φ_c Π⁰_{k−1}φ_r, base de b̃_h^E
    coupling: np.ndarray          # (N, N, N) tensor de b_{i,h}^E sin la carga
    load_values: np.ndarray       # (n_q, N) Π⁰_k φ_r en los puntos de cuadratura
    load_weights: np.ndarray
    load_points: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
