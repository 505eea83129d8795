from typing import Any, List, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import settings
from app.schemas.mesh_schema import PolygonalMesh
from app.schemas.vem_schema import LocalSpace


# ────────────────────── numeración global ────────────────────────────────
class DofMap(BaseModel):
    k: int
    n_dofs: int
    n_vertex_dofs: int
    n_edge_dofs: int
    n_internal_dofs: int
    element_dofs: Tuple[np.ndarray, ...]      # índices globales en el orden local
    dirichlet_mask: np.ndarray                # bool por dof global

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)

    @property
    def n_free(self) -> int:
        return int((~self.dirichlet_mask).sum())

    def free_index(self) -> np.ndarray:
        """Global → índice libre; −1 en dofs de Dirichlet."""
        out = np.full(self.n_dofs, -1, dtype=np.int64)
        out[self.free_dofs] = np.arange(self.n_free)
        return out


class SparseSystem(BaseModel):
    matrix: sp.csr_matrix
    rhs: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])


# ────────────────────── estado y configuración ───────────────────────────
class PNPState(BaseModel):
    phi: np.ndarray
    p: Tuple[np.ndarray, np.ndarray]
    t: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class SolverConfig(BaseModel):
    tau: float = Field(gt=0)
    T: float = Field(default=1.0, gt=0)
    gummel_tol: float = Field(default_factory=lambda: settings.GUMMEL_TOL, gt=0)
    gummel_max_iters: int = Field(default_factory=lambda: settings.GUMMEL_MAX_ITERS, ge=1)
    linear_tol: float = Field(default_factory=lambda: settings.LINEAR_TOL, gt=0)
    q: Tuple[float, float] = Field(default_factory=lambda: (settings.CHARGE_1, settings.CHARGE_2))
    dense_threshold: int = Field(default_factory=lambda: settings.DENSE_THRESHOLD, ge=0)
    linear_solver: str = Field(default_factory=lambda: settings.LINEAR_SOLVER)

    @field_validator("linear_solver")
    @classmethod
    def _known_solver(cls, value: str) -> str:
        if value not in ("auto", "direct"):
            raise ValueError("linear_solver debe ser 'auto' o 'direct'")
        return value


class StepRecord(BaseModel):
    step: int
    t: float
    gummel_iters: int
    poisson_residual: float
    np1_residual: float
    np2_residual: float


class TimeLoopResult(BaseModel):
    state: PNPState
    steps: List[StepRecord] = []

    model_config = ConfigDict(arbitrary_types_allowed=True)


# ────────────────────── espacio discreto global ──────────────────────────
class DiscreteSpace(BaseModel):
    """Malla + espacio Q_h^k + operadores globales precalculados (constantes en el tiempo)."""
    mesh: PolygonalMesh
    k: int
    dof_map: DofMap
    spaces: List[LocalSpace]

    stiffness: sp.csr_matrix          # a_h completo (incluye filas de Dirichlet)
    mass: sp.csr_matrix               # m_h
    projected_mass: sp.csr_matrix     # base de b̃_h
    load_operator: sp.csr_matrix      # (n_dofs, n_q): pesos · Π⁰_k φ_r
    quad_points: np.ndarray           # (n_q, 2) todos los puntos de cuadratura
    quad_weights: np.ndarray          # (n_q,)
    value_operator: sp.csr_matrix     # (n_q, n_dofs): Π∇ u_h en los puntos
    grad_operators: Tuple[sp.csr_matrix, sp.csr_matrix]
    coupling: Any                     # CouplingOperator (bloque libre de b_{i,h})

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def n_dofs(self) -> int:
        return self.dof_map.n_dofs
