# app/services/manufactured_service.py
"""
Solución manufacturada en Ω=[0,1]²:

    φ  = (1 − e^{−t}) sin(πx) sin(πy)
    p¹ = sin(t)  sin(2πx) sin(2πy)
    p² = sin(2t) sin(3πx) sin(3πy)

con las fuentes f y F^i derivadas a mano y validadas por diferencias finitas.
"""
from __future__ import annotations

import logging
from typing import Callable, Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.config import settings
from app.core.constants import FIELDS, SOURCE_GATE_TOL
from app.core.exceptions import SourceGateError
from app.schemas.system_schema import DiscreteSpace
from app.services.vem_local_service import interpolate_local

logger = logging.getLogger(__name__)

ScalarField = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

# campo → (frecuencia espacial m, a(t), a'(t)) con u = a(t)·sin(mπx)sin(mπy)
_MODES: Dict[str, Tuple[int, Callable[[float], float], Callable[[float], float]]] = {
    "phi": (1, lambda t: 1.0 - np.exp(-t), lambda t: np.exp(-t)),
    "p1": (2, lambda t: np.sin(t), lambda t: np.cos(t)),
    "p2": (3, lambda t: np.sin(2.0 * t), lambda t: 2.0 * np.cos(2.0 * t)),
}


class ManufacturedCase(BaseModel):
    """Campos exactos y fuentes; las cargas se reparten igual en f y en F^i."""
    q: Tuple[float, float] = Field(default_factory=lambda: (settings.CHARGE_1, settings.CHARGE_2))

    model_config = ConfigDict(frozen=True)

    # ------------- campos ------------- #
    @staticmethod
    def _check(field: str) -> Tuple[int, Callable, Callable]:
        if field not in _MODES:
            raise KeyError(f"Campo desconocido '{field}' (esperado uno de {FIELDS})")
        return _MODES[field]

    def value(self, field: str, t: float, x, y) -> np.ndarray:
        m, a, _ = self._check(field)
        return a(t) * np.sin(m * np.pi * np.asarray(x)) * np.sin(m * np.pi * np.asarray(y))

    def gradient(self, field: str, t: float, x, y) -> Tuple[np.ndarray, np.ndarray]:
        m, a, _ = self._check(field)
        x, y = np.asarray(x), np.asarray(y)
        k = m * np.pi
        return (
            a(t) * k * np.cos(k * x) * np.sin(k * y),
            a(t) * k * np.sin(k * x) * np.cos(k * y),
        )

    def laplacian(self, field: str, t: float, x, y) -> np.ndarray:
        m, _, _ = self._check(field)
        return -2.0 * (m * np.pi) ** 2 * self.value(field, t, x, y)

    def time_derivative(self, field: str, t: float, x, y) -> np.ndarray:
        m, _, da = self._check(field)
        return da(t) * np.sin(m * np.pi * np.asarray(x)) * np.sin(m * np.pi * np.asarray(y))

    def field(self, name: str) -> ScalarField:
        return lambda t, x, y: self.value(name, t, x, y)

    # ------------- evaluación ------------- #
    def exact(self, t: float, x, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.value(name, t, x, y) for name in FIELDS)

    def source_f(self, t: float, x, y) -> np.ndarray:
        """f = −Δφ − q¹p¹ − q²p²."""
        q1, q2 = self.q
        return (
            -self.laplacian("phi", t, x, y)
            - q1 * self.value("p1", t, x, y)
            - q2 * self.value("p2", t, x, y)
        )

    def source_F(self, i: int, t: float, x, y) -> np.ndarray:
        """F^i = p_t − Δp − q^i(∇p·∇φ + p Δφ)."""
        if i not in (1, 2):
            raise ValueError(f"Especie {i} inválida (1 o 2)")
        name = f"p{i}"
        gpx, gpy = self.gradient(name, t, x, y)
        gfx, gfy = self.gradient("phi", t, x, y)
        drift = gpx * gfx + gpy * gfy + self.value(name, t, x, y) * self.laplacian("phi", t, x, y)
        return (
            self.time_derivative(name, t, x, y)
            - self.laplacian(name, t, x, y)
            - self.q[i - 1] * drift
        )

    def source(self, i: int) -> ScalarField:
        return lambda t, x, y: self.source_F(i, t, x, y)


# ═══════════════════════════════════════════════════════════
#          RESIDUO POR DIFERENCIAS FINITAS (COMPUERTA)
# ═══════════════════════════════════════════════════════════
def _d1(g: Callable[[float], np.ndarray], s: float) -> np.ndarray:
    """Derivada central de cuarto orden."""
    return (-g(2 * s) + 8 * g(s) - 8 * g(-s) + g(-2 * s)) / (12 * s)


def _d2(g: Callable[[float], np.ndarray], s: float) -> np.ndarray:
    """Segunda derivada central de cuarto orden."""
    return (-g(2 * s) + 16 * g(s) - 30 * g(0.0) + 16 * g(-s) - g(-2 * s)) / (12 * s * s)


def fd_laplacian(u: ScalarField, t: float, x, y, step: float = 1e-4) -> np.ndarray:
    return _d2(lambda s: u(t, x + s, y), step) + _d2(lambda s: u(t, x, y + s), step)


def pde_residual(
    case: ManufacturedCase,
    t: float,
    x,
    y,
    step: float = 1e-4,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Residuos de las tres ecuaciones con derivadas por diferencias finitas
    y las fuentes analíticas; escalados por max(1, |fuente|).
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    phi, p1, p2 = (case.field(name) for name in FIELDS)
    lap_phi = fd_laplacian(phi, t, x, y, step)

    f = case.source_f(t, x, y)
    poisson = (-lap_phi - case.q[0] * p1(t, x, y) - case.q[1] * p2(t, x, y)) - f
    out = [np.abs(poisson) / np.maximum(1.0, np.abs(f))]

    phi_x = _d1(lambda s: phi(t, x + s, y), step)
    phi_y = _d1(lambda s: phi(t, x, y + s), step)
    for i, p in ((1, p1), (2, p2)):
        p_t = _d1(lambda s: p(t + s, x, y), step)
        p_x = _d1(lambda s: p(t, x + s, y), step)
        p_y = _d1(lambda s: p(t, x, y + s), step)
        flux_div = fd_laplacian(p, t, x, y, step) + case.q[i - 1] * (
            p_x * phi_x + p_y * phi_y + p(t, x, y) * lap_phi
        )
        F = case.source_F(i, t, x, y)
        out.append(np.abs(p_t - flux_div - F) / np.maximum(1.0, np.abs(F)))
    return tuple(out)


def check_sources(
    case: ManufacturedCase,
    n_space: int = 20,
    n_time: int = 5,
    step: float = 1e-4,
    tol: float = SOURCE_GATE_TOL,
) -> float:
    """Compuerta previa a cualquier corrida: residuo máximo en una grilla (x, y, t)."""
    s = np.linspace(0.0, 1.0, n_space)
    x, y = np.meshgrid(s, s, indexing="ij")
    worst = 0.0
    for t in np.linspace(0.0, 1.0, n_time):
        worst = max(worst, *(float(r.max()) for r in pde_residual(case, float(t), x, y, step)))
    logger.debug("Residuo de las fuentes manufacturadas: %.3e", worst)
    if worst > tol:
        raise SourceGateError(f"Residuo de las fuentes {worst:.3e} > {tol:.1e}")
    return worst


# ═══════════════════════════════════════════════════════════
#                 INTERPOLACIÓN EN DOFS
# ═══════════════════════════════════════════════════════════
def dof_interpolate(space: DiscreteSpace, field: ScalarField, t: float) -> np.ndarray:
    """
    Vector global de dofs de un campo suave: valores en vértices y medias
    sobre aristas y elementos. Los dofs compartidos reciben el mismo valor
    desde cada elemento vecino.
    """
    out = np.zeros(space.n_dofs)

    def sample(pts: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(field(t, pts[:, 0], pts[:, 1]), dtype=float), (len(pts),))

    for dofs, local in zip(space.dof_map.element_dofs, space.spaces):
        out[dofs] = interpolate_local(local, sample)
    return out


def interpolate_state(space: DiscreteSpace, case: ManufacturedCase, t: float) -> Tuple[np.ndarray, ...]:
    """(φ, p¹, p²) interpolados con los dofs de Dirichlet puestos en cero."""
    mask = space.dof_map.dirichlet_mask
    fields = []
    for name in FIELDS:
        values = dof_interpolate(space, case.field(name), t)
        values[mask] = 0.0
        fields.append(values)
    return tuple(fields)
