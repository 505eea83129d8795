from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


class QuadratureRule(BaseModel):
    points: np.ndarray      # (n_points, 2)
    weights: np.ndarray     # (n_points,) suman |E| o la longitud de la arista
    order: int              # exactitud polinomial

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integra valores muestreados en los puntos (primer eje)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


class ScaledMonomialBasis(BaseModel):
    """
    m_α(x) = ((x − x_E)/h_E)^α, |α| ≤ k, en orden lexicográfico graduado:
    1, x̄, ȳ, x̄², x̄ȳ, ȳ², ...
    """
    centroid: Tuple[float, float]
    diameter: float
    degree: int

    model_config = ConfigDict(frozen=True)

    @property
    def exponents(self) -> List[Tuple[int, int]]:
        return monomial_exponents(self.degree)

    @property
    def size(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2


def monomial_exponents(degree: int) -> List[Tuple[int, int]]:
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def polynomial_dimension(degree: int) -> int:
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2
