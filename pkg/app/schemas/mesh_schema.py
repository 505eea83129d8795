from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


# ────────────────────── malla poligonal ──────────────────────────────────
class PolygonalMesh(BaseModel):
    """
    Descomposición de Ω=[0,1]² en polígonos.
    Inmutable: los arreglos se marcan como no escribibles al construirla.
    """
    vertices: np.ndarray                        # (n_vertices, 2)
    elements: Tuple[Tuple[int, ...], ...]       # ciclos antihorarios, índices base 0
    boundary_vertex_flags: np.ndarray           # (n_vertices,) bool
    boundary_edge_list: Tuple[Tuple[int, int], ...]   # (elemento, arista local)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_vertices(self, e: int) -> np.ndarray:
        return self.vertices[list(self.elements[e])]


class ElementGeometry(BaseModel):
    area: float
    centroid: Tuple[float, float]
    diameter: float

    model_config = ConfigDict(frozen=True)


# ────────────────────── reporte de calidad ───────────────────────────────
class ElementQuality(BaseModel):
    element: int
    convex: bool
    star_shaped: bool                 # núcleo no vacío
    star_shaped_wrt_centroid: bool    # el centroide está en el núcleo
    inradius_ratio: float             # ρ_E / h_E (bola más grande dentro del núcleo)
    min_edge_ratio: float             # distancia mínima entre vértices / h_E
    kernel_point: Optional[Tuple[float, float]] = None


class QualityReport(BaseModel):
    elements: List[ElementQuality] = []
    h: float
    n_elements: int
    diagnostics: List[str] = []       # defectos estructurales
    warnings: List[str] = []          # umbrales de calidad no cumplidos

    @property
    def structurally_valid(self) -> bool:
        return not self.diagnostics

    @property
    def all_star_shaped(self) -> bool:
        return all(q.star_shaped for q in self.elements)

    @property
    def min_inradius_ratio(self) -> float:
        return min((q.inradius_ratio for q in self.elements), default=0.0)

    @property
    def min_edge_ratio(self) -> float:
        return min((q.min_edge_ratio for q in self.elements), default=0.0)

    @property
    def mean_inradius_ratio(self) -> float:
        if not self.elements:
            return 0.0
        return float(np.mean([q.inradius_ratio for q in self.elements]))
