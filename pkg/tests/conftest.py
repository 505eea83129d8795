from typing import List, Tuple

import numpy as np
import pytest

from app.services.mesh_service import generate_structured
from app.services.voronoi_service import generate_voronoi

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
RIGHT_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0) -> np.ndarray:
    angles = phase + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)])


def family_elements(per_family: int = 3, scale: int = 1) -> List[Tuple[str, np.ndarray]]:
    """Algunos elementos de cada una de las seis familias; `scale` refina las mallas de origen."""
    meshes = {
        "triangle": generate_structured("triangle", 3 * scale),
        "square": generate_structured("square", 3 * scale),
        "nonconvex": generate_structured("nonconvex", 3 * scale),
        "mixed": generate_structured("mixed", 4 * scale),
        "voronoi": generate_voronoi(16 * scale ** 2, 0, 7),
        "voronoi-smooth": generate_voronoi(16 * scale ** 2, 5, 7),
    }
    out = []
    for name, mesh in meshes.items():
        picks = np.linspace(0, mesh.n_elements - 1, min(per_family, mesh.n_elements)).astype(int)
        out.extend((f"{name}-{e}", mesh.element_vertices(int(e))) for e in np.unique(picks))
    return out


@pytest.fixture
def unit_square() -> np.ndarray:
    return UNIT_SQUARE.copy()


@pytest.fixture
def right_triangle() -> np.ndarray:
    return RIGHT_TRIANGLE.copy()


@pytest.fixture(scope="session")
def elements() -> List[Tuple[str, np.ndarray]]:
    return family_elements()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)
