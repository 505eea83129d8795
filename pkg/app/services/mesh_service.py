# app/services/mesh_service.py
from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import pdist

from app.core.config import settings
from app.core.constants import AREA_TOL, BOUNDARY_TOL
from app.core.exceptions import InvalidElementError, MeshFormatError
from app.schemas.mesh_schema import (
    ElementGeometry, ElementQuality, PolygonalMesh, QualityReport
)

logger = logging.getLogger(__name__)

DOMAIN_AREA = 1.0
MESH_HEADER = "polymesh v1"


# ═══════════════════════════════════════════════════════════
#                      CONSTRUCCIÓN
# ═══════════════════════════════════════════════════════════
def on_boundary(points: np.ndarray) -> np.ndarray:
    """True donde el punto está sobre ∂Ω (distancia < BOUNDARY_TOL)."""
    pts = np.atleast_2d(points)
    dist = np.minimum(
        np.minimum(np.abs(pts[:, 0]), np.abs(1.0 - pts[:, 0])),
        np.minimum(np.abs(pts[:, 1]), np.abs(1.0 - pts[:, 1])),
    )
    return dist < BOUNDARY_TOL


def build_mesh(vertices: np.ndarray, elements: Iterable[Sequence[int]]) -> PolygonalMesh:
    """Arma la malla inmutable: banderas de frontera y aristas de frontera."""
    verts = np.array(vertices, dtype=np.float64).reshape(-1, 2)
    cells = tuple(tuple(int(i) for i in cell) for cell in elements)
    if not cells:
        raise InvalidElementError("La malla no tiene elementos")
    for e, cell in enumerate(cells):
        if len(cell) < 3:
            raise InvalidElementError(f"Elemento {e} con menos de 3 vértices")
        if min(cell) < 0 or max(cell) >= len(verts):
            raise InvalidElementError(f"Elemento {e} referencia vértices inexistentes")

    edge_count = Counter(
        tuple(sorted((cell[i], cell[(i + 1) % len(cell)])))
        for cell in cells for i in range(len(cell))
    )
    boundary_edges = tuple(
        (e, i)
        for e, cell in enumerate(cells)
        for i in range(len(cell))
        if edge_count[tuple(sorted((cell[i], cell[(i + 1) % len(cell)])))] == 1
    )

    flags = on_boundary(verts)
    verts.setflags(write=False)
    flags.setflags(write=False)
    return PolygonalMesh(
        vertices=verts,
        elements=cells,
        boundary_vertex_flags=flags,
        boundary_edge_list=boundary_edges,
    )


def mesh_edges(mesh: PolygonalMesh) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
    """Arista no orientada (i<j) → lista de (elemento, arista local), en orden de aparición."""
    edges: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for e, cell in enumerate(mesh.elements):
        n = len(cell)
        for i in range(n):
            key = tuple(sorted((cell[i], cell[(i + 1) % n])))
            edges.setdefault(key, []).append((e, i))
    return edges


# ═══════════════════════════════════════════════════════════
#                      GEOMETRÍA
# ═══════════════════════════════════════════════════════════
def polygon_area_centroid(pts: np.ndarray) -> Tuple[float, np.ndarray]:
    """Área con signo (shoelace) y centroide ponderado por área."""
    x, y = pts[:, 0], pts[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = 0.5 * cross.sum()
    if area == 0.0:
        return 0.0, pts.mean(axis=0)
    cx = ((x + xs) * cross).sum() / (6.0 * area)
    cy = ((y + ys) * cross).sum() / (6.0 * area)
    return float(area), np.array([cx, cy])


def polygon_geometry(pts: np.ndarray, element: Optional[int] = None) -> ElementGeometry:
    area, centroid = polygon_area_centroid(pts)
    if area <= 0.0:
        where = f"Elemento {element}" if element is not None else "Polígono"
        raise InvalidElementError(f"{where} degenerado u horario (área {area:.3e})")
    return ElementGeometry(
        area=area,
        centroid=(float(centroid[0]), float(centroid[1])),
        diameter=float(pdist(pts).max()),
    )


def element_geometry(mesh: PolygonalMesh, e: int) -> ElementGeometry:
    if not 0 <= e < mesh.n_elements:
        raise InvalidElementError(f"Índice de elemento fuera de rango: {e}")
    return polygon_geometry(mesh.element_vertices(e), element=e)


def mesh_size(mesh: PolygonalMesh) -> float:
    """h = (|Ω| / N_E)^{1/2}."""
    return float(np.sqrt(DOMAIN_AREA / mesh.n_elements))


def is_convex(pts: np.ndarray) -> bool:
    d1 = np.roll(pts, -1, axis=0) - pts
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = np.abs(d1).max() ** 2
    return bool(np.all(cross >= -AREA_TOL * scale))


def edge_halfplanes(pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Normales unitarias exteriores n_e y cotas n_e·a_e; el núcleo es {x: n_e·x ≤ b_e}."""
    d = np.roll(pts, -1, axis=0) - pts
    normals = np.column_stack([d[:, 1], -d[:, 0]])
    lengths = np.linalg.norm(normals, axis=1)
    keep = lengths > 0
    normals = normals[keep] / lengths[keep, None]
    return normals, np.einsum("ij,ij->i", normals, pts[keep])


def chebyshev_kernel(pts: np.ndarray) -> Tuple[Optional[np.ndarray], float]:
    """
    Bola más grande contenida en el núcleo del polígono (intersección de los
    semiplanos de sus aristas). Devuelve (centro, radio); centro None si el
    núcleo es vacío.
    """
    normals, bounds = edge_halfplanes(pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    a_ub = np.column_stack([normals, np.ones(len(normals))])
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=a_ub,
        b_ub=bounds,
        bounds=[(lo[0], hi[0]), (lo[1], hi[1]), (None, float(np.linalg.norm(hi - lo)))],
        method="highs",
    )
    if res.status != 0:
        return None, 0.0
    radius = float(res.x[2])
    if radius <= 0.0:
        return None, max(radius, 0.0)
    return np.array(res.x[:2]), radius


def point_in_kernel(pts: np.ndarray, point: np.ndarray, tol: float = 0.0) -> bool:
    """True si `point` ve toda la frontera (dentro estricto de cada semiplano, con holgura tol)."""
    normals, bounds = edge_halfplanes(pts)
    return bool(np.all(normals @ point - bounds < -tol))


# ═══════════════════════════════════════════════════════════
#                  GENERADORES ESTRUCTURADOS
# ═══════════════════════════════════════════════════════════
def _grid_vertices(n: int) -> np.ndarray:
    s = np.arange(n + 1) / n
    xx, yy = np.meshgrid(s, s)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _square_cells(n: int) -> List[Tuple[int, ...]]:
    vid = lambda i, j: j * (n + 1) + i
    return [
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
        for j in range(n) for i in range(n)
    ]


def _triangle_cells(n: int) -> List[Tuple[int, ...]]:
    cells = []
    for a, b, c, d in _square_cells(n):
        cells.append((a, b, c))
        cells.append((a, c, d))
    return cells


def _nonconvex_mesh(n: int) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    """
    Cada celda se corta con una poligonal en zigzag de 3 segmentos que une los
    puntos medios izquierdo y derecho: dos hexágonos no convexos congruentes
    (simetría central respecto al centro de la celda).
    """
    verts = [tuple(p) for p in _grid_vertices(n)]
    vid = lambda i, j: j * (n + 1) + i
    index: Dict[Tuple[int, int], int] = {}

    # claves enteras en una grilla 12n × 12n: los puntos medios se comparten entre vecinos
    def add(i12: int, j12: int) -> int:
        if (i12, j12) not in index:
            index[(i12, j12)] = len(verts)
            verts.append((i12 / (12.0 * n), j12 / (12.0 * n)))
        return index[(i12, j12)]

    cells = []
    for j in range(n):
        for i in range(n):
            x0, ym = 12 * i, 12 * j + 6
            left = add(x0, ym)
            right = add(x0 + 12, ym)
            peak = add(x0 + 4, ym + 3)
            valley = add(x0 + 8, ym - 3)
            cells.append((vid(i, j), vid(i + 1, j), right, valley, peak, left))
            cells.append((left, peak, valley, right, vid(i + 1, j + 1), vid(i, j + 1)))
    return np.array(verts), cells


def _mixed_cells(n: int) -> List[Tuple[int, ...]]:
    """
    Macro-baldosa 2×2 de celdas: dos cuadriláteros, un triángulo y un pentágono.
    Todos sus vértices son puntos de la grilla, por eso las celdas sueltas
    (n impar) pueden quedar como cuadrados sin romper la conformidad.
    """
    vid = lambda i, j: j * (n + 1) + i
    tiles = n // 2
    cells = []
    covered = set()
    for tj in range(tiles):
        for ti in range(tiles):
            i, j = 2 * ti, 2 * tj
            c00, m10, c20 = vid(i, j), vid(i + 1, j), vid(i + 2, j)
            m01, c11, m21 = vid(i, j + 1), vid(i + 1, j + 1), vid(i + 2, j + 1)
            c02, m12, c22 = vid(i, j + 2), vid(i + 1, j + 2), vid(i + 2, j + 2)
            cells.append((c00, m10, c11, m01))             # cuadrilátero
            cells.append((m10, c20, m21))                  # triángulo
            cells.append((m10, m21, c22, m12, c11))        # pentágono
            cells.append((m01, c11, m12, c02))             # cuadrilátero
            covered.update({(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)})
    for j in range(n):
        for i in range(n):
            if (i, j) not in covered:
                cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return cells


def generate_structured(kind: str, n: int) -> PolygonalMesh:
    if n < 1:
        raise ValueError("n debe ser ≥ 1")
    if kind == "square":
        mesh = build_mesh(_grid_vertices(n), _square_cells(n))
    elif kind == "triangle":
        mesh = build_mesh(_grid_vertices(n), _triangle_cells(n))
    elif kind == "nonconvex":
        verts, cells = _nonconvex_mesh(n)
        mesh = build_mesh(verts, cells)
    elif kind == "mixed":
        mesh = build_mesh(_grid_vertices(n), _mixed_cells(n))
    else:
        raise ValueError(f"Tipo de malla estructurada desconocido: {kind}")
    logger.info("Malla %s n=%d: %d elementos, %d vértices", kind, n, mesh.n_elements, mesh.n_vertices)
    return mesh


# ═══════════════════════════════════════════════════════════
#                      VALIDACIÓN
# ═══════════════════════════════════════════════════════════
def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple(pts: np.ndarray) -> bool:
    """Sin autointersecciones entre aristas no adyacentes ni vértices repetidos."""
    n = len(pts)
    if len(np.unique(pts, axis=0)) < n:
        return False
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


def structural_diagnostics(mesh: PolygonalMesh) -> List[str]:
    """Orientación, simplicidad, solapes y aristas colgantes."""
    diagnostics: List[str] = []
    total_area = 0.0
    for e, cell in enumerate(mesh.elements):
        if len(set(cell)) < len(cell):
            diagnostics.append(f"elemento {e}: vértices repetidos")
            continue
        pts = mesh.element_vertices(e)
        area, _ = polygon_area_centroid(pts)
        total_area += area
        if area <= 0.0:
            diagnostics.append(f"elemento {e}: orientación horaria o área nula ({area:.3e})")
        if not is_simple(pts):
            diagnostics.append(f"elemento {e}: polígono autointersecante")

    directed = Counter(
        (cell[i], cell[(i + 1) % len(cell)])
        for cell in mesh.elements for i in range(len(cell))
    )
    for (a, b), count in directed.items():
        if count > 1:
            diagnostics.append(f"arista ({a},{b}): usada {count} veces con la misma orientación")
        if (b, a) in directed:
            continue
        mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        if not (on_boundary(mesh.vertices[[a, b]]).all() and on_boundary(mid)[0]):
            diagnostics.append(f"arista ({a},{b}): colgante (sin gemela y fuera de ∂Ω)")

    if abs(total_area - DOMAIN_AREA) > 1e-10:
        diagnostics.append(f"suma de áreas {total_area:.15f} ≠ |Ω| (solape o hueco)")
    return diagnostics


def element_quality(mesh: PolygonalMesh, e: int) -> ElementQuality:
    pts = mesh.element_vertices(e)
    geom = polygon_geometry(pts, element=e)
    center, radius = chebyshev_kernel(pts)
    star = center is not None and radius > BOUNDARY_TOL * geom.diameter
    return ElementQuality(
        element=e,
        convex=is_convex(pts),
        star_shaped=star,
        star_shaped_wrt_centroid=point_in_kernel(pts, np.array(geom.centroid)),
        inradius_ratio=radius / geom.diameter if star else 0.0,
        min_edge_ratio=float(pdist(pts).min()) / geom.diameter,
        kernel_point=(float(center[0]), float(center[1])) if star else None,
    )


def validate(mesh: PolygonalMesh) -> QualityReport:
    diagnostics = structural_diagnostics(mesh)
    qualities: List[ElementQuality] = []
    warnings: List[str] = []
    for e in range(mesh.n_elements):
        try:
            q = element_quality(mesh, e)
        except InvalidElementError as exc:
            diagnostics.append(exc.detail)
            continue
        qualities.append(q)
        if not q.star_shaped:
            warnings.append(f"elemento {e}: núcleo vacío (no estrellado)")
        elif q.inradius_ratio < settings.INRADIUS_WARN:
            warnings.append(f"elemento {e}: ρ_E/h_E={q.inradius_ratio:.3g} < {settings.INRADIUS_WARN}")
        if q.min_edge_ratio < settings.EDGE_RATIO_WARN:
            warnings.append(f"elemento {e}: arista relativa {q.min_edge_ratio:.3g} < {settings.EDGE_RATIO_WARN}")

    for msg in warnings:
        logger.warning(msg)
    if diagnostics:
        logger.error("Malla con %d defectos estructurales", len(diagnostics))
    return QualityReport(
        elements=qualities,
        h=mesh_size(mesh),
        n_elements=mesh.n_elements,
        diagnostics=diagnostics,
        warnings=warnings,
    )


def euler_characteristic(mesh: PolygonalMesh) -> int:
    """V − E + F con F contando solo polígonos (1 para el cuadrado)."""
    used = {v for cell in mesh.elements for v in cell}
    return len(used) - len(mesh_edges(mesh)) + mesh.n_elements


# ═══════════════════════════════════════════════════════════
#                      ARCHIVOS
# ═══════════════════════════════════════════════════════════
def write_mesh(mesh: PolygonalMesh, path: Path | str) -> Path:
    path = Path(path)
    lines = [f"{MESH_HEADER} {mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [" ".join(str(v) for v in (len(cell), *cell)) for cell in mesh.elements]
    path.write_text("\n".join(lines) + "\n")
    logger.info("Malla escrita en %s", path)
    return path


def read_mesh(path: Path | str) -> PolygonalMesh:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise MeshFormatError(f"{path}: archivo vacío")
    header = lines[0].split()
    if header[:2] != MESH_HEADER.split() or len(header) != 4:
        raise MeshFormatError(f"{path}: cabecera inválida '{lines[0]}'")
    try:
        n_vertices, n_elements = int(header[2]), int(header[3])
        if len(lines) != 1 + n_vertices + n_elements:
            raise MeshFormatError(
                f"{path}: se esperaban {n_vertices + n_elements} líneas, hay {len(lines) - 1}"
            )
        vertices = [tuple(float(t) for t in ln.split()) for ln in lines[1:1 + n_vertices]]
        elements = []
        for ln in lines[1 + n_vertices:]:
            tokens = [int(t) for t in ln.split()]
            if tokens[0] != len(tokens) - 1:
                raise MeshFormatError(f"{path}: conteo de vértices inconsistente en '{ln}'")
            elements.append(tokens[1:])
    except ValueError as exc:
        raise MeshFormatError(f"{path}: valor no numérico ({exc})") from exc
    if any(len(v) != 2 for v in vertices):
        raise MeshFormatError(f"{path}: cada vértice necesita dos coordenadas")
    return build_mesh(np.array(vertices), elements)
