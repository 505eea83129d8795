# app/services/voronoi_service.py
"""
Mallas de Voronoi recortadas al cuadrado unidad, con relajación de Lloyd
opcional (malla "suave").
"""
from __future__ import annotations

import logging
from typing import List, Set, Tuple

import numpy as np
from scipy.spatial import QhullError, Voronoi, cKDTree

from app.core.constants import VORONOI_MERGE_TOL
from app.schemas.mesh_schema import PolygonalMesh
from app.services.mesh_service import build_mesh, polygon_area_centroid

logger = logging.getLogger(__name__)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SEED_JITTER = 1e-9


# ─────────────────── recorte por semiplanos ────────────────────
def clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Sutherland–Hodgman: conserva {x : normal·x ≤ offset}."""
    if len(poly) == 0:
        return poly
    dist = poly @ normal - offset
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        dp, dq = dist[k], dist[(k + 1) % n]
        if dp <= 0.0:
            out.append(p)
        if (dp < 0.0 < dq) or (dq < 0.0 < dp):
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    return np.array(out).reshape(-1, 2)


def _neighbour_pairs(seeds: np.ndarray) -> List[Set[int]]:
    """Vecinos de Delaunay (aristas de Voronoi); todos contra todos si qhull no aplica."""
    n = len(seeds)
    neighbours: List[Set[int]] = [set() for _ in range(n)]
    if n <= 4:
        for i in range(n):
            neighbours[i] = set(range(n)) - {i}
        return neighbours
    try:
        vor = Voronoi(seeds, qhull_options="Qbb Qc Qz")
    except QhullError:
        logger.warning("Qhull falló con %d semillas; se usan todos los pares", n)
        for i in range(n):
            neighbours[i] = set(range(n)) - {i}
        return neighbours
    for a, b in vor.ridge_points:
        neighbours[a].add(int(b))
        neighbours[b].add(int(a))
    return neighbours


def voronoi_cells(seeds: np.ndarray) -> List[np.ndarray]:
    """Celda de cada semilla = cuadrado ∩ semiplanos de las mediatrices con sus vecinos."""
    cells = []
    for i, nbrs in enumerate(_neighbour_pairs(seeds)):
        poly = UNIT_SQUARE.copy()
        for j in sorted(nbrs):
            normal = seeds[j] - seeds[i]
            mid = 0.5 * (seeds[i] + seeds[j])
            poly = clip_halfplane(poly, normal, float(normal @ mid))
        cells.append(poly)
    return cells


# ─────────────────── semillas y Lloyd ────────────────────
def _dedupe_seeds(seeds: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rounds = 0
    while len(np.unique(seeds, axis=0)) < len(seeds):
        _, first = np.unique(seeds, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(len(seeds)), first)
        seeds[dup] = np.clip(seeds[dup] + rng.normal(scale=SEED_JITTER, size=(len(dup), 2)), 0.0, 1.0)
        rounds += 1
        logger.warning("%d semillas duplicadas; se perturbaron (ronda %d)", len(dup), rounds)
    return seeds


def lloyd_step(seeds: np.ndarray) -> np.ndarray:
    """Mueve cada semilla al centroide de su celda recortada."""
    return np.array([polygon_area_centroid(cell)[1] for cell in voronoi_cells(seeds)])


# ─────────────────── ensamblado conforme ────────────────────
def _merge_vertices(cells: List[np.ndarray], tol: float) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    points = np.vstack(cells)
    parent = np.arange(len(points))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in sorted(cKDTree(points).query_pairs(r=tol)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    roots = np.array([find(i) for i in range(len(points))])
    unique_roots, new_index = np.unique(roots, return_inverse=True)
    vertices = points[unique_roots]

    elements: List[Tuple[int, ...]] = []
    offset = 0
    for cell in cells:
        ids = new_index[offset:offset + len(cell)]
        offset += len(cell)
        cycle = [int(v) for k, v in enumerate(ids) if v != ids[k - 1]]
        if len(cycle) >= 3:
            elements.append(tuple(cycle))
        else:
            logger.warning("Celda degenerada descartada tras la fusión de vértices")
    return vertices, elements


def generate_voronoi(n_seeds: int, lloyd_iters: int = 0, rng_seed: int = 0) -> PolygonalMesh:
    if n_seeds < 1:
        raise ValueError("n_seeds debe ser ≥ 1")
    rng = np.random.default_rng(rng_seed)
    seeds = _dedupe_seeds(rng.random((n_seeds, 2)), rng)
    for _ in range(lloyd_iters):
        seeds = _dedupe_seeds(lloyd_step(seeds), rng)

    cells = voronoi_cells(seeds)
    tol = VORONOI_MERGE_TOL / np.sqrt(n_seeds)
    vertices, elements = _merge_vertices(cells, tol)
    mesh = build_mesh(vertices, elements)
    logger.info(
        "Voronoi %d semillas, %d iteraciones de Lloyd: %d elementos, %d vértices",
        n_seeds, lloyd_iters, mesh.n_elements, mesh.n_vertices,
    )
    return mesh
