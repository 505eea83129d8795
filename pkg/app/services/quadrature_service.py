# app/services/quadrature_service.py
from __future__ import annotations

import functools
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.core.exceptions import ElementQualityError
from app.schemas.mesh_schema import ElementGeometry
from app.schemas.quadrature_schema import QuadratureRule, ScaledMonomialBasis
from app.services.mesh_service import chebyshev_kernel, point_in_kernel, polygon_geometry


def default_order(k: int) -> int:
    """Orden de volumen por defecto: 2k+2."""
    return 2 * k + 2


# ─────────────────── reglas de referencia ────────────────────
@functools.lru_cache(maxsize=32)
def gauss_legendre_unit(n_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre en [0,1]."""
    x, w = leggauss(n_points)
    return 0.5 * (x + 1.0), 0.5 * w


@functools.lru_cache(maxsize=32)
def reference_triangle_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Producto cónico de Gauss sobre el triángulo (0,0),(1,0),(0,1):
    (ξ, η) = (u, v(1−u)), jacobiano (1−u). Pesos positivos, exacta hasta `order`.
    """
    m = order // 2 + 1
    u, wu = gauss_legendre_unit(m + 1)   # un punto extra absorbe el factor (1−u)
    v, wv = gauss_legendre_unit(m)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu * (1.0 - u), wv)
    points = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    return points, ww.ravel()


# ─────────────────── aristas ────────────────────
def edge_quadrature(a: np.ndarray, b: np.ndarray, order: int) -> QuadratureRule:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    s, w = gauss_legendre_unit(order // 2 + 1)
    return QuadratureRule(points=a + np.outer(s, b - a), weights=w * length, order=order)


# ─────────────────── polígonos ────────────────────
def fan_point(pts: np.ndarray, geometry: ElementGeometry) -> np.ndarray:
    """Centroide si ve toda la frontera; si no, el centro de Chebyshev del núcleo."""
    centroid = np.array(geometry.centroid)
    if point_in_kernel(pts, centroid, tol=1e-12 * geometry.diameter):
        return centroid
    center, radius = chebyshev_kernel(pts)
    if center is None or radius <= 1e-12 * geometry.diameter:
        raise ElementQualityError("Elemento sin punto interior para la triangulación en abanico")
    return center


def polygon_quadrature(
    pts: np.ndarray,
    order: int,
    geometry: Optional[ElementGeometry] = None,
) -> QuadratureRule:
    """Triangulación en abanico desde un punto del núcleo + regla de Gauss por triángulo."""
    pts = np.asarray(pts, dtype=float)
    geometry = geometry or polygon_geometry(pts)
    c = fan_point(pts, geometry)

    a = pts - c
    b = np.roll(pts, -1, axis=0) - c
    twice_area = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if np.any(twice_area <= 0.0):
        raise ElementQualityError("Triángulo del abanico con área no positiva")

    ref_pts, ref_w = reference_triangle_rule(order)
    # x = c + ξ a_i + η b_i para cada triángulo i
    points = c + ref_pts[None, :, 0:1] * a[:, None, :] + ref_pts[None, :, 1:2] * b[:, None, :]
    weights = twice_area[:, None] * ref_w[None, :]
    return QuadratureRule(points=points.reshape(-1, 2), weights=weights.ravel(), order=order)


# ─────────────────── base de monomios escalados ────────────────────
def scaled_monomials(geometry: ElementGeometry, degree: int) -> ScaledMonomialBasis:
    return ScaledMonomialBasis(centroid=geometry.centroid, diameter=geometry.diameter, degree=degree)


def _scaled_coords(basis: ScaledMonomialBasis, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(points)
    return (pts[:, 0] - basis.centroid[0]) / basis.diameter, (pts[:, 1] - basis.centroid[1]) / basis.diameter


def eval_basis(basis: ScaledMonomialBasis, points: np.ndarray) -> np.ndarray:
    """Valores (n_points, n_k)."""
    xb, yb = _scaled_coords(basis, points)
    return np.column_stack([xb ** a * yb ** b for a, b in basis.exponents])


def grad_basis(basis: ScaledMonomialBasis, points: np.ndarray) -> np.ndarray:
    """Gradientes (n_points, n_k, 2)."""
    xb, yb = _scaled_coords(basis, points)
    h = basis.diameter
    zeros = np.zeros_like(xb)
    gx = [a * xb ** (a - 1) * yb ** b / h if a > 0 else zeros for a, b in basis.exponents]
    gy = [b * xb ** a * yb ** (b - 1) / h if b > 0 else zeros for a, b in basis.exponents]
    return np.stack([np.column_stack(gx), np.column_stack(gy)], axis=-1)
