# app/services/assembly_service.py
from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from app.core.config import settings
from app.schemas.mesh_schema import PolygonalMesh
from app.schemas.system_schema import DiscreteSpace, DofMap, SparseSystem
from app.schemas.vem_schema import LocalSpace
from app.services.mesh_service import mesh_edges
from app.services.quadrature_service import eval_basis, grad_basis
from app.services.vem_local_service import (
    build_dof_layout, build_projectors, local_matrices
)

logger = logging.getLogger(__name__)

MatrixSupplier = Callable[[int], np.ndarray]


# ═══════════════════════════════════════════════════════════
#                     NUMERACIÓN GLOBAL
# ═══════════════════════════════════════════════════════════
def build_dof_map(mesh: PolygonalMesh, k: int) -> DofMap:
    """
    Vértices primero, luego una media por arista (k=2) y una media interna por
    elemento (k=2). Las medias sobre aristas no dependen de la orientación, así
    que los elementos vecinos comparten el dof sin cambio de signo.
    """
    build_dof_layout(3, k)   # valida k
    nv = mesh.n_vertices
    mask = [bool(f) for f in mesh.boundary_vertex_flags]

    edge_ids: Dict[Tuple[int, int], int] = {}
    if k == 2:
        for key, owners in mesh_edges(mesh).items():
            edge_ids[key] = nv + len(edge_ids)
            mask.append(len(owners) == 1)
    n_edge = len(edge_ids)
    n_internal = mesh.n_elements if k == 2 else 0
    mask.extend([False] * n_internal)

    element_dofs = []
    for e, cell in enumerate(mesh.elements):
        dofs = list(cell)
        if k == 2:
            n = len(cell)
            dofs += [edge_ids[tuple(sorted((cell[i], cell[(i + 1) % n])))] for i in range(n)]
            dofs.append(nv + n_edge + e)
        element_dofs.append(np.array(dofs, dtype=np.int64))

    dirichlet = np.array(mask, dtype=bool)
    return DofMap(
        k=k,
        n_dofs=nv + n_edge + n_internal,
        n_vertex_dofs=nv,
        n_edge_dofs=n_edge,
        n_internal_dofs=n_internal,
        element_dofs=tuple(element_dofs),
        dirichlet_mask=dirichlet,
    )


# ═══════════════════════════════════════════════════════════
#                     ENSAMBLADO
# ═══════════════════════════════════════════════════════════
def assemble_matrix(dof_map: DofMap, supplier: MatrixSupplier) -> sp.csr_matrix:
    """Suma por dispersión de matrices locales (COO → CSR, duplicados sumados)."""
    rows, cols, vals = [], [], []
    for e, dofs in enumerate(dof_map.element_dofs):
        local = np.asarray(supplier(e))
        if local.shape != (len(dofs), len(dofs)):
            raise IndexError(f"Matriz local del elemento {e} con forma {local.shape}")
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(local.ravel())
    n = dof_map.n_dofs
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    matrix.eliminate_zeros()
    return matrix


def assemble_vector(dof_map: DofMap, supplier: Callable[[int], np.ndarray]) -> np.ndarray:
    out = np.zeros(dof_map.n_dofs)
    for e, dofs in enumerate(dof_map.element_dofs):
        np.add.at(out, dofs, supplier(e))
    return out


def restrict(dof_map: DofMap, matrix: sp.spmatrix, rhs: Optional[np.ndarray] = None) -> SparseSystem:
    """Eliminación simétrica de filas y columnas de Dirichlet (datos homogéneos)."""
    free = dof_map.free_dofs
    block = sp.csr_matrix(matrix)[free][:, free].tocsr()
    vector = np.zeros(len(free)) if rhs is None else np.asarray(rhs)[free]
    return SparseSystem(matrix=block, rhs=vector)


def extend(dof_map: DofMap, free_values: np.ndarray) -> np.ndarray:
    """Vector global con ceros exactos en los dofs de Dirichlet."""
    out = np.zeros(dof_map.n_dofs)
    out[dof_map.free_dofs] = free_values
    return out


# ═══════════════════════════════════════════════════════════
#                 OPERADOR DE ACOPLAMIENTO b_{i,h}
# ═══════════════════════════════════════════════════════════
class CouplingOperator:
    """
    Bloque libre de b_{i,h}(·, ψ_h, ·) como función lineal de ψ_h:
    los datos CSR del patrón fijo se obtienen con un solo producto disperso
    data = R ψ, sin reensamblar elemento por elemento.
    """

    def __init__(self, dof_map: DofMap, tensors: List[np.ndarray]) -> None:
        free_index = dof_map.free_index()
        n_free = dof_map.n_free
        keys, cols, vals = [], [], []
        for dofs, tensor in zip(dof_map.element_dofs, tensors):
            local_free = free_index[dofs]
            r_idx, c_idx, j_idx = np.nonzero(
                (local_free[:, None, None] >= 0) & (local_free[None, :, None] >= 0)
                & np.ones((1, 1, len(dofs)), dtype=bool)
            )
            keys.append(local_free[r_idx] * n_free + local_free[c_idx])
            cols.append(dofs[j_idx])
            vals.append(tensor[r_idx, c_idx, j_idx])

        all_keys = np.concatenate(keys) if keys else np.zeros(0, dtype=np.int64)
        pattern, position = np.unique(all_keys, return_inverse=True)
        self.shape = (n_free, n_free)
        self.indices = (pattern % max(n_free, 1)).astype(np.int64)
        self.indptr = np.searchsorted(pattern // max(n_free, 1), np.arange(n_free + 1)).astype(np.int64)
        self.R = sp.coo_matrix(
            (np.concatenate(vals) if vals else np.zeros(0), (position, np.concatenate(cols) if cols else position)),
            shape=(len(pattern), dof_map.n_dofs),
        ).tocsr()

    def matrix(self, psi: np.ndarray, q_i: float) -> sp.csr_matrix:
        data = q_i * (self.R @ psi)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


# ═══════════════════════════════════════════════════════════
#                 ESPACIO DISCRETO GLOBAL
# ═══════════════════════════════════════════════════════════
def _scatter_rows(dof_map: DofMap, blocks: List[np.ndarray], n_rows: int) -> sp.csr_matrix:
    """Apila bloques (n_q_e × N_e) por filas consecutivas y columnas globales."""
    rows, cols, vals = [], [], []
    offset = 0
    for dofs, block in zip(dof_map.element_dofs, blocks):
        nq = block.shape[0]
        rows.append(np.repeat(np.arange(offset, offset + nq), len(dofs)))
        cols.append(np.tile(dofs, nq))
        vals.append(block.ravel())
        offset += nq
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, dof_map.n_dofs),
    ).tocsr()


def build_local_spaces(mesh: PolygonalMesh, k: int, order: Optional[int] = None) -> List[LocalSpace]:
    order = order or settings.QUADRATURE_ORDER
    return [build_projectors(mesh.element_vertices(e), k, order, element=e) for e in range(mesh.n_elements)]


def build_discrete_space(mesh: PolygonalMesh, k: int, order: Optional[int] = None) -> DiscreteSpace:
    dof_map = build_dof_map(mesh, k)
    spaces = build_local_spaces(mesh, k, order)
    logger.info("Espacio VEM k=%d: %d dofs (%d libres)", k, dof_map.n_dofs, dof_map.n_free)

    bundles = [local_matrices(s) for s in spaces]

    points = np.vstack([s.quadrature.points for s in spaces])
    weights = np.concatenate([s.quadrature.weights for s in spaces])
    n_q = len(weights)

    load_blocks = [b.load_weights[:, None] * b.load_values for b in bundles]
    value_blocks, gx_blocks, gy_blocks = [], [], []
    for s in spaces:
        vals = eval_basis(s.basis, s.quadrature.points) @ s.pi_nabla
        grads = np.einsum("qad,aj->dqj", grad_basis(s.basis, s.quadrature.points), s.pi_nabla)
        value_blocks.append(vals)
        gx_blocks.append(grads[0])
        gy_blocks.append(grads[1])

    return DiscreteSpace(
        mesh=mesh,
        k=k,
        dof_map=dof_map,
        spaces=spaces,
        stiffness=assemble_matrix(dof_map, lambda e: bundles[e].A),
        mass=assemble_matrix(dof_map, lambda e: bundles[e].M),
        projected_mass=assemble_matrix(dof_map, lambda e: bundles[e].M_km1),
        load_operator=_scatter_rows(dof_map, load_blocks, n_q).T.tocsr(),
        quad_points=points,
        quad_weights=weights,
        value_operator=_scatter_rows(dof_map, value_blocks, n_q),
        grad_operators=(_scatter_rows(dof_map, gx_blocks, n_q), _scatter_rows(dof_map, gy_blocks, n_q)),
        coupling=CouplingOperator(dof_map, [b.coupling for b in bundles]),
    )


def assemble_load(space: DiscreteSpace, g, t: float) -> np.ndarray:
    """(g_h, v) global: ∫ g Π⁰_k φ_r por cuadratura de elemento."""
    x, y = space.quad_points[:, 0], space.quad_points[:, 1]
    samples = np.broadcast_to(np.asarray(g(t, x, y), dtype=float), x.shape)
    return space.load_operator @ samples
