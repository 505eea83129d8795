# app/services/study_service.py
"""
Estudio de convergencia: por nivel genera la malla, fija τ = h², integra
hasta T y mide e_{L²}, e_{H¹} de φ, p¹, p² contra la solución exacta.
"""
from __future__ import annotations

import logging
import math
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from numpy.linalg import LinAlgError
from tqdm import tqdm

from app.core.config import settings
from app.core.constants import FIELDS, STUDY_COLUMNS, STRUCTURED_KINDS
from app.core.exceptions import InvalidElementError, VemError
from app.schemas.mesh_schema import PolygonalMesh
from app.schemas.study_schema import ErrorRecord, FieldErrors, LevelFailure, StudyConfig, StudyResult
from app.schemas.system_schema import DiscreteSpace, PNPState, SolverConfig
from app.services.assembly_service import build_discrete_space
from app.services.manufactured_service import ManufacturedCase, check_sources
from app.services.mesh_service import generate_structured, mesh_size, validate
from app.services.plot_service import plot_study
from app.services.pnp_service import run_time_loop
from app.services.voronoi_service import generate_voronoi

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════
#                     NORMAS DE ERROR
# ═══════════════════════════════════════════════════════════
def compute_errors(
    space: DiscreteSpace,
    state: PNPState,
    case: ManufacturedCase,
    t: float,
    relative: bool = False,
) -> Dict[str, FieldErrors]:
    """
    ‖u − Π∇u_h‖ y |u − Π∇u_h|_1 sumados elemento por elemento con la
    cuadratura de volumen. Con `relative` se dividen por ‖u‖ y |u|_1.
    """
    x, y = space.quad_points[:, 0], space.quad_points[:, 1]
    w = space.quad_weights
    gx_op, gy_op = space.grad_operators
    vectors = dict(zip(FIELDS, (state.phi, *state.p)))

    out: Dict[str, FieldErrors] = {}
    for name in FIELDS:
        u = case.value(name, t, x, y)
        ux, uy = case.gradient(name, t, x, y)
        uh = vectors[name]
        e0 = math.sqrt(float(w @ (u - space.value_operator @ uh) ** 2))
        e1 = math.sqrt(float(w @ ((ux - gx_op @ uh) ** 2 + (uy - gy_op @ uh) ** 2)))
        if relative:
            n0 = math.sqrt(float(w @ u ** 2))
            n1 = math.sqrt(float(w @ (ux ** 2 + uy ** 2)))
            e0 = e0 / n0 if n0 > 0 else e0
            e1 = e1 / n1 if n1 > 0 else e1
        out[name] = FieldErrors(eL2=e0, eH1=e1)
    return out


def observed_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> Optional[float]:
    """log(e_i/e_{i+1}) / log(h_i/h_{i+1}); None si algún error es cero o h no cambia."""
    if e_coarse <= 0 or e_fine <= 0 or h_coarse == h_fine:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


# ═══════════════════════════════════════════════════════════
#                     NIVELES
# ═══════════════════════════════════════════════════════════
def make_mesh(kind: str, n: int, rng_seed: int = 0) -> PolygonalMesh:
    """Malla del nivel n; en las familias Voronoi el nivel n usa n² semillas."""
    if kind in STRUCTURED_KINDS:
        return generate_structured(kind, n)
    if kind == "voronoi":
        return generate_voronoi(n * n, 0, rng_seed)
    if kind == "voronoi-smooth":
        return generate_voronoi(n * n, settings.SMOOTH_LLOYD_ITERS, rng_seed)
    raise ValueError(f"Familia de malla desconocida '{kind}'")


def time_step_for(config: StudyConfig, h: float) -> float:
    """τ = h² (o el τ fijo) redondeado para que T/τ sea entero."""
    tau = h * h if config.tau_rule == "h2" else float(config.tau_rule)
    n_steps = max(1, round(config.T / tau))
    return config.T / n_steps


def _attach_orders(records: List[ErrorRecord]) -> None:
    by_field: Dict[str, List[ErrorRecord]] = {}
    for r in records:
        by_field.setdefault(r.field, []).append(r)
    for series in by_field.values():
        for coarse, fine in zip(series, series[1:]):
            fine.order_L2 = observed_order(coarse.eL2, fine.eL2, coarse.h, fine.h)
            fine.order_H1 = observed_order(coarse.eH1, fine.eH1, coarse.h, fine.h)


def write_study_csv(records: Sequence[ErrorRecord], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.model_dump() for r in records], columns=STUDY_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def run_level(config: StudyConfig, level: int, case: ManufacturedCase) -> List[ErrorRecord]:
    start = time.perf_counter()
    mesh = make_mesh(config.mesh_kind, level, config.rng_seed)
    report = validate(mesh)
    if not report.structurally_valid:
        raise InvalidElementError(f"Malla con defectos estructurales: {report.diagnostics[:3]}")

    space = build_discrete_space(mesh, config.k)
    h = mesh_size(mesh)
    solver = SolverConfig(tau=time_step_for(config, h), T=config.T, q=case.q)
    step_log = config.out_dir / f"steps_{config.mesh_kind}_{level}.csv"
    result = run_time_loop(space, solver, case, step_log=step_log)
    errors = compute_errors(space, result.state, case, config.T, config.relative)
    seconds = time.perf_counter() - start if config.timings else None

    logger.info(
        "Nivel %d (%s): h=%.4g, NE=%d, e_L2(φ)=%.3e, e_H1(φ)=%.3e, %d pasos",
        level, config.mesh_kind, h, mesh.n_elements, errors["phi"].eL2, errors["phi"].eH1, len(result.steps),
    )
    return [
        ErrorRecord(
            level=level, h=h, NE=mesh.n_elements, field=name,
            eL2=errors[name].eL2, eH1=errors[name].eH1, seconds=seconds,
        )
        for name in FIELDS
    ]


def run_study(config: StudyConfig, case: Optional[ManufacturedCase] = None) -> StudyResult:
    """
    Corre todos los niveles; un nivel que falla se registra y el estudio
    continúa. Escribe study.csv, study.svg y un registro de pasos por nivel.
    """
    case = case or ManufacturedCase()
    check_sources(case)
    config.out_dir.mkdir(parents=True, exist_ok=True)

    records: List[ErrorRecord] = []
    failures: List[LevelFailure] = []
    for level in tqdm(config.levels, desc=f"estudio {config.mesh_kind}", unit="nivel"):
        try:
            records.extend(run_level(config, level, case))
        except (VemError, LinAlgError, ValueError) as exc:
            logger.exception("Nivel %d falló: %s", level, exc)
            failures.append(LevelFailure(level=level, stage=type(exc).__name__, detail=str(exc)))

    _attach_orders(records)
    csv_path = write_study_csv(records, config.out_dir / "study.csv")
    plot_path = plot_study(records, config.out_dir / "study.svg", title=f"{config.mesh_kind}, k={config.k}")
    logger.info("Estudio escrito en %s (%d niveles, %d fallidos)", config.out_dir, len(config.levels), len(failures))
    return StudyResult(records=records, failures=failures, csv_path=csv_path, plot_path=plot_path)


def summarize(records: Sequence[ErrorRecord]) -> pd.DataFrame:
    """Tabla para imprimir en consola, sin la columna de tiempos."""
    frame = pd.DataFrame([r.model_dump() for r in records], columns=STUDY_COLUMNS)
    return frame.drop(columns=["seconds"])
