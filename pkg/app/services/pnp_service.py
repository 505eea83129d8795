# app/services/pnp_service.py
"""
Esquema totalmente discreto: Euler implícito en el tiempo y desacople de
Gummel (Poisson, luego Nernst–Planck por especie) en cada paso.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from app.core.constants import STEP_LOG_COLUMNS
from app.core.exceptions import GummelNonConvergenceError
from app.schemas.system_schema import DiscreteSpace, PNPState, SolverConfig, StepRecord, TimeLoopResult
from app.services.assembly_service import assemble_load, extend
from app.services.manufactured_service import ManufacturedCase, interpolate_state
from app.services.solver_service import LinearSolver, relative_residual

logger = logging.getLogger(__name__)

ScalarField = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

STEP_TOL = 1e-9


def _free_block(matrix: sp.spmatrix, free: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(matrix)[free][:, free].tocsr()


class PNPProblem:
    """
    Operadores globales restringidos a los dofs libres y las fuentes del
    problema. La matriz de Poisson es constante: su factorización (o su
    precondicionador) se reutiliza en todos los pasos.
    """

    def __init__(
        self,
        space: DiscreteSpace,
        config: SolverConfig,
        f: Optional[ScalarField] = None,
        F: Tuple[Optional[ScalarField], Optional[ScalarField]] = (None, None),
    ) -> None:
        self.space = space
        self.config = config
        self.f = f
        self.F = tuple(F)
        self.free = space.dof_map.free_dofs

        self.A = _free_block(space.stiffness, self.free)
        self.M = _free_block(space.mass, self.free)
        self.P = _free_block(space.projected_mass, self.free)
        self._poisson = self._solver(self.A, symmetric=True)
        self._np_base: Dict[float, sp.csr_matrix] = {}

    @classmethod
    def from_case(cls, space: DiscreteSpace, config: SolverConfig, case: ManufacturedCase) -> "PNPProblem":
        return cls(space, config, f=case.source_f, F=(case.source(1), case.source(2)))

    def _solver(self, matrix: sp.spmatrix, symmetric: bool) -> LinearSolver:
        return LinearSolver(
            matrix,
            symmetric,
            tol=self.config.linear_tol,
            dense_threshold=self.config.dense_threshold,
            method=self.config.linear_solver,
        )

    def _load(self, g: Optional[ScalarField], t: float) -> np.ndarray:
        if g is None:
            return np.zeros(len(self.free))
        return assemble_load(self.space, g, t)[self.free]

    def _np_matrix(self, i: int, phi_full: np.ndarray, tau: float) -> sp.csr_matrix:
        if tau not in self._np_base:
            self._np_base[tau] = (self.M / tau + self.A).tocsr()
        return (self._np_base[tau] + self.space.coupling.matrix(phi_full, self.config.q[i - 1])).tocsr()

    # ------------- bloques libres ------------- #
    def _poisson_rhs(self, p_free: Sequence[np.ndarray], load_f: np.ndarray) -> np.ndarray:
        rhs = load_f.copy()
        for q_i, p in zip(self.config.q, p_free):
            rhs += q_i * (self.P @ p)
        return rhs

    def _np_rhs(self, p_prev_free: np.ndarray, load_F: np.ndarray, tau: float) -> np.ndarray:
        return self.M @ p_prev_free / tau + load_F

    # ═══════════════════════════════════════════════════════════
    #                     SOLVES DE CADA ECUACIÓN
    # ═══════════════════════════════════════════════════════════
    def poisson_solve(self, p: Sequence[np.ndarray], t: float, load: Optional[np.ndarray] = None) -> np.ndarray:
        """a_h(φ, w) = (f_h, w) − b̃_h(p¹, p², w) en los dofs libres; `load` reutiliza (f_h, ·) ya ensamblada."""
        load = self._load(self.f, t) if load is None else load
        rhs = self._poisson_rhs([np.asarray(v)[self.free] for v in p], load)
        return extend(self.space.dof_map, self._poisson.solve(rhs))

    def np_solve(
        self,
        i: int,
        p_prev: np.ndarray,
        phi: np.ndarray,
        t: float,
        tau: float,
        x0: Optional[np.ndarray] = None,
        load: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """(M/τ + A + K_i(φ)) p = M p_prev/τ + (F^i_h, ·)."""
        load = self._load(self.F[i - 1], t) if load is None else load
        matrix = self._np_matrix(i, phi, tau)
        rhs = self._np_rhs(np.asarray(p_prev)[self.free], load, tau)
        guess = None if x0 is None else np.asarray(x0)[self.free]
        solution = self._solver(matrix, symmetric=False).solve(rhs, guess)
        return extend(self.space.dof_map, solution)

    # ═══════════════════════════════════════════════════════════
    #                     PASO DE GUMMEL
    # ═══════════════════════════════════════════════════════════
    def gummel_time_step(self, state: PNPState, tau: float, step: int = 0) -> Tuple[PNPState, StepRecord]:
        t = state.t + tau
        free, cfg = self.free, self.config
        load_f = self._load(self.f, t)
        load_F = [self._load(g, t) for g in self.F]
        p_iter = list(state.p)
        history: List[float] = []

        for _ in range(cfg.gummel_max_iters):
            phi = self.poisson_solve(p_iter, t, load=load_f)
            p_new = [
                self.np_solve(i, state.p[i - 1], phi, t, tau, x0=p_iter[i - 1], load=load_F[i - 1])
                for i in (1, 2)
            ]
            increment = max(
                float(np.max(np.abs(a[free] - b[free]))) if len(free) else 0.0
                for a, b in zip(p_new, p_iter)
            )
            history.append(increment)
            p_iter = p_new
            logger.debug("Paso %d, Gummel %d: incremento %.3e", step, len(history), increment)
            if increment < cfg.gummel_tol:
                break
        else:
            raise GummelNonConvergenceError(
                f"Gummel sin convergencia en el paso {step} (t={t:.6g}) tras {cfg.gummel_max_iters} iteraciones",
                history=history,
            )

        # residuos del sistema acoplado con el triple convergido
        p_free = [v[free] for v in p_iter]
        poisson_rhs = self._poisson_rhs(p_free, load_f)
        residuals = [relative_residual(self.A, phi[free], poisson_rhs)]
        for i in (1, 2):
            matrix = self._np_matrix(i, phi, tau)
            rhs = self._np_rhs(state.p[i - 1][free], load_F[i - 1], tau)
            residuals.append(relative_residual(matrix, p_free[i - 1], rhs))

        new_state = PNPState(phi=phi, p=tuple(p_iter), t=t)
        record = StepRecord(
            step=step,
            t=t,
            gummel_iters=len(history),
            poisson_residual=residuals[0],
            np1_residual=residuals[1],
            np2_residual=residuals[2],
        )
        return new_state, record


# ═══════════════════════════════════════════════════════════
#                     BUCLE TEMPORAL
# ═══════════════════════════════════════════════════════════
def time_steps(T: float, tau: float) -> List[float]:
    """N pasos de τ; si T/τ no es entero (tolerancia 1e−9) el último se acorta."""
    ratio = T / tau
    n = round(ratio)
    if abs(ratio - n) <= STEP_TOL * max(1.0, ratio):
        return [T / n] * n if n else [T]
    n = math.ceil(ratio)
    last = T - (n - 1) * tau
    logger.warning("T/τ = %.6g no es entero; el último paso se acorta a %.3e", ratio, last)
    return [tau] * (n - 1) + [last]


def initial_state(space: DiscreteSpace, case: ManufacturedCase, t: float = 0.0) -> PNPState:
    phi, p1, p2 = interpolate_state(space, case, t)
    return PNPState(phi=phi, p=(p1, p2), t=t)


def write_step_log(records: Sequence[StepRecord], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.model_dump() for r in records], columns=STEP_LOG_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def run_time_loop(
    space: DiscreteSpace,
    config: SolverConfig,
    case: ManufacturedCase,
    step_log: Optional[Path | str] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> TimeLoopResult:
    """Integra de 0 a T desde la interpolación de los datos iniciales exactos."""
    problem = PNPProblem.from_case(space, config, case)
    state = initial_state(space, case, 0.0)
    steps = time_steps(config.T, config.tau)
    logger.info("Bucle temporal: %d pasos, τ=%.3e, %d dofs libres", len(steps), steps[0], len(problem.free))

    records: List[StepRecord] = []
    for n, tau in enumerate(steps, start=1):
        state, record = problem.gummel_time_step(state, tau, step=n)
        records.append(record)
        if progress is not None:
            progress(n, len(steps))

    if steps:
        # la suma de pasos puede diferir de T en redondeo
        state = PNPState(phi=state.phi, p=state.p, t=config.T)
    if step_log is not None:
        write_step_log(records, step_log)
        logger.info("Registro de pasos escrito en %s", step_log)
    return TimeLoopResult(state=state, steps=records)
