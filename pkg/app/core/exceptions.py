from typing import List, Optional


class VemError(Exception):
    """Error base del solver: `code` corto para máquinas y `detail` legible."""

    code = "vem_error"

    def __init__(self, detail: str, *, code: Optional[str] = None) -> None:
        super().__init__(detail)
        self.detail = detail
        if code is not None:
            self.code = code

    def __str__(self) -> str:
        return f"[{self.code}] {self.detail}"


class InvalidElementError(VemError):
    code = "invalid_element"


class ElementQualityError(VemError):
    code = "element_quality"


class UnsupportedOrderError(VemError):
    code = "unsupported_order"


class ProjectorSingularError(VemError):
    code = "projector_singular"


class MeshFormatError(VemError):
    code = "mesh_format"


class SourceGateError(VemError):
    code = "source_gate"


class SolverFailureError(VemError):
    code = "solver_failure"

    def __init__(self, detail: str, *, residual: float, iterations: int = 0) -> None:
        super().__init__(detail)
        self.residual = residual
        self.iterations = iterations


class GummelNonConvergenceError(VemError):
    code = "gummel_divergence"

    def __init__(self, detail: str, *, history: List[float]) -> None:
        super().__init__(detail)
        self.history = list(history)
