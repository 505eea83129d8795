from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from app.core.config import settings
from app.core.constants import MESH_KINDS, SUPPORTED_ORDERS


class StudyConfig(BaseModel):
    mesh_kind: str = "square"
    levels: List[int] = Field(default_factory=lambda: [8, 16, 32, 64], min_length=2)
    k: int = Field(default_factory=lambda: settings.VEM_ORDER)
    T: float = Field(default=1.0, gt=0)
    tau_rule: Union[Literal["h2"], float] = "h2"     # "h2" → τ = h², o un τ fijo
    rng_seed: int = 7
    out_dir: Path = Field(default_factory=lambda: Path(settings.OUTPUT_DIR))
    relative: bool = False
    timings: bool = True

    @field_validator("mesh_kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in MESH_KINDS:
            raise ValueError(f"Familia de malla desconocida '{value}' (opciones: {', '.join(MESH_KINDS)})")
        return value

    @field_validator("k")
    @classmethod
    def _supported_order(cls, value: int) -> int:
        if value not in SUPPORTED_ORDERS:
            raise ValueError(f"Orden k={value} no soportado")
        return value

    @field_validator("levels")
    @classmethod
    def _positive_levels(cls, value: List[int]) -> List[int]:
        if any(n < 1 for n in value):
            raise ValueError("Los niveles deben ser enteros ≥ 1")
        return value

    @field_validator("tau_rule")
    @classmethod
    def _positive_tau(cls, value):
        if not isinstance(value, str) and value <= 0:
            raise ValueError("τ debe ser positivo")
        return value


class FieldErrors(BaseModel):
    eL2: float = Field(ge=0)
    eH1: float = Field(ge=0)


class ErrorRecord(BaseModel):
    level: int
    h: float
    NE: int
    field: str
    eL2: float = Field(ge=0)
    eH1: float = Field(ge=0)
    order_L2: Optional[float] = None     # definido desde el segundo nivel
    order_H1: Optional[float] = None
    seconds: Optional[float] = None


class LevelFailure(BaseModel):
    level: int
    stage: str
    detail: str


class StudyResult(BaseModel):
    records: List[ErrorRecord] = []
    failures: List[LevelFailure] = []
    csv_path: Optional[Path] = None
    plot_path: Optional[Path] = None

    @property
    def completed(self) -> bool:
        return not self.failures
