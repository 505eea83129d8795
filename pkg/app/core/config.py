from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    LOG_LEVEL: str = "INFO"

    # Discretización
    VEM_ORDER: int = Field(default=1, ge=1, le=2)
    QUADRATURE_ORDER: Optional[int] = None   # None → 2k+2

    # Solvers
    GUMMEL_TOL: float = Field(default=1e-10, gt=0)
    GUMMEL_MAX_ITERS: int = Field(default=50, ge=1)
    LINEAR_TOL: float = Field(default=1e-10, gt=0)
    DENSE_THRESHOLD: int = 2000
    LINEAR_SOLVER: Literal["auto", "direct"] = "auto"

    # Cargas de las especies (q¹, q²)
    CHARGE_1: float = 1.0
    CHARGE_2: float = -1.0

    # Mallas
    SMOOTH_LLOYD_ITERS: int = 20
    INRADIUS_WARN: float = 0.05
    EDGE_RATIO_WARN: float = 0.02

    OUTPUT_DIR: str = "results"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="PNPVEM_", extra="ignore")


settings = Settings()
