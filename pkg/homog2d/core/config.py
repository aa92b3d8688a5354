"""
Process configuration powered by Pydantic Settings.
"""

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Centralized process configuration."""

    app_name: str = "homog2d"

    # Corrector cache; overrides the run config's cache_dir when set
    cache_dir: Path | None = Field(default=None, alias="HOMOG2D_CACHE")

    # Worker pool
    threads: int = Field(default=1, ge=1, alias="HOMOG2D_THREADS")

    # Krylov solvers
    max_iterations: int = Field(default=100_000, ge=1, alias="HOMOG2D_MAX_ITERATIONS")
    residual_log_every: int = 50
    krylov_restarts: int = Field(default=3, ge=0, alias="HOMOG2D_KRYLOV_RESTARTS")
    ilu_drop_tol: float = Field(default=1e-5, gt=0, alias="HOMOG2D_ILU_DROP_TOL")
    ilu_fill_factor: float = Field(default=20.0, ge=1, alias="HOMOG2D_ILU_FILL_FACTOR")

    # Observability
    log_level: str = Field(default="INFO", alias="HOMOG2D_LOG_LEVEL")

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore", populate_by_name=True
    )


@lru_cache
def get_settings() -> Settings:
    """Return a cached Settings instance."""
    return Settings()  # type: ignore[call-arg]
