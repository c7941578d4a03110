from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class Settings(BaseSettings):
    # -----------------------------
    # Quadrature defaults
    # -----------------------------
    REGULAR_ORDER: int = 4
    SINGULAR_ORDER: int = 6
    SUBDIVISION: int = 2
    NEAR_FIELD_FACTOR: float = 2.0  # in panel diameters, measured from the panel centre

    # -----------------------------
    # Tolerances
    # -----------------------------
    MERGE_TOLERANCE: float = 1e-10  # relative to the shape scale
    RESIDUAL_TOLERANCE: float = 1e-10
    QUADRATURE_FLOOR: float = 1e-6  # relative density error treated as exact

    # -----------------------------
    # Assembly
    # -----------------------------
    ASSEMBLY_CHUNK_SIZE: int = 4_000_000  # kernel entries held in memory per far-field block

    # -----------------------------
    # Logging
    # -----------------------------
    LOG_LEVEL: str = "info"

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")


# -----------------------------
# Cached settings instance
# -----------------------------
@lru_cache()
def get_settings() -> Settings:
    return Settings()


settings = get_settings()
