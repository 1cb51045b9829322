"""
Configuration management for peakgate
Loads environment variables and provides typed configuration
"""

from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_LEVEL_ALIASES = {
    "error": "ERROR",
    "warn": "WARNING",
    "warning": "WARNING",
    "info": "INFO",
    "debug": "DEBUG",
}


class Settings(BaseSettings):
    """Solver settings loaded from PEAKGATE_* environment variables"""

    model_config = SettingsConfigDict(
        env_prefix="PEAKGATE_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # ==========================================
    # LOGGING CONFIGURATION
    # ==========================================
    log: str = "warn"
    log_format: str = "text"
    log_file: Optional[str] = None
    log_rotation: str = "10 MB"

    # ==========================================
    # NUMERICAL TOLERANCES
    # ==========================================
    tol: float = 1e-12
    inverse_tol: float = 1e-9
    bridge_check_points: int = 101

    # ==========================================
    # SOLVER LIMITS
    # ==========================================
    guard: int = 10_000
    escape_scan_cap: int = 1_000_000

    # ==========================================
    # RATIO OPERATOR SAMPLING
    # ==========================================
    seed: int = 0
    ratio_samples: int = 100_000
    ratio_refinement_rounds: int = 3
    ratio_refinement_points: int = 1_000
    ratio_refinement_shrink: float = 0.1

    # ==========================================
    # PERFORMANCE TUNING
    # ==========================================
    max_workers: int = 4
    sample_chunk_size: int = 25_000

    @field_validator("log")
    @classmethod
    def validate_log(cls, v: str) -> str:
        """Accept error|warn|info|debug (case-insensitive)"""
        key = v.strip().lower()
        if key not in LOG_LEVEL_ALIASES:
            valid = ", ".join(["error", "warn", "info", "debug"])
            raise ValueError(f"PEAKGATE_LOG must be one of: {valid}")
        return key

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        if v.lower() not in ("text", "json"):
            raise ValueError("PEAKGATE_LOG_FORMAT must be 'text' or 'json'")
        return v.lower()

    @field_validator("tol", "inverse_tol", "ratio_refinement_shrink")
    @classmethod
    def validate_positive_float(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("tolerances and shrink factors must be positive")
        return v

    @field_validator("max_workers", "sample_chunk_size", "bridge_check_points", "escape_scan_cap")
    @classmethod
    def validate_positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError("worker counts and sizes must be at least 1")
        return v

    @property
    def log_level(self) -> str:
        """Logging level name understood by loguru"""
        return LOG_LEVEL_ALIASES[self.log]


# Global settings instance
settings = Settings()


