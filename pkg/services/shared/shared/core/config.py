"""Application configuration using pydantic-settings."""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Ambient settings loaded from environment variables or a ``.env`` file.

    Experiment parameters never come from here; they are read from the
    experiment config file and CLI flags only.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "Volterra Inclusion Lab"
    app_version: str = "1.0.0"
    environment: str = "local"
    log_level: str = "INFO"
    log_format: str = "json"  # json | console

    # Numerics defaults
    default_tol: float = 1e-10
    default_max_iter: int = 500
    default_p: float = 2.0
    diagonal_tol: float = 1e-12
    probe_radius: float = 2.0
    stall_window: int = 12

    # Runner
    output_dir: str = "runs"
    threads: int = 1
    csv_float_format: str = ".17g"


settings = Settings()
