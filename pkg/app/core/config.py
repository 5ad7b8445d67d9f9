"""Application settings loaded from environment variables."""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    app_name: str = "urban-fno"
    app_version: str = "0.1.0"
    run_root: str = "runs"
    # Worker count handed to scipy.fft; recorded next to every artifact.
    threads: int = 1
    field_cache_size: int = 64  # decoded field files kept by WindowDataset
    metrics_enabled: bool = False
    metrics_host: str = "0.0.0.0"
    metrics_port: int = 9500
    # Desk-scale solver defaults that the CLI may override per run
    solver_progress_every: int = 50
    pressure_tolerance: float = 1e-4
    pressure_max_iters: int = 400
    bench_warmup: int = 2

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()

__all__ = ["settings", "Settings"]
