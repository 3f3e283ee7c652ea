from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    # Parallel replications (RQL_THREADS)
    threads: int = 1

    # Simulation settings
    burn_in: int = 10_000
    max_events: int = 50_000_000
    stream_block: int = 1024

    # Ceilings for the regeneration and busy-period procedures
    tau_max_services: int = 10_000_000
    busy_ceiling: int = 100_000

    # Monte-Carlo settings
    confidence: float = 0.99

    # Numerical tolerances
    series_tol: float = 1e-13
    quad_tol: float = 1e-11
    switch_point: float = 20.0
    max_series_terms: int = 200_000

    # Acceptance thresholds
    ks_threshold: float = 0.02
    min_compare_samples: int = 10_000

    # Tail fitting windows
    critical_window: tuple[float, float] = (50.0, 500.0)
    offcritical_window: tuple[float, float] = (10.0, 50.0)
    tail_points: int = 50

    class Config:
        env_file = ".env"
        env_prefix = "RQL_"

settings = Settings()
