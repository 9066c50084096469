"""
wgfm - Configuration Settings
"""
import os
from dataclasses import dataclass
from dotenv import load_dotenv

load_dotenv()


@dataclass
class Settings:
    """Process settings loaded from environment variables."""

    # Parallelism (0 = one worker per CPU, capped)
    threads: int = int(os.getenv("WGFM_THREADS", "0"))

    # Output
    output_dir: str = os.getenv("WGFM_OUTPUT_DIR", "runs")
    log_level: str = os.getenv("WGFM_LOG_LEVEL", "INFO")

    # Verification thresholds
    tol_dispersion: float = float(os.getenv("WGFM_TOL_DISPERSION", "1e-12"))
    tol_factorization: float = float(os.getenv("WGFM_TOL_FACTORIZATION", "2e-2"))
    tol_psf: float = float(os.getenv("WGFM_TOL_PSF", "1e-8"))
    tol_probe: float = float(os.getenv("WGFM_TOL_PROBE", "1e-8"))
    tol_eigen: float = float(os.getenv("WGFM_TOL_EIGEN", "1e-10"))
    tol_hermitian: float = float(os.getenv("WGFM_TOL_HERMITIAN", "1e-15"))

    # Imaging defaults
    default_epsilon: float = 0.01
    default_rho: float = 0.01
    default_noise: float = 0.05

    # Far-field tail bound required at the nearest source point
    tail_tolerance: float = 1e-6

    @property
    def max_workers(self) -> int:
        """Worker cap for thread pools."""
        if self.threads > 0:
            return self.threads
        return min(8, os.cpu_count() or 1)


settings = Settings()
