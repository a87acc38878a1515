"""Configuration management for the Delaunay weighted test."""

import os
from pathlib import Path
from typing import Tuple
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _parse_alphas(raw: str) -> Tuple[float, ...]:
    """Parse a comma separated list of significance levels."""
    return tuple(float(part) for part in raw.split(",") if part.strip())


class Config:
    """Application configuration."""

    # Test defaults
    DEFAULT_ETA: float = float(os.getenv("DWTEST_ETA", "10"))
    DEFAULT_PERMUTATIONS: int = int(os.getenv("DWTEST_PERMUTATIONS", "200"))
    DEFAULT_ALPHAS: Tuple[float, ...] = _parse_alphas(
        os.getenv("DWTEST_ALPHAS", "0.01,0.05,0.10")
    )
    DEFAULT_SEED: int = int(os.getenv("DWTEST_SEED", "0"))

    # Simplex walk
    VISIT_FACTOR: int = int(os.getenv("DWTEST_VISIT_FACTOR", "64"))
    JITTER_RELATIVE: float = float(os.getenv("DWTEST_JITTER", "1e-9"))

    # Workers
    MAX_THREADS: int = int(os.getenv("DWTEST_THREADS", "1"))

    # Storage
    OUTPUT_DIR: Path = Path(os.getenv("DWTEST_OUTPUT_DIR", "./output"))

    # Logging
    LOG_LEVEL: str = os.getenv("DWTEST_LOG_LEVEL", "WARNING").upper()

    @classmethod
    def ensure_directories(cls) -> None:
        """Create the output directory if it doesn't exist."""
        cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)

