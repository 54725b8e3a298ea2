"""
Configuration module for the voxup toolkit.
Handles environment variables, run defaults and console logging.
"""

import os
import sys
from dataclasses import dataclass
from typing import Tuple

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


LOG_LEVELS = {"DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40}


@dataclass
class PathConfig:
    """File path configurations."""
    output_dir: str = "./data/output"
    input_dir: str = "./data/input"


@dataclass
class RunConfigDefaults:
    """Defaults shared by every CLI run."""
    seed: int = 0
    threads: int = 1
    log_level: str = "INFO"


@dataclass
class RenderDefaults:
    """Camera and splat defaults for renders and partition runs."""
    width: int = 512
    height: int = 512
    splat_radius_px: float = 3.0
    fov_degrees: float = 50.0
    camera_distance: float = 2.0
    near: float = 0.1
    far: float = 10.0


@dataclass
class MemoryDefaults:
    """Default per-item byte costs for the memory model."""
    # 64 float32 latent channels per voxel
    bytes_per_voxel_feature: int = 256
    # 32 Gaussians per voxel, 14 float32 parameters each
    bytes_per_splat: int = 1792
    overhead_bytes: int = 0


@dataclass
class SelftestConfig:
    """Sizes used by the selftest invariant suite."""
    containment_resolutions: Tuple[int, ...] = (8, 16, 32, 64)
    oracle_resolutions: Tuple[int, ...] = (4, 8, 16)
    redundancy_resolution: int = 64
    redundancy_band: Tuple[float, float] = (0.50, 0.80)
    redundancy_tolerance: float = 0.05
    alignment_grid_resolution: int = 64
    alignment_shuffles: int = 100
    stitch_resolution: int = 32
    stitch_image_size: int = 512
    stitch_cameras: int = 8
    stitch_tilings: Tuple[int, ...] = (2, 4)
    negative_control_rate: float = 0.9
    surrogate_beta: float = 50.0
    surrogate_min_recall: float = 0.95
    bench_resolution: int = 64
    bench_cameras: int = 4


@dataclass
class QuickSelftestConfig(SelftestConfig):
    """Reduced sizes for development runs of the selftest."""
    containment_resolutions: Tuple[int, ...] = (8, 16)
    oracle_resolutions: Tuple[int, ...] = (4, 8)
    redundancy_resolution: int = 32
    alignment_shuffles: int = 10
    stitch_resolution: int = 16
    stitch_image_size: int = 128
    stitch_cameras: int = 2
    bench_resolution: int = 32
    bench_cameras: int = 2


class Config:
    """Main configuration class for the voxup toolkit."""

    def __init__(self):
        # Path Configuration
        self.paths = PathConfig(
            output_dir=os.getenv("VOXUP_OUT_DIR", PathConfig.output_dir),
        )

        # Run defaults
        self.run = RunConfigDefaults(
            seed=_env_int("VOXUP_SEED", RunConfigDefaults.seed),
            threads=_env_int("VOXUP_THREADS", RunConfigDefaults.threads),
            log_level=os.getenv("VOXUP_LOG_LEVEL", RunConfigDefaults.log_level).upper(),
        )

        self.render = RenderDefaults()
        self.memory = MemoryDefaults()
        self.selftest = SelftestConfig()
        self.quick_selftest = QuickSelftestConfig()

    def validate(self) -> bool:
        """Validate that the configured values are usable."""
        from .errors import ConfigError

        problems = []
        if self.run.threads < 1:
            problems.append(f"VOXUP_THREADS must be >= 1 (got {self.run.threads})")
        if self.run.seed < 0:
            problems.append(f"VOXUP_SEED must be >= 0 (got {self.run.seed})")
        if self.run.log_level not in LOG_LEVELS:
            problems.append(f"VOXUP_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")

        if problems:
            raise ConfigError("; ".join(problems))

        return True


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return -1


def log(component: str, message: str, level: str = "INFO"):
    """Log a message to stderr, honoring VOXUP_LOG_LEVEL."""
    threshold = LOG_LEVELS.get(config.run.log_level, LOG_LEVELS["INFO"])
    if LOG_LEVELS.get(level, LOG_LEVELS["INFO"]) < threshold:
        return
    print(f"[{level}] [{component}] {message}", file=sys.stderr)


# Global configuration instance
config = Config()
