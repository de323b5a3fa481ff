"""
Configuration parameters for the RRESM stereo pipeline
"""

import os


def env_int(name: str, default: int, minimum: int = 1) -> int:
    """Integer environment setting; unparsable values fall back to `default`."""
    try:
        return max(minimum, int(os.environ.get(name, default)))
    except ValueError:
        return default


def env_float(name: str, default: float) -> float:
    try:
        return float(os.environ.get(name, default))
    except ValueError:
        return default


# Output locations - resolved against the project root unless overridden
_script_dir = os.path.dirname(os.path.abspath(__file__))
_project_root = os.path.dirname(_script_dir)
_default_output_dir = os.path.join(_project_root, "outputs")

OUTPUT_DIR = os.environ.get("RRESM_OUTPUT_DIR", _default_output_dir)
# Unset means "<output dir>/rresm.ckpt", resolved per run
CHECKPOINT_FILE = os.environ.get("RRESM_CHECKPOINT")
CHECKPOINT_NAME = "rresm.ckpt"

# Parallelism cap for BLAS, directional scans and sample loading
THREADS = env_int("RRESM_THREADS", 1)

# Logging
LOG_LEVEL = os.environ.get("RRESM_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Numerics
DEPTH_EPS_PX = 1e-6  # disparities at or below this are invalid for depth
IMAGE_MULTIPLE = 16  # H and W must be divisible by this

# Benchmarking
BENCH_WARMUP_RUNS = 3
BENCH_MIN_ITERS = 10

# Error map rendering
ERROR_MAP_SCALE_PX = env_float("RRESM_ERROR_MAP_SCALE", 8.0)
