"""
Random-dot stereograms with exact ground truth.

The right image is a random-dot texture. Each left pixel copies the right
pixel `pattern[y, x]` columns to its left. Left pixels whose source column
falls off the image, or which lose a forward-warp collision to a pixel with
larger disparity (they are hidden in the right view), get fresh dots and are
marked invalid.
"""

from typing import Optional

import numpy as np

from src.config import IMAGE_MULTIPLE
from src.errors import ContractError, ShapeError
from src.models.stereo_models import Calibration, StereoPair, StereoSample

DEFAULT_CALIBRATION = Calibration(focal_px=100.0, baseline_mm=5.0)


def random_dots(rng: np.random.Generator, height: int, width: int, density: float = 0.5) -> np.ndarray:
    dots = (rng.random((height, width)) < density).astype(np.float32)
    return np.repeat(dots[None], 3, axis=0)


def occlusion_mask(pattern: np.ndarray) -> np.ndarray:
    """True where a left pixel is hidden in the right view (collision with a larger disparity)."""
    height, width = pattern.shape
    occluded = np.zeros((height, width), dtype=bool)
    cols = np.arange(width)
    for y in range(height):
        target = cols - pattern[y]
        inside = target >= 0
        best = np.full(width, -1, dtype=np.int64)
        np.maximum.at(best, target[inside], pattern[y][inside])
        occluded[y] = inside & (pattern[y] < best[np.clip(target, 0, width - 1)])
    return occluded


def gen_rds(
    height: int,
    width: int,
    pattern: np.ndarray,
    max_disparity: int = 192,
    seed: int = 0,
    density: float = 0.5,
    calib: Optional[Calibration] = DEFAULT_CALIBRATION,
    name: str = "rds",
) -> StereoSample:
    """Build a stereogram whose left-referenced disparity is exactly `pattern`."""
    if height % IMAGE_MULTIPLE or width % IMAGE_MULTIPLE:
        raise ShapeError(f"stereogram extents must be divisible by {IMAGE_MULTIPLE}, got {height}×{width}")
    raw = np.asarray(pattern)
    if raw.shape != (height, width):
        raise ShapeError(f"disparity pattern must be {height}×{width}, got {raw.shape}")
    if not np.all(np.isfinite(raw)) or not np.array_equal(raw, np.round(raw)):
        raise ContractError("disparity pattern must hold integer pixel values")
    if raw.min() < 0 or raw.max() >= max_disparity:
        raise ContractError(f"disparity pattern must lie in [0, {max_disparity}), got [{raw.min()}, {raw.max()}]")
    disp = raw.astype(np.int64)

    rng = np.random.default_rng(seed)
    right = random_dots(rng, height, width, density)
    fresh = random_dots(rng, height, width, density)

    rows = np.arange(height)[:, None]
    source = np.arange(width)[None, :] - disp
    in_view = source >= 0
    occluded = occlusion_mask(disp)
    valid = in_view & ~occluded

    left = fresh.copy()
    warped = right[:, rows, np.clip(source, 0, width - 1)]
    left[:, valid] = warped[:, valid]
    return StereoSample(
        pair=StereoPair(left=left, right=right),
        gt_disparity=disp.astype(np.float32),
        calib=calib,
        valid=valid,
        name=name,
    )


def two_plane_pattern(height: int, width: int, near: int = 16, far: int = 8) -> np.ndarray:
    """Left half at `far` px, right half at `near` px."""
    pattern = np.full((height, width), far, dtype=np.int64)
    pattern[:, width // 2 :] = near
    return pattern


def make_rds_dataset(count: int, height: int, width: int, max_disparity: int = 192, seed: int = 0):
    """`count` two-plane stereograms with distinct textures."""
    pattern = two_plane_pattern(height, width)
    return [
        gen_rds(height, width, pattern, max_disparity, seed=seed + i, name=f"rds_{i:03d}") for i in range(count)
    ]
