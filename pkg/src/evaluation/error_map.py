"""
Error heat maps: |pred - gt| clamped to [0, scale_max] mapped linearly to
8-bit intensity, invalid pixels black.
"""

from pathlib import Path
from typing import Union

import numpy as np

from src.dataset.images import write_png
from src.errors import ContractError, ShapeError


def render_error_map(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray, scale_max: float) -> np.ndarray:
    if scale_max <= 0:
        raise ContractError(f"scale_max must be positive, got {scale_max}")
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape}, ground truth {gt.shape} and mask {mask.shape} must match")
    err = np.clip(np.abs(pred - gt), 0.0, scale_max)
    err = np.where(mask & np.isfinite(err), err, 0.0)
    return np.rint(255.0 * err / scale_max).astype(np.uint8)


def save_error_map(path: Union[str, Path], pred, gt, mask, scale_max: float) -> str:
    return write_png(path, render_error_map(pred, gt, mask, scale_max))
