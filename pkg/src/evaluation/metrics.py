"""
Disparity error metrics. All thresholds are strict (>).
"""

import numpy as np

from src.errors import ContractError, ShapeError


def _errors(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape}, ground truth {gt.shape} and mask {mask.shape} must match")
    if not mask.any():
        raise ContractError("metric over an empty validity mask")
    return np.abs(pred[mask] - gt[mask])


def mae(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    return float(np.mean(_errors(pred, gt, mask)))


def bad_n(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray, n: float) -> float:
    """Percentage of valid pixels whose error exceeds n."""
    if n <= 0:
        raise ContractError(f"bad-n threshold must be positive, got {n}")
    err = _errors(pred, gt, mask)
    return float(100.0 * np.count_nonzero(err > n) / err.size)


def d1(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Percentage of valid pixels with error > 3 px and > 5% of the ground truth."""
    err = _errors(pred, gt, mask)
    ref = np.abs(np.asarray(gt, dtype=np.float64)[np.asarray(mask, dtype=bool)])
    return float(100.0 * np.count_nonzero((err > 3.0) & (err > 0.05 * ref)) / err.size)
