"""
Calibration files and the disparity-to-depth mapping.
"""

from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from src.config import DEPTH_EPS_PX
from src.errors import FormatError
from src.models.stereo_models import Calibration, DepthMap
from src.utils.atomic import write_text_atomic


def read_calibration(path: Union[str, Path]) -> Calibration:
    """Parse `focal_px=...` and `baseline_mm=...` lines (`#` starts a comment)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read calibration file {path}: {e}") from e
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    try:
        return Calibration(**values)
    except (ValidationError, TypeError) as e:
        raise FormatError(f"{path}: invalid calibration: {e}") from e


def write_calibration(path: Union[str, Path], calib: Calibration) -> str:
    return write_text_atomic(path, f"focal_px={calib.focal_px!r}\nbaseline_mm={calib.baseline_mm!r}\n")


def disparity_to_depth(disparity: np.ndarray, calib: Calibration, eps: float = DEPTH_EPS_PX) -> DepthMap:
    """depth = focal_px * baseline_mm / d where d > eps; other pixels are invalid (depth 0)."""
    d = np.asarray(disparity, dtype=np.float64)
    valid = np.isfinite(d) & (d > eps)
    depth = np.zeros_like(d)
    depth[valid] = calib.focal_px * calib.baseline_mm / d[valid]
    return DepthMap(values=depth.astype(np.float32), valid=valid)
