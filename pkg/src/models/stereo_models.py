"""
Data carriers for stereo samples and the intermediate products of the network.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.errors import ShapeError
from src.numerics.tensor import Tensor


class Calibration(BaseModel):
    """Rectified stereo rig parameters needed to turn disparity into depth"""

    focal_px: float = Field(..., gt=0, description="Focal length in pixels")
    baseline_mm: float = Field(..., gt=0, description="Baseline in millimetres")


@dataclass
class StereoPair:
    """Rectified left/right images, 3×H×W float32 in [0, 1]."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float32)
        self.right = np.asarray(self.right, dtype=np.float32)
        if self.left.ndim != 3 or self.left.shape[0] != 3:
            raise ShapeError(f"images must be 3×H×W, got {self.left.shape}")
        if self.left.shape != self.right.shape:
            raise ShapeError(f"left {self.left.shape} and right {self.right.shape} differ in shape")

    @property
    def height(self) -> int:
        return self.left.shape[1]

    @property
    def width(self) -> int:
        return self.left.shape[2]


@dataclass
class StereoSample:
    pair: StereoPair
    gt_disparity: Optional[np.ndarray] = None
    gt_depth: Optional[np.ndarray] = None
    calib: Optional[Calibration] = None
    valid: Optional[np.ndarray] = None
    name: str = "sample"

    def disparity_mask(self, max_disparity: float) -> np.ndarray:
        """Pixels usable for supervision: 0 < gt < max_disparity, finite, and not flagged invalid."""
        if self.gt_disparity is None:
            return np.zeros((self.pair.height, self.pair.width), dtype=bool)
        gt = self.gt_disparity
        mask = np.isfinite(gt) & (gt > 0) & (gt < max_disparity)
        if self.valid is not None:
            mask &= self.valid
        return mask


@dataclass
class DepthMap:
    values: np.ndarray  # millimetres, 0 where invalid
    valid: Optional[np.ndarray] = None


class FeaturePyramid(NamedTuple):
    s4: Tensor
    s8: Tensor
    s16: Tensor


class WaveletBands(NamedTuple):
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor


class AxisDescriptors(NamedTuple):
    z_x: Tensor  # C×W4
    z_y: Tensor  # C×H4
    z_z: Tensor  # C×D


class AttentionMaps(NamedTuple):
    a_x: Tensor
    a_y: Tensor
    a_z: Tensor


class StereoOutput(NamedTuple):
    """The three supervised disparity stages, all at full resolution."""

    d_f: Tensor
    d_cg: Tensor
    d_dr: Tensor
