"""
3D cost aggregation and disparity regression.
"""

from typing import Optional, Tuple

import numpy as np

from src.errors import ShapeError
from src.models.run_config import MCAConfig
from src.network.mca import MCA
from src.numerics import functional as F
from src.numerics.module import Conv3d, Module
from src.numerics.tensor import ArrayLike, Tensor, as_tensor

UNET_CHANNELS: Tuple[int, int, int] = (16, 32, 48)


def soft_argmax(scores: ArrayLike) -> Tensor:
    """
    Expected disparity under softmax(scores) over the disparity axis.

    Accepts 1×D×H×W or D×H×W scores and returns an H×W map in [0, D-1].
    """
    s = as_tensor(scores)
    if s.ndim == 4:
        if s.shape[0] != 1:
            raise ShapeError(f"expected a single score channel, got {s.shape}")
        s = s.reshape(s.shape[1:])
    if s.ndim != 3:
        raise ShapeError(f"expected D×H×W scores, got {s.shape}")
    depth = s.shape[0]
    prob = F.softmax(s, axis=0)
    bins = np.arange(depth, dtype=s.dtype).reshape(depth, 1, 1)
    return F.sum(prob * bins, axis=0)


def bilinear_matrix(size: int, factor: int = 4, dtype=np.float32) -> np.ndarray:
    """(factor*size, size) interpolation matrix, half-pixel centres, clamped at the borders."""
    out = factor * size
    src = np.clip((np.arange(out) + 0.5) / factor - 0.5, 0.0, size - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, size - 1)
    frac = src - lo
    m = np.zeros((out, size), dtype=np.float64)
    m[np.arange(out), lo] += 1.0 - frac
    m[np.arange(out), hi] += frac
    return m.astype(dtype)


def upsample_disparity(disparity: ArrayLike, factor: int = 4) -> Tensor:
    """Bilinear ×factor upsampling of an H×W map; values are scaled by `factor` too."""
    d = as_tensor(disparity)
    if d.ndim != 2:
        raise ShapeError(f"expected an H×W disparity map, got {d.shape}")
    rows = bilinear_matrix(d.shape[0], factor, d.dtype)
    cols = bilinear_matrix(d.shape[1], factor, d.dtype)
    return (as_tensor(rows) @ d @ cols.T) * float(factor)


class InitialRegression(Module):
    """Collapse the groups with one 3D conv and regress d_f before aggregation."""

    def __init__(self, groups: int, rng: Optional[np.random.Generator] = None):
        self.conv = Conv3d(groups, 1, 3, rng=rng)

    def forward(self, volume: ArrayLike) -> Tensor:
        return soft_argmax(self.conv(as_tensor(volume)))


def regress_initial(volume: ArrayLike, head: InitialRegression) -> Tensor:
    return head(volume)


class Block3d(Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int = 1, rng=None):
        self.conv = Conv3d(in_channels, out_channels, 3, stride=stride, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.conv(x))


class AggregationNet(Module):
    """
    Depth-2 3D U-Net over (D, H, W), with the attention block applied to the
    input volume first. Every extent must be divisible by 4.
    """

    def __init__(
        self,
        groups: int,
        mca: Optional[MCAConfig] = None,
        channels: Tuple[int, int, int] = UNET_CHANNELS,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng or np.random.default_rng(0)
        mca = mca or MCAConfig()
        c0, c1, c2 = channels
        self.mca = MCA(groups, mca, rng=rng) if mca.enabled else None
        self.enc0 = Block3d(groups, c0, rng=rng)
        self.down1 = Block3d(c0, c1, stride=2, rng=rng)
        self.down2 = Block3d(c1, c2, stride=2, rng=rng)
        self.bottleneck = Block3d(c2, c2, rng=rng)
        self.up2 = Block3d(c2, c1, rng=rng)
        self.up1 = Block3d(c1, c0, rng=rng)
        self.out = Conv3d(c0, 1, 3, rng=rng)

    def forward(self, volume: ArrayLike) -> Tensor:
        vol = as_tensor(volume)
        if vol.ndim != 4 or any(extent % 4 for extent in vol.shape[1:]):
            raise ShapeError(f"aggregation needs D, H and W divisible by 4, got volume {vol.shape}")
        x = self.mca(vol) if self.mca is not None else vol
        skip0 = self.enc0(x)
        skip1 = self.down1(skip0)
        x = self.bottleneck(self.down2(skip1))
        x = self.up2(F.upsample_nearest(x, 2, spatial=3)) + skip1
        x = self.up1(F.upsample_nearest(x, 2, spatial=3)) + skip0
        return self.out(x)


def aggregate(volume: ArrayLike, net: AggregationNet) -> Tensor:
    """g_n×D×H×W cost volume -> 1×D×H×W score volume."""
    return net(volume)
