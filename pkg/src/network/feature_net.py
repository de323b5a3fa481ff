"""
Siamese multi-scale feature extractor.

A small trainable encoder (three stride-2 stages at 1/4, 1/8 and 1/16
resolution) and a U-Net-like decoder that fuses the pyramid back to 1/4
resolution. Left and right images go through the same weights; stacking
them on a leading axis runs both in one pass.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from src.config import IMAGE_MULTIPLE
from src.errors import ShapeError
from src.models.stereo_models import FeaturePyramid
from src.numerics import functional as F
from src.numerics.module import Conv2d, Module, PReLU
from src.numerics.tensor import ArrayLike, Tensor, as_tensor

ENCODER_CHANNELS: Tuple[int, int, int] = (16, 24, 32)


class ConvBlock(Module):
    """3×3 conv + PReLU."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        self.conv = Conv2d(in_channels, out_channels, 3, stride=stride, rng=rng)
        self.act = PReLU()

    def forward(self, x: Tensor) -> Tensor:
        return self.act(self.conv(x))


def check_image_extent(shape: Sequence[int], multiple: int = IMAGE_MULTIPLE) -> None:
    h, w = shape[-2], shape[-1]
    if h % multiple or w % multiple:
        raise ShapeError(f"image height and width must be divisible by {multiple}, got {h}×{w}")


class FeatureNet(Module):
    def __init__(
        self,
        out_channels: int = 32,
        channels: Tuple[int, int, int] = ENCODER_CHANNELS,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng or np.random.default_rng(0)
        c4, c8, c16 = channels
        self.out_channels = out_channels
        self.stem = [ConvBlock(3, c4, 2, rng), ConvBlock(c4, c4, 2, rng)]
        self.stage8 = [ConvBlock(c4, c8, 2, rng), ConvBlock(c8, c8, 1, rng)]
        self.stage16 = [ConvBlock(c8, c16, 2, rng), ConvBlock(c16, c16, 1, rng)]
        self.fuse8 = ConvBlock(c16 + c8, c8, 1, rng)
        self.fuse4 = ConvBlock(c8 + c4, c16, 1, rng)
        self.head = Conv2d(c16, out_channels, 1, rng=rng)

    def encode(self, image: ArrayLike) -> FeaturePyramid:
        """(..., 3, H, W) -> pyramid at 1/4, 1/8, 1/16."""
        x = as_tensor(image)
        if x.ndim < 3 or x.shape[-3] != 3:
            raise ShapeError(f"expected (..., 3, H, W) images, got {x.shape}")
        check_image_extent(x.shape)
        for block in self.stem:
            x = block(x)
        s4 = x
        for block in self.stage8:
            x = block(x)
        s8 = x
        for block in self.stage16:
            x = block(x)
        return FeaturePyramid(s4=s4, s8=s8, s16=x)

    def decode_fuse(self, pyramid: FeaturePyramid) -> Tensor:
        up8 = F.upsample_nearest(pyramid.s16, 2)
        x = self.fuse8(F.concat([up8, pyramid.s8], axis=-3))
        up4 = F.upsample_nearest(x, 2)
        x = self.fuse4(F.concat([up4, pyramid.s4], axis=-3))
        return self.head(x)

    def context_feature(self, left_pyramid: FeaturePyramid) -> Tensor:
        """Refinement context: the fused 1/4 left feature, identical to F_l."""
        return self.decode_fuse(left_pyramid)

    def forward(self, image: ArrayLike) -> Tensor:
        return self.decode_fuse(self.encode(image))

    def extract_pair(self, left: ArrayLike, right: ArrayLike) -> Tuple[Tensor, Tensor]:
        """Run both images through shared weights in one batched pass."""
        left, right = as_tensor(left), as_tensor(right)
        if left.shape != right.shape:
            raise ShapeError(f"left {left.shape} and right {right.shape} differ in shape")
        both = self.forward(F.concat([left.reshape((1,) + left.shape), right.reshape((1,) + right.shape)], axis=0))
        return both[0], both[1]
