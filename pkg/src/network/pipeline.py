"""
End-to-end stereo network: features -> correlation volume -> attention and
aggregation -> regression -> high-frequency refinement.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from src.config import IMAGE_MULTIPLE
from src.models.run_config import ModelConfig
from src.models.stereo_models import StereoOutput, StereoPair
from src.network.aggregation import AggregationNet, InitialRegression, soft_argmax, upsample_disparity
from src.network.cost_volume import build_gwc
from src.network.feature_net import FeatureNet
from src.network.hfdo import HAAR_KERNELS, HFDO
from src.numerics import functional as F
from src.numerics.module import Module
from src.numerics.tensor import ArrayLike, Tensor, no_grad

logger = logging.getLogger(__name__)


class RRESMNet(Module):
    def __init__(self, cfg: Optional[ModelConfig] = None):
        self.cfg = cfg or ModelConfig()
        rng = np.random.default_rng(self.cfg.init_seed)
        self.features = FeatureNet(self.cfg.feature_channels, rng=rng)
        self.initial = InitialRegression(self.cfg.groups, rng=rng)
        self.aggregation = AggregationNet(self.cfg.groups, self.cfg.mca, rng=rng)
        self.hfdo = HFDO(self.cfg.feature_channels, self.cfg.hfdo, rng=rng) if self.cfg.hfdo.enabled else None

    def forward(self, left: ArrayLike, right: ArrayLike, haar_kernels: np.ndarray = HAAR_KERNELS) -> StereoOutput:
        """3×H×W left/right images (H, W divisible by 16) -> three full-resolution disparity maps."""
        f_left, f_right = self.features.extract_pair(left, right)
        volume = build_gwc(f_left, f_right, self.cfg.groups, self.cfg.disparity_bins)
        d_f = upsample_disparity(self.initial(volume))
        d_cg = upsample_disparity(soft_argmax(self.aggregation(volume)))
        if self.hfdo is not None:
            d_dr = self.hfdo(f_left, d_cg, haar_kernels)
        else:
            d_dr = F.relu(d_cg)
        return StereoOutput(d_f=d_f, d_cg=d_cg, d_dr=d_dr)

    def predict(self, pair: StereoPair) -> np.ndarray:
        """Inference on arbitrary extents: symmetric padding to a multiple of 16, then crop."""
        (top, bottom), (left_pad, right_pad) = padding_for(pair.height, pair.width)
        widths = ((0, 0), (top, bottom), (left_pad, right_pad))
        left = np.pad(pair.left, widths, mode="symmetric")
        right = np.pad(pair.right, widths, mode="symmetric")
        with no_grad():
            out = self(left, right)
        d = out.d_dr.numpy()
        return np.ascontiguousarray(d[top : top + pair.height, left_pad : left_pad + pair.width])


def padding_for(height: int, width: int, multiple: int = IMAGE_MULTIPLE) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    def split(extent: int) -> Tuple[int, int]:
        total = (-extent) % multiple
        return total // 2, total - total // 2

    return split(height), split(width)


def build_model(cfg: Optional[ModelConfig] = None) -> RRESMNet:
    model = RRESMNet(cfg)
    logger.info(f"Built model with {model.parameter_count()} parameters")
    return model
