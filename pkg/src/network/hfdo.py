"""
High-frequency disparity optimisation.

The left context feature is projected, split into Haar subbands, the LL band
is attenuated by omega, and the reconstruction drives a residual correction
of the aggregated disparity:

    d_dr = relu(d_cg + up4(prelu(conv3x3(IWT(attenuate(DWT(F_s)))))))
"""

from typing import Optional, Tuple

import numpy as np

from src.errors import ConfigError, ContractError, ShapeError
from src.models.run_config import HFDOConfig
from src.models.stereo_models import WaveletBands
from src.network.aggregation import upsample_disparity
from src.numerics import functional as F
from src.numerics.conv import conv2d, conv_transpose2d
from src.numerics.module import Conv2d, Module, PReLU
from src.numerics.tensor import ArrayLike, Tensor, as_tensor

# order: LL, LH, HL, HH; each (1, 2, 2) so the set is a 4-output depthwise kernel
HAAR_KERNELS = 0.5 * np.array(
    [
        [[[1.0, 1.0], [1.0, 1.0]]],
        [[[1.0, -1.0], [1.0, -1.0]]],
        [[[1.0, 1.0], [-1.0, -1.0]]],
        [[[1.0, -1.0], [-1.0, 1.0]]],
    ],
    dtype=np.float32,
)


def haar_dwt(features: ArrayLike, kernels: np.ndarray = HAAR_KERNELS) -> WaveletBands:
    """Depthwise stride-2 analysis of a C×H×W tensor into four C×H/2×W/2 bands."""
    x = as_tensor(features)
    if x.ndim != 3:
        raise ShapeError(f"expected C×H×W features, got {x.shape}")
    channels, height, width = x.shape
    if height % 2 or width % 2:
        raise ContractError(f"wavelet analysis needs even extents, got {height}×{width}")
    bands = conv2d(x.reshape(channels, 1, height, width), kernels.astype(x.dtype), stride=2)
    return WaveletBands(ll=bands[:, 0], lh=bands[:, 1], hl=bands[:, 2], hh=bands[:, 3])


def attenuate(bands: WaveletBands, omega: float) -> WaveletBands:
    if not 0.0 <= omega <= 1.0:
        raise ConfigError(f"omega must lie in [0, 1], got {omega}")
    return bands._replace(ll=bands.ll * float(omega))


def haar_iwt(bands: WaveletBands, kernels: np.ndarray = HAAR_KERNELS) -> Tensor:
    """Adjoint of `haar_dwt`; exact inverse for the orthonormal kernels."""
    parts = [as_tensor(b) for b in bands]
    shape = parts[0].shape
    if len(shape) != 3 or any(p.shape != shape for p in parts):
        raise ContractError(f"wavelet bands must share one C×h×w shape, got {[p.shape for p in parts]}")
    channels, h, w = shape
    stacked = F.concat([p.reshape(channels, 1, h, w) for p in parts], axis=1)
    out = conv_transpose2d(stacked, kernels.astype(parts[0].dtype), stride=2, output_size=(2 * h, 2 * w))
    return out.reshape(channels, 2 * h, 2 * w)


class ContextProjection(Module):
    """F_s = relu(proj(F_l)) with a 1×1 (linear) or 3×3 projection."""

    def __init__(self, in_channels: int, out_channels: int = 16, mode: str = "linear", rng=None):
        if mode not in ("linear", "conv3"):
            raise ConfigError(f"unknown context projection {mode!r}")
        self.proj = Conv2d(in_channels, out_channels, 1 if mode == "linear" else 3, rng=rng)

    def forward(self, features: ArrayLike) -> Tuple[Tensor, Tuple[int, int]]:
        """Returns the projection, edge-padded to even extents, and the (bottom, right) padding used."""
        x = as_tensor(features)
        pads = (x.shape[-2] % 2, x.shape[-1] % 2)
        if any(pads):
            x = F.edge_pad_end(x, pads)
        return F.relu(self.proj(x)), pads


class ResidualHead(Module):
    def __init__(self, channels: int, slope: float = 0.25, rng=None):
        self.conv = Conv2d(channels, 1, 3, rng=rng)
        # residual starts at zero
        self.conv.weight.assign(np.zeros_like(self.conv.weight.data))
        self.act = PReLU(slope)

    def forward(self, filtered: Tensor) -> Tensor:
        """C_s×H4×W4 -> full-resolution H×W residual in pixels."""
        r = self.act(self.conv(filtered))
        return upsample_disparity(r.reshape(r.shape[-2:]))


def refine(disparity: ArrayLike, filtered: Tensor, head: ResidualHead) -> Tensor:
    """d_dr = relu(D + residual); non-negative everywhere."""
    return F.relu(as_tensor(disparity) + head(filtered))


class HFDO(Module):
    def __init__(self, in_channels: int, cfg: Optional[HFDOConfig] = None, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg or HFDOConfig()
        self.context = ContextProjection(in_channels, self.cfg.context_channels, self.cfg.context, rng=rng)
        self.head = ResidualHead(self.cfg.context_channels, self.cfg.prelu_slope, rng=rng)

    def filtered_context(self, context: ArrayLike, kernels: np.ndarray = HAAR_KERNELS) -> Tensor:
        projected, (pad_h, pad_w) = self.context(context)
        filtered = haar_iwt(attenuate(haar_dwt(projected, kernels), self.cfg.omega), kernels)
        height, width = filtered.shape[-2] - pad_h, filtered.shape[-1] - pad_w
        if pad_h or pad_w:
            filtered = filtered[:, :height, :width]
        return filtered

    def forward(self, context: ArrayLike, disparity: ArrayLike, kernels: np.ndarray = HAAR_KERNELS) -> Tensor:
        return refine(disparity, self.filtered_context(context, kernels), self.head)
