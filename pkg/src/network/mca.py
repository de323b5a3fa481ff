"""
Coordinate attention over a cost volume with a bidirectional selective scan.

The volume (C×D×H×W) is pooled over orthogonal planes into one descriptor
per axis, each descriptor is gated with a sigmoid, and the three are joined
into a single sequence of C-dimensional tokens (x segment, then y, then z).
A bidirectional scan mixes information along the whole sequence; the result
is split back per axis and broadcast-multiplied onto the volume.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from src.config import THREADS
from src.errors import ContractError, ShapeError
from src.models.run_config import MCAConfig
from src.models.stereo_models import AttentionMaps, AxisDescriptors
from src.numerics import functional as F
from src.numerics.module import Linear, Module, Parameter
from src.numerics.scan import selective_scan
from src.numerics.tensor import ArrayLike, Tensor, as_tensor

logger = logging.getLogger(__name__)

# softplus(STEP_BIAS_INIT) == 0.1
STEP_BIAS_INIT = float(np.log(np.expm1(0.1)))


def axis_pool(volume: ArrayLike, pooling: str = "mean") -> AxisDescriptors:
    """Pool a C×D×H×W volume into (C×W, C×H, C×D) descriptors."""
    vol = as_tensor(volume)
    if vol.ndim != 4 or vol.size == 0:
        raise ShapeError(f"expected a non-empty C×D×H×W volume, got {vol.shape}")
    if pooling == "mean":
        reduce = F.mean
    elif pooling == "max":
        reduce = F.max
    else:
        raise ContractError(f"unknown pooling {pooling!r}")
    return AxisDescriptors(
        z_x=reduce(vol, axis=(1, 2)),
        z_y=reduce(vol, axis=(1, 3)),
        z_z=reduce(vol, axis=(2, 3)),
    )


def gate_concat(descriptors: AxisDescriptors) -> Tensor:
    return F.concat([F.sigmoid(descriptors.z_x), F.sigmoid(descriptors.z_y), F.sigmoid(descriptors.z_z)], axis=1)


def split_maps(sequence: ArrayLike, width: int, height: int, depth: int) -> AttentionMaps:
    seq = as_tensor(sequence)
    if seq.ndim != 2 or seq.shape[1] != width + height + depth:
        raise ContractError(
            f"attention sequence of shape {seq.shape} does not split into W={width}, H={height}, D={depth}"
        )
    return AttentionMaps(
        a_x=seq[:, :width],
        a_y=seq[:, width : width + height],
        a_z=seq[:, width + height :],
    )


def split_apply(volume: ArrayLike, refined: ArrayLike) -> Tensor:
    """out[c,z,y,x] = vol[c,z,y,x] * A_x[c,x] * A_y[c,y] * A_z[c,z]."""
    vol = as_tensor(volume)
    channels, depth, height, width = vol.shape
    maps = split_maps(refined, width, height, depth)
    if maps.a_x.shape[0] != channels:
        raise ContractError(f"attention has {maps.a_x.shape[0]} channels, volume has {channels}")
    a_x = maps.a_x.reshape(channels, 1, 1, width)
    a_y = maps.a_y.reshape(channels, 1, height, 1)
    a_z = maps.a_z.reshape(channels, depth, 1, 1)
    return vol * a_x * a_y * a_z


class SsmLayer(Module):
    """
    Projections and decay of one selective-scan layer.

    Tokens are C-dimensional; channels are split into heads of `head_dim`.
    Δ is per head, B and C are shared by all heads, D_skip is per channel.
    """

    def __init__(self, channels: int, state_dim: int = 16, head_dim: int = 8, rng: Optional[np.random.Generator] = None):
        if channels % head_dim != 0:
            raise ShapeError(f"{channels} channels cannot be split into heads of {head_dim}")
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.heads = channels // head_dim
        self.head_dim = head_dim
        self.state_dim = state_dim
        self.step_proj = Linear(channels, self.heads, rng=rng, scale=0.1 / np.sqrt(channels))
        self.step_proj.bias.assign(np.full(self.heads, STEP_BIAS_INIT))
        self.b_proj = Linear(channels, state_dim, bias=False, rng=rng)
        self.c_proj = Linear(channels, state_dim, bias=False, rng=rng)
        self.a_log = Parameter(np.zeros(self.heads))
        self.d_skip = Parameter(np.ones(channels))

    def forward(self, tokens: Tensor) -> Tensor:
        """(L, C) tokens -> (L, C) outputs of the causal recurrence."""
        length = tokens.shape[0]
        delta = F.softplus(self.step_proj(tokens))
        decay = -F.exp(self.a_log)
        x = tokens.reshape(length, self.heads, self.head_dim)
        y = selective_scan(
            x,
            delta,
            decay,
            self.b_proj(tokens),
            self.c_proj(tokens),
            self.d_skip.reshape(self.heads, self.head_dim),
        )
        return y.reshape(length, self.channels)


def ssm_scan(sequence: ArrayLike, layer: SsmLayer, direction: str = "forward") -> Tensor:
    """Scan a C×L sequence; the backward direction scans the reversed tokens and reverses the result."""
    seq = as_tensor(sequence)
    if seq.ndim != 2 or seq.shape[1] < 1:
        raise ShapeError(f"expected a C×L sequence with L >= 1, got {seq.shape}")
    tokens = seq.transpose(1, 0)
    if direction == "forward":
        out = layer(tokens)
    elif direction == "backward":
        out = F.flip(layer(F.flip(tokens, axis=0)), axis=0)
    else:
        raise ContractError(f"unknown scan direction {direction!r}")
    return out.transpose(1, 0)


class BiMamba(Module):
    """Sum of forward and backward scans followed by a linear output projection."""

    def __init__(
        self,
        channels: int,
        state_dim: int = 16,
        head_dim: int = 8,
        share_direction_params: bool = True,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng or np.random.default_rng(0)
        self.forward_layer = SsmLayer(channels, state_dim, head_dim, rng=rng)
        self.backward_layer = (
            None if share_direction_params else SsmLayer(channels, state_dim, head_dim, rng=rng)
        )
        self.out_proj = Linear(channels, channels, rng=rng)

    def scan_both(self, seq: Tensor):
        backward_layer = self.backward_layer or self.forward_layer
        if THREADS > 1:
            with ThreadPoolExecutor(max_workers=2) as pool:
                fwd = pool.submit(ssm_scan, seq, self.forward_layer, "forward")
                bwd = pool.submit(ssm_scan, seq, backward_layer, "backward")
                return fwd.result(), bwd.result()
        return ssm_scan(seq, self.forward_layer, "forward"), ssm_scan(seq, backward_layer, "backward")

    def forward(self, sequence: ArrayLike) -> Tensor:
        seq = as_tensor(sequence)
        fwd, bwd = self.scan_both(seq)
        merged = (fwd + bwd).transpose(1, 0)
        return self.out_proj(merged).transpose(1, 0)


class MCA(Module):
    """Pool, gate, scan, split and re-weight; preserves the volume's shape."""

    def __init__(self, channels: int, cfg: Optional[MCAConfig] = None, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg or MCAConfig()
        self.bimamba = BiMamba(
            channels,
            state_dim=self.cfg.state_dim,
            head_dim=self.cfg.head_dim,
            share_direction_params=self.cfg.share_direction_params,
            rng=rng,
        )
        # re-weighting maps start close to one
        out = self.bimamba.out_proj
        out.weight.assign(out.weight.data * 0.1)
        out.bias.assign(np.ones(channels))

    def attention(self, volume: Tensor) -> Tensor:
        return self.bimamba(gate_concat(axis_pool(volume, self.cfg.pooling)))

    def forward(self, volume: ArrayLike) -> Tensor:
        vol = as_tensor(volume)
        if self.cfg.unit_attention:
            channels, depth, height, width = vol.shape
            return split_apply(vol, np.ones((channels, width + height + depth), dtype=vol.dtype))
        return split_apply(vol, self.attention(vol))
