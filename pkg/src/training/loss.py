"""
Smooth-L1 supervision of the three disparity stages.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.errors import ContractError
from src.models.stereo_models import StereoOutput, StereoSample
from src.numerics import functional as F
from src.numerics.tensor import ArrayLike, Tensor


class LossWeights(BaseModel):
    w1: float = Field(1.0 / 3.0, ge=0.0, description="pre-aggregation stage d_f")
    w2: float = Field(1.0 / 3.0, ge=0.0, description="aggregated stage d_cg")
    w3: float = Field(1.0 / 3.0, ge=0.0, description="refined stage d_dr")


@dataclass
class Supervision:
    gt_disparity: np.ndarray
    valid_mask: np.ndarray

    @classmethod
    def from_sample(cls, sample: StereoSample, max_disparity: float) -> "Supervision":
        if sample.gt_disparity is None:
            raise ContractError(f"sample {sample.name!r} has no ground-truth disparity")
        gt = np.nan_to_num(sample.gt_disparity.astype(np.float32), nan=0.0, posinf=0.0, neginf=0.0)
        return cls(gt_disparity=gt, valid_mask=sample.disparity_mask(max_disparity))


def smooth_l1(pred: ArrayLike, gt: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean over the mask of 0.5x² (|x| < 1) or |x| - 0.5, x = pred - gt."""
    return F.smooth_l1(pred, gt, mask)


def total_loss(
    output: StereoOutput, supervision: Supervision, weights: LossWeights = LossWeights()
) -> Tuple[Tensor, Dict[str, float]]:
    """Weighted sum of the per-stage losses, plus the unweighted stage values for logging."""
    gt, mask = supervision.gt_disparity, supervision.valid_mask
    stages = {
        "loss_f": smooth_l1(output.d_f, gt, mask),
        "loss_cg": smooth_l1(output.d_cg, gt, mask),
        "loss_dr": smooth_l1(output.d_dr, gt, mask),
    }
    total = (
        stages["loss_f"] * weights.w1 + stages["loss_cg"] * weights.w2 + stages["loss_dr"] * weights.w3
    )
    return total, {name: t.item() for name, t in stages.items()}
