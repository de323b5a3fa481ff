"""
Group-wise correlation cost volume.

    CV(g, d, y, x) = (g_n / C) * sum_{c in group g} F_l[c, y, x] * F_r[c, y, x - d]

for x - d >= 0, and 0 where the shifted column falls off the left edge.
"""

import numpy as np

from src.errors import ContractError, ShapeError
from src.numerics.profiling import record_flops
from src.numerics.tensor import ArrayLike, Function, Tensor


def _validate(fl: np.ndarray, fr: np.ndarray, groups: int, disparities: int) -> None:
    if fl.ndim != 3 or fl.shape != fr.shape:
        raise ShapeError(f"features must both be C×H×W of equal shape, got {fl.shape} and {fr.shape}")
    channels, _, width = fl.shape
    if groups < 1 or channels % groups != 0:
        raise ShapeError(f"{channels} feature channels cannot be split into {groups} groups")
    if disparities < 1:
        raise ContractError(f"need at least one disparity bin, got {disparities}")
    if disparities > width:
        raise ContractError(f"{disparities} disparity bins exceed the feature width {width}")


class GroupwiseCorrelation(Function):
    def forward(self, fl: np.ndarray, fr: np.ndarray, groups: int = 1, disparities: int = 1) -> np.ndarray:
        _validate(fl, fr, groups, disparities)
        channels, height, width = fl.shape
        per_group = channels // groups
        out = np.zeros((groups, disparities, height, width), dtype=np.result_type(fl, fr))
        for d in range(disparities):
            prod = fl[:, :, d:] * fr[:, :, : width - d]
            out[:, d, :, d:] = prod.reshape(groups, per_group, height, width - d).sum(axis=1) / per_group
        self.fl, self.fr = fl, fr
        self.groups, self.per_group = groups, per_group
        record_flops(2 * channels * disparities * height * width)
        return out

    def backward(self, grad: np.ndarray):
        fl, fr = self.fl, self.fr
        channels, height, width = fl.shape
        gfl = np.zeros_like(fl)
        gfr = np.zeros_like(fr)
        for d in range(grad.shape[1]):
            # broadcast each group's gradient to its member channels
            g = np.repeat(grad[:, d, :, d:], self.per_group, axis=0) / self.per_group
            gfl[:, :, d:] += g * fr[:, :, : width - d]
            gfr[:, :, : width - d] += g * fl[:, :, d:]
        return gfl, gfr


def build_gwc(left: ArrayLike, right: ArrayLike, groups: int, disparities: int) -> Tensor:
    """
    Build the g_n×D×H×W correlation volume from C×H×W left/right features.

    Raises ShapeError when C is not divisible by `groups` and ContractError
    when `disparities` exceeds the feature width.
    """
    return GroupwiseCorrelation.apply(left, right, groups=groups, disparities=disparities)
