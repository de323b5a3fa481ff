"""
numerics/
Dense tensors with a recorded tape, the differentiable op set the network is
built from, layers, the optimizer and the checkpoint container.
"""

from src.numerics.conv import conv2d, conv3d, conv_transpose2d
from src.numerics.module import Conv2d, Conv3d, Linear, Module, Parameter, PReLU, grad
from src.numerics.optim import Adam, AdamState, adam_step
from src.numerics.profiling import count_flops
from src.numerics.scan import selective_scan
from src.numerics.tensor import Tensor, as_tensor, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "Conv2d",
    "Conv3d",
    "Linear",
    "Module",
    "PReLU",
    "Parameter",
    "Tensor",
    "adam_step",
    "as_tensor",
    "conv2d",
    "conv3d",
    "conv_transpose2d",
    "count_flops",
    "grad",
    "no_grad",
    "selective_scan",
]
