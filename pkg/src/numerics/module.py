"""
Learned parameters and the layer building blocks used by the network.
"""

from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from src.errors import ContractError
from src.numerics import functional as F
from src.numerics.conv import conv2d, conv3d
from src.numerics.tensor import DEFAULT_DTYPE, Tensor


class Parameter(Tensor):
    """A learned tensor whose gradient buffer always exists and matches its shape."""

    def __init__(self, value: np.ndarray, dtype: Optional[np.dtype] = None):
        super().__init__(np.array(value, dtype=dtype or DEFAULT_DTYPE, copy=True), requires_grad=True)
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    @property
    def gradient(self) -> np.ndarray:
        return self.grad

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assign(self, value: np.ndarray) -> None:
        value = np.asarray(value)
        if value.shape != self.data.shape:
            raise ContractError(f"cannot assign shape {value.shape} to parameter of shape {self.data.shape}")
        self.data = value.astype(self.data.dtype, copy=True)

    def astype(self, dtype: np.dtype) -> None:
        self.data = self.data.astype(dtype)
        self.grad = self.grad.astype(dtype)


class Module:
    """
    Container that discovers Parameters and sub-Modules from its attributes.

    Attribute insertion order defines parameter order, which is also the
    order written to checkpoints.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype: np.dtype) -> "Module":
        for p in self.parameters():
            p.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=shape)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng or np.random.default_rng(0)
        k = kernel_size
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Parameter(_he_normal(rng, (out_channels, in_channels, k, k), in_channels * k * k))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        y = conv2d(x, self.weight, stride=self.stride, padding=self.padding)
        return y + self.bias.reshape(-1, 1, 1)


class Conv3d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng or np.random.default_rng(0)
        k = kernel_size
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Parameter(_he_normal(rng, (out_channels, in_channels, k, k, k), in_channels * k**3))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        y = conv3d(x, self.weight, stride=self.stride, padding=self.padding)
        return y + self.bias.reshape(-1, 1, 1, 1)


class Linear(Module):
    """y = x @ W + b over the last axis of x."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
        scale: Optional[float] = None,
    ):
        rng = rng or np.random.default_rng(0)
        std = scale if scale is not None else np.sqrt(1.0 / max(in_features, 1))
        self.weight = Parameter(rng.normal(0.0, std, size=(in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class PReLU(Module):
    """Parametric ReLU with one learned slope per layer."""

    def __init__(self, init: float = 0.25):
        self.slope = Parameter(np.array([init]))

    def forward(self, x: Tensor) -> Tensor:
        return F.prelu(x, self.slope)


def parameters_of(modules: Iterable[Module]) -> List[Parameter]:
    params: List[Parameter] = []
    for m in modules:
        params.extend(m.parameters())
    return params


def grad(loss: Tensor, params: Iterable[Parameter]) -> None:
    """
    Write d(loss)/d(value) into the gradient buffer of every parameter.

    Only the listed buffers are zeroed first, so a listed parameter the loss
    does not depend on ends up with an exactly-zero gradient. Any other
    parameter reached by the graph keeps accumulating across calls until its
    own `zero_grad()`.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    params = list(params)
    for p in params:
        p.zero_grad()
    loss.backward()
