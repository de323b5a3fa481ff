"""
Cross-correlation convolutions in two and three spatial dimensions.

Inputs are laid out as (..., C_in, *spatial); any leading axes are treated
as a batch, which lets depthwise transforms reuse these kernels by folding
channels into the batch. The kernel is never flipped.

The implementation loops over kernel offsets and contracts the channel axis
with a BLAS-backed tensordot per offset, so memory stays at the size of the
input instead of an im2col buffer.
"""

import itertools
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import ShapeError
from src.numerics.profiling import record_flops
from src.numerics.tensor import ArrayLike, Function, Tensor


def _output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _check(x_shape: Tuple[int, ...], w_shape: Tuple[int, ...], nd: int, stride: int, padding: int) -> None:
    if len(w_shape) != nd + 2:
        raise ShapeError(f"expected a {nd + 2}-axis kernel, got shape {w_shape}")
    if len(x_shape) < nd + 1:
        raise ShapeError(f"expected at least {nd + 1} input axes, got shape {x_shape}")
    if x_shape[-nd - 1] != w_shape[1]:
        raise ShapeError(f"input has {x_shape[-nd - 1]} channels but kernel expects {w_shape[1]}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"stride must be >= 1 and padding >= 0, got stride={stride} padding={padding}")
    for size, k in zip(x_shape[-nd:], w_shape[2:]):
        if size + 2 * padding < k:
            raise ShapeError(f"kernel extent {k} exceeds padded input extent {size + 2 * padding}")


def _window(offsets: Sequence[int], out_shape: Sequence[int], stride: int) -> Tuple[slice, ...]:
    return tuple(slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offsets, out_shape))


def _pad(x: np.ndarray, nd: int, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    widths = [(0, 0)] * (x.ndim - nd) + [(padding, padding)] * nd
    return np.pad(x, widths)


def _contract_forward(w_tap: np.ndarray, patch: np.ndarray, nd: int) -> np.ndarray:
    # (O, C) x (..., C, *S) -> (..., O, *S)
    out = np.tensordot(w_tap, patch, axes=([1], [patch.ndim - nd - 1]))
    return np.moveaxis(out, 0, -nd - 1)


def _contract_input(w_tap: np.ndarray, grad: np.ndarray, nd: int) -> np.ndarray:
    # (O, C) x (..., O, *S) -> (..., C, *S)
    out = np.tensordot(w_tap, grad, axes=([0], [grad.ndim - nd - 1]))
    return np.moveaxis(out, 0, -nd - 1)


def _flatten_channels(a: np.ndarray, nd: int) -> np.ndarray:
    # (..., C, *S) -> (C, M)
    moved = np.moveaxis(a, -nd - 1, 0)
    return moved.reshape(moved.shape[0], -1)


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int, nd: int) -> np.ndarray:
    _check(x.shape, w.shape, nd, stride, padding)
    xp = _pad(x, nd, padding)
    kernel = w.shape[2:]
    out_spatial = [_output_extent(s, k, stride, padding) for s, k in zip(x.shape[-nd:], kernel)]
    out = np.zeros(x.shape[: -nd - 1] + (w.shape[0],) + tuple(out_spatial), dtype=np.result_type(x, w))
    lead = (slice(None),) * (x.ndim - nd)
    for offsets in itertools.product(*(range(k) for k in kernel)):
        patch = xp[lead + _window(offsets, out_spatial, stride)]
        out += _contract_forward(w[(slice(None), slice(None)) + offsets], patch, nd)
    record_flops(2 * out.size * w.shape[1] * int(np.prod(kernel)))
    return out


def conv_input_grad(
    grad: np.ndarray, w: np.ndarray, stride: int, padding: int, x_shape: Tuple[int, ...], nd: int
) -> np.ndarray:
    """Adjoint of `conv_forward` with respect to its input."""
    padded_shape = x_shape[:-nd] + tuple(s + 2 * padding for s in x_shape[-nd:])
    gxp = np.zeros(padded_shape, dtype=np.result_type(grad, w))
    out_spatial = grad.shape[-nd:]
    lead = (slice(None),) * (len(x_shape) - nd)
    for offsets in itertools.product(*(range(k) for k in w.shape[2:])):
        gxp[lead + _window(offsets, out_spatial, stride)] += _contract_input(
            w[(slice(None), slice(None)) + offsets], grad, nd
        )
    record_flops(2 * grad.size * w.shape[1] * int(np.prod(w.shape[2:])))
    if padding == 0:
        return gxp
    core = tuple(slice(padding, padding + s) for s in x_shape[-nd:])
    return gxp[lead + core]


def conv_weight_grad(
    x: np.ndarray, grad: np.ndarray, w_shape: Tuple[int, ...], stride: int, padding: int, nd: int
) -> np.ndarray:
    """Gradient of <conv_forward(x, w), grad> with respect to w."""
    xp = _pad(x, nd, padding)
    gw = np.zeros(w_shape, dtype=np.result_type(x, grad))
    out_spatial = grad.shape[-nd:]
    g2 = _flatten_channels(grad, nd)
    lead = (slice(None),) * (x.ndim - nd)
    for offsets in itertools.product(*(range(k) for k in w_shape[2:])):
        patch = _flatten_channels(xp[lead + _window(offsets, out_spatial, stride)], nd)
        gw[(slice(None), slice(None)) + offsets] = g2 @ patch.T
    record_flops(2 * grad.size * w_shape[1] * int(np.prod(w_shape[2:])))
    return gw


class ConvNd(Function):
    def forward(self, x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0, nd: int = 2) -> np.ndarray:
        self.x, self.w = x, w
        self.stride, self.padding, self.nd = stride, padding, nd
        return conv_forward(x, w, stride, padding, nd)

    def backward(self, grad: np.ndarray):
        gx = conv_input_grad(grad, self.w, self.stride, self.padding, self.x.shape, self.nd)
        gw = conv_weight_grad(self.x, grad, self.w.shape, self.stride, self.padding, self.nd)
        return gx, gw


class ConvTransposeNd(Function):
    """Adjoint of `ConvNd`: maps C_out channels back to C_in channels."""

    def forward(
        self,
        y: np.ndarray,
        w: np.ndarray,
        stride: int = 1,
        padding: int = 0,
        nd: int = 2,
        output_size: Optional[Sequence[int]] = None,
    ) -> np.ndarray:
        if len(w.shape) != nd + 2:
            raise ShapeError(f"expected a {nd + 2}-axis kernel, got shape {w.shape}")
        if y.ndim < nd + 1 or y.shape[-nd - 1] != w.shape[0]:
            raise ShapeError(f"input {y.shape} does not carry the kernel's {w.shape[0]} output channels")
        if stride < 1:
            raise ShapeError(f"stride must be >= 1, got {stride}")
        kernel = w.shape[2:]
        if output_size is None:
            spatial = tuple((n - 1) * stride + k - 2 * padding for n, k in zip(y.shape[-nd:], kernel))
        else:
            spatial = tuple(int(s) for s in output_size)
            for s, n, k in zip(spatial, y.shape[-nd:], kernel):
                if _output_extent(s, k, stride, padding) != n:
                    raise ShapeError(f"output size {spatial} is inconsistent with input {y.shape[-nd:]}")
        self.x_shape = y.shape[: -nd - 1] + (w.shape[1],) + spatial
        self.y, self.w = y, w
        self.stride, self.padding, self.nd = stride, padding, nd
        return conv_input_grad(y, w, stride, padding, self.x_shape, nd)

    def backward(self, grad: np.ndarray):
        gy = conv_forward(grad, self.w, self.stride, self.padding, self.nd)
        gw = conv_weight_grad(grad, self.y, self.w.shape, self.stride, self.padding, self.nd)
        return gy, gw


def conv2d(x: ArrayLike, kernel: ArrayLike, stride: int = 1, padding: int = 0) -> Tensor:
    """(..., C_in, H, W) * (C_out, C_in, kh, kw) -> (..., C_out, H', W')."""
    return ConvNd.apply(x, kernel, stride=stride, padding=padding, nd=2)


def conv3d(x: ArrayLike, kernel: ArrayLike, stride: int = 1, padding: int = 0) -> Tensor:
    """(..., C_in, D, H, W) * (C_out, C_in, k, k, k) -> (..., C_out, D', H', W')."""
    return ConvNd.apply(x, kernel, stride=stride, padding=padding, nd=3)


def conv_transpose2d(
    y: ArrayLike,
    kernel: ArrayLike,
    stride: int = 1,
    padding: int = 0,
    output_size: Optional[Sequence[int]] = None,
) -> Tensor:
    """Adjoint of `conv2d` with the same kernel: (..., C_out, H', W') -> (..., C_in, H, W)."""
    return ConvTransposeNd.apply(y, kernel, stride=stride, padding=padding, nd=2, output_size=output_size)
