"""
Differentiable elementwise, reduction and shape operations.

Each public function wraps a `Function` subclass; the subclasses keep only
what their backward pass needs.
"""

from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import EmptyMaskError, ShapeError
from src.numerics.tensor import ArrayLike, Function, Tensor

Axis = Optional[Union[int, Tuple[int, ...]]]


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form stays finite for any input and gives exactly 0.5 at zero
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = _sigmoid(x)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out * (1.0 - self.out),)


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad: np.ndarray):
        return (grad * self.mask,)


class PReLU(Function):
    """x if x >= 0 else a*x, with `a` broadcast against x."""

    def forward(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        self.x, self.a = x, a
        self.positive = x >= 0
        return np.where(self.positive, x, a * x).astype(x.dtype)

    def backward(self, grad: np.ndarray):
        gx = grad * np.where(self.positive, 1.0, self.a)
        ga = grad * np.where(self.positive, 0.0, self.x)
        return gx, ga


class Softplus(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.logaddexp(0.0, x).astype(x.dtype)

    def backward(self, grad: np.ndarray):
        return (grad * _sigmoid(self.x),)


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray):
        s = self.out
        inner = np.sum(grad * s, axis=self.axis, keepdims=True)
        return (s * (grad - inner),)


class Exp(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.exp(x)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out,)


class Abs(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad: np.ndarray):
        return (grad * self.sign,)


def sigmoid(x: ArrayLike) -> Tensor:
    return Sigmoid.apply(x)


def relu(x: ArrayLike) -> Tensor:
    return ReLU.apply(x)


def prelu(x: ArrayLike, slope: ArrayLike) -> Tensor:
    return PReLU.apply(x, slope)


def softplus(x: ArrayLike) -> Tensor:
    return Softplus.apply(x)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def exp(x: ArrayLike) -> Tensor:
    return Exp.apply(x)


def abs(x: ArrayLike) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return Abs.apply(x)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(np.reshape(grad, (1,) * len(shape)), shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(np.sum(x, axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        return (_expand_reduced(grad, self.shape, self.axis, self.keepdims),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        out = np.asarray(np.mean(x, axis=axis, keepdims=keepdims))
        self.count = x.size // out.size
        return out

    def backward(self, grad: np.ndarray):
        return (_expand_reduced(grad, self.shape, self.axis, self.keepdims) / self.count,)


class Max(Function):
    """Max reduction; tied maxima share the incoming gradient equally."""

    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        peak = np.max(x, axis=axis, keepdims=True)
        hits = (x == peak).astype(x.dtype)
        self.route = hits / np.sum(hits, axis=axis, keepdims=True)
        return peak if keepdims else np.asarray(np.max(x, axis=axis))

    def backward(self, grad: np.ndarray):
        return (_expand_reduced(grad, self.shape, self.axis, self.keepdims) * self.route,)


def sum(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def max(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Max.apply(x, axis=axis, keepdims=keepdims)


# ---------------------------------------------------------------------------
# Shape manipulation
# ---------------------------------------------------------------------------


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x: np.ndarray, axes: Optional[Sequence[int]] = None) -> np.ndarray:
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
        return np.transpose(x, self.axes)

    def backward(self, grad: np.ndarray):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Flip(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        self.axis = axis
        return np.flip(x, axis=axis).copy()

    def backward(self, grad: np.ndarray):
        return (np.flip(grad, axis=self.axis),)


class GetItem(Function):
    """Basic (slice / integer) indexing."""

    def forward(self, x: np.ndarray, index: Any = None) -> np.ndarray:
        self.shape, self.index, self.dtype = x.shape, index, x.dtype
        return np.array(x[index], copy=True)

    def backward(self, grad: np.ndarray):
        full = np.zeros(self.shape, dtype=self.dtype)
        full[self.index] += grad
        return (full,)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray):
        return tuple(np.split(grad, self.bounds, axis=self.axis))


class EdgePadEnd(Function):
    """Replicate the last entry of each trailing axis `pads[i]` more times."""

    def forward(self, x: np.ndarray, pads: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape, self.pads = x.shape, tuple(pads)
        lead = x.ndim - len(self.pads)
        widths = [(0, 0)] * lead + [(0, p) for p in self.pads]
        return np.pad(x, widths, mode="edge")

    def backward(self, grad: np.ndarray):
        lead = len(self.shape) - len(self.pads)
        g = grad
        for offset, pad in enumerate(self.pads):
            if pad == 0:
                continue
            axis = lead + offset
            n = self.shape[axis]
            core = np.take(g, np.arange(n), axis=axis).copy()
            spill = np.take(g, np.arange(n, n + pad), axis=axis).sum(axis=axis)
            edge = [slice(None)] * g.ndim
            edge[axis] = n - 1
            core[tuple(edge)] += spill
            g = core
        return (g,)


class UpsampleNearest(Function):
    """Repeat each of the trailing `spatial` axes `factor` times."""

    def forward(self, x: np.ndarray, factor: int = 2, spatial: int = 2) -> np.ndarray:
        self.shape, self.factor, self.spatial = x.shape, factor, spatial
        out = x
        for axis in range(x.ndim - spatial, x.ndim):
            out = np.repeat(out, factor, axis=axis)
        return out

    def backward(self, grad: np.ndarray):
        lead = self.shape[: len(self.shape) - self.spatial]
        split = list(lead)
        for extent in self.shape[len(lead):]:
            split += [extent, self.factor]
        g = grad.reshape(split)
        reduce_axes = tuple(len(lead) + 2 * i + 1 for i in range(self.spatial))
        return (g.sum(axis=reduce_axes),)


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def flip(x: ArrayLike, axis: int = -1) -> Tensor:
    return Flip.apply(x, axis=axis)


def getitem(x: ArrayLike, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def edge_pad_end(x: ArrayLike, pads: Sequence[int]) -> Tensor:
    return EdgePadEnd.apply(x, pads=tuple(pads))


def upsample_nearest(x: ArrayLike, factor: int = 2, spatial: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor, spatial=spatial)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


class MaskedSmoothL1(Function):
    """Mean smooth-L1 of (pred - target) over the pixels where `mask` is true."""

    def forward(self, pred: np.ndarray, target: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        if pred.shape != target.shape:
            raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ in shape")
        mask = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ShapeError(f"mask {mask.shape} does not match prediction {pred.shape}")
        count = int(mask.sum())
        if count == 0:
            raise EmptyMaskError("smooth-L1 over an empty validity mask")
        diff = pred - target
        small = np.abs(diff) < 1.0
        per_pixel = np.where(small, 0.5 * diff * diff, np.abs(diff) - 0.5)
        self.mask, self.count = mask, count
        self.slope = np.where(small, diff, np.sign(diff))
        return np.asarray(per_pixel[mask].sum() / count, dtype=pred.dtype)

    def backward(self, grad: np.ndarray):
        g = grad * self.slope * self.mask / self.count
        return g, -g


def smooth_l1(pred: ArrayLike, target: ArrayLike, mask: Optional[np.ndarray] = None) -> Tensor:
    return MaskedSmoothL1.apply(pred, target, mask=mask)
