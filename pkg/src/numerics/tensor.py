"""
Dense tensor with a recorded computation tape.

Every differentiable operation is a `Function` subclass. `Function.apply`
runs `forward` on the raw numpy arrays and, while gradients are enabled,
links the result back to the function instance so `Tensor.backward` can
replay the tape in reverse topological order.
"""

import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ContractError, ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

DEFAULT_DTYPE = np.float32

_grad_lock = threading.Lock()
_grad_enabled = True


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (inference mode)."""
    global _grad_enabled
    with _grad_lock:
        previous = _grad_enabled
        _grad_enabled = False
    try:
        yield
    finally:
        with _grad_lock:
            _grad_enabled = previous


def unbroadcast(grad: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast axes so `grad` matches `to_shape` (inverse of numpy broadcasting)."""
    if grad.shape == to_shape:
        return grad
    while grad.ndim > len(to_shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(to_shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return np.asarray(grad).reshape(to_shape)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward(*arrays, **kwargs) -> np.ndarray` and
    `backward(grad) -> tuple`, returning one gradient (or None) per input
    tensor. Gradients may be returned in broadcast shape; the tape sums them
    back to the input shape.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: ArrayLike, **kwargs: Any) -> "Tensor":
        reference = next((t for t in inputs if isinstance(t, Tensor)), None)
        dtype = reference.dtype if reference is not None else None
        tensors = tuple(as_tensor(x, dtype=dtype) for x in inputs)
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = _grad_enabled and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)


class Tensor:
    """N-dimensional real array with optional gradient tracking."""

    __array_priority__ = 1000

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        dtype: Optional[np.dtype] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        array = np.asarray(data)
        if dtype is not None:
            array = array.astype(dtype, copy=False)
        elif not np.issubdtype(array.dtype, np.floating):
            array = array.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.creator = creator
        self.grad: Optional[np.ndarray] = None

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __hash__(self) -> int:
        return id(self)

    # ------------------------------------------------------------- autograd
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Propagate gradients from this tensor to every leaf that requires them.

        Leaf gradients accumulate into `.grad`; intermediate gradients are
        discarded once consumed.
        """
        if grad is None:
            if self.size != 1:
                raise ContractError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        pending: Dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.creator is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            input_grads = node.creator.backward(g)
            for inp, ig in zip(node.creator.inputs, input_grads):
                if ig is None or not inp.requires_grad:
                    continue
                ig = unbroadcast(np.asarray(ig, dtype=inp.dtype), inp.shape)
                key = id(inp)
                pending[key] = pending[key] + ig if key in pending else ig

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.dtype, copy=True)
        else:
            self.grad += g

    # ------------------------------------------------------------ operators
    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(other, self)

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return MatMul.apply(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return MatMul.apply(other, self)

    def __getitem__(self, index: Any) -> "Tensor":
        from src.numerics.functional import getitem

        return getitem(self, index)

    def reshape(self, *shape: int) -> "Tensor":
        from src.numerics.functional import reshape

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from src.numerics.functional import transpose

        return transpose(self, axes if axes else None)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from src.numerics.functional import sum as _sum

        return _sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from src.numerics.functional import mean

        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value: ArrayLike, dtype: Optional[np.dtype] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


class Add(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return x + y

    def backward(self, grad: np.ndarray):
        return grad, grad


class Sub(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return x - y

    def backward(self, grad: np.ndarray):
        return grad, -grad


class Mul(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x * y

    def backward(self, grad: np.ndarray):
        return grad * self.y, grad * self.x


class Div(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x / y

    def backward(self, grad: np.ndarray):
        return grad / self.y, -grad * self.x / (self.y * self.y)


class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray):
        return (-grad,)


class MatMul(Function):
    """Matrix product over the last two axes (leading axes broadcast)."""

    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        from src.numerics.profiling import record_flops

        if x.ndim < 2 or y.ndim < 2:
            raise ShapeError(f"matmul needs operands with at least two axes, got {x.shape} and {y.shape}")
        self.x, self.y = x, y
        out = np.matmul(x, y)
        record_flops(2 * out.size * x.shape[-1])
        return out

    def backward(self, grad: np.ndarray):
        gx = grad @ np.swapaxes(self.y, -1, -2)
        gy = np.swapaxes(self.x, -1, -2) @ grad
        return gx, gy
