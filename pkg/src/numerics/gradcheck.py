"""
Central finite-difference gradient checks.
"""

from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from src.numerics.module import Parameter, grad
from src.numerics.tensor import Tensor

DEFAULT_STEP = 1e-3


@dataclass
class GradCheckResult:
    name: str
    rel_error: float
    analytic_norm: float
    numeric_norm: float

    def passed(self, tol: float = 1e-3) -> bool:
        return self.rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||, 1e-12)."""
    diff = np.linalg.norm(analytic - numeric)
    scale = np.maximum(np.maximum(np.linalg.norm(analytic), np.linalg.norm(numeric)), 1e-12)
    return float(diff / scale)


def numeric_gradient(fn: Callable[[], Tensor], param: Parameter, h: float = DEFAULT_STEP) -> np.ndarray:
    out = np.zeros(param.shape, dtype=np.float64)
    flat = param.data.reshape(-1)
    view = out.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = float(fn().data)
        flat[i] = original - h
        minus = float(fn().data)
        flat[i] = original
        view[i] = (plus - minus) / (2.0 * h)
    return out


def gradcheck(
    fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    names: Sequence[str] = (),
    h: float = DEFAULT_STEP,
) -> List[GradCheckResult]:
    """
    Compare tape gradients of the scalar `fn()` with central differences.

    Parameters are promoted to float64 in place before checking; `fn` must
    rebuild its graph from the current parameter values on each call.
    """
    params = list(params)
    for p in params:
        p.astype(np.float64)
    grad(fn(), params)
    analytic = [p.grad.astype(np.float64).copy() for p in params]
    results = []
    for i, (p, a) in enumerate(zip(params, analytic)):
        n = numeric_gradient(fn, p, h)
        name = names[i] if i < len(names) else f"param{i}"
        results.append(GradCheckResult(name, relative_error(a, n), float(np.linalg.norm(a)), float(np.linalg.norm(n))))
    return results
