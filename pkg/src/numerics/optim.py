"""
Adam with bias correction.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.numerics.module import Parameter


@dataclass
class AdamState:
    step: int = 0
    m: Dict[int, np.ndarray] = field(default_factory=dict)
    v: Dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Sequence[Parameter],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    state: Optional[AdamState] = None,
) -> AdamState:
    """
    Apply one Adam update to every parameter in place and return the advanced state.

    Moments are keyed by position in `params`, so the same ordering must be
    passed on every call.
    """
    state = state if state is not None else AdamState()
    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1**t
    correction2 = 1.0 - beta2**t
    for i, p in enumerate(params):
        g = p.grad.astype(np.float64)
        m = state.m.get(i)
        v = state.v.get(i)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[i], state.v[i] = m, v
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        p.data = (p.data - update).astype(p.dtype)
    return state


class Adam:
    """Stateful wrapper around `adam_step` bound to a parameter list."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self) -> None:
        self.state = adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
