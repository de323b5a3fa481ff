"""
Selective state-space scan with input-dependent parameters.

For every token t and head h the recurrence is

    h_t = exp(delta_t[h] * A[h]) * h_{t-1} + delta_t[h] * x_t[h] (outer) B_t
    y_t[h] = h_t C_t + D[h] * x_t[h]

with state h_t[h] of shape (P, N), h_0 = 0. B_t and C_t are shared by all
heads. The scan is sequential in t and vectorised over heads.
"""

from typing import Tuple

import numpy as np

from src.errors import ShapeError
from src.numerics.profiling import record_flops
from src.numerics.tensor import ArrayLike, Function, Tensor


def _check_shapes(x, delta, A, B, C, D) -> Tuple[int, int, int, int]:
    if x.ndim != 3:
        raise ShapeError(f"scan input must be (L, heads, head_dim), got {x.shape}")
    L, H, P = x.shape
    if L < 1:
        raise ShapeError("scan needs at least one token")
    N = B.shape[-1]
    expected = {
        "delta": ((L, H), delta.shape),
        "A": ((H,), A.shape),
        "B": ((L, N), B.shape),
        "C": ((L, N), C.shape),
        "D": ((H, P), D.shape),
    }
    for name, (want, got) in expected.items():
        if tuple(got) != want:
            raise ShapeError(f"scan parameter {name} must have shape {want}, got {tuple(got)}")
    return L, H, P, N


class SelectiveScan(Function):
    def forward(self, x, delta, A, B, C, D) -> np.ndarray:
        L, H, P, N = _check_shapes(x, delta, A, B, C, D)
        decay = np.exp(delta * A[None, :])
        states = np.zeros((L, H, P, N), dtype=x.dtype)
        y = np.empty_like(x)
        h = np.zeros((H, P, N), dtype=x.dtype)
        for t in range(L):
            u = (delta[t][:, None] * x[t])[:, :, None] * B[t][None, None, :]
            h = decay[t][:, None, None] * h + u
            states[t] = h
            y[t] = h @ C[t] + D * x[t]
        self.saved = (x, delta, A, B, C, D, decay, states)
        record_flops(6 * L * H * P * N)
        return y

    def backward(self, grad: np.ndarray):
        x, delta, A, B, C, D, decay, states = self.saved
        L, H, P, N = states.shape
        gx = np.zeros_like(x)
        gdelta = np.zeros_like(delta)
        gA = np.zeros_like(A)
        gB = np.zeros_like(B)
        gC = np.zeros_like(C)
        gD = np.zeros_like(D)
        carry = np.zeros((H, P, N), dtype=x.dtype)
        for t in range(L - 1, -1, -1):
            gy = grad[t]
            gh = gy[:, :, None] * C[t][None, None, :] + carry
            gC[t] = np.einsum("hpn,hp->n", states[t], gy)
            prev = states[t - 1] if t > 0 else np.zeros((H, P, N), dtype=x.dtype)
            gdecay = np.sum(gh * prev, axis=(1, 2))
            gh_B = gh @ B[t]
            gdelta[t] = np.sum(gh_B * x[t], axis=1) + gdecay * decay[t] * A
            gA += gdecay * decay[t] * delta[t]
            gx[t] = delta[t][:, None] * gh_B + D * gy
            gB[t] = np.einsum("hpn,hp->n", gh, delta[t][:, None] * x[t])
            gD += gy * x[t]
            carry = decay[t][:, None, None] * gh
        record_flops(10 * L * H * P * N)
        return gx, gdelta, gA, gB, gC, gD


def selective_scan(
    x: ArrayLike, delta: ArrayLike, A: ArrayLike, B: ArrayLike, C: ArrayLike, D: ArrayLike
) -> Tensor:
    """
    Run the recurrence over x of shape (L, heads, head_dim).

    Args:
        x: token values, (L, H, P)
        delta: positive step sizes, (L, H)
        A: per-head decay rates (<= 0 for a contracting state), (H,)
        B: input maps, (L, N)
        C: output maps, (L, N)
        D: skip coefficients, (H, P)

    Returns:
        Tensor of shape (L, H, P).
    """
    return SelectiveScan.apply(x, delta, A, B, C, D)
