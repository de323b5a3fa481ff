"""
Forward-pass timing, parameter count and analytic FLOPs.
"""

import logging
import time
from typing import Optional

import numpy as np
import pandas as pd

from src.config import BENCH_MIN_ITERS, BENCH_WARMUP_RUNS
from src.errors import ContractError
from src.models.report_models import BenchReport
from src.network.pipeline import RRESMNet
from src.numerics.profiling import count_flops
from src.numerics.tensor import no_grad

logger = logging.getLogger(__name__)


def time_forward(model: RRESMNet, left: np.ndarray, right: np.ndarray, iters: int, warmup: int) -> pd.Series:
    """Wall-clock milliseconds of each timed forward pass."""
    timings = []
    with no_grad():
        for _ in range(warmup):
            model(left, right)
        for _ in range(iters):
            start = time.perf_counter()
            model(left, right)
            timings.append((time.perf_counter() - start) * 1e3)
    return pd.Series(timings, name="ms")


def forward_flops(model: RRESMNet, left: np.ndarray, right: np.ndarray) -> int:
    with no_grad(), count_flops() as counter:
        model(left, right)
    return counter.total


def run_bench(
    model: RRESMNet,
    height: int,
    width: int,
    iters: int = 100,
    warmup: int = BENCH_WARMUP_RUNS,
    seed: int = 0,
    parameter_count: Optional[int] = None,
) -> BenchReport:
    if iters < BENCH_MIN_ITERS:
        raise ContractError(f"benchmarking needs at least {BENCH_MIN_ITERS} iterations, got {iters}")
    rng = np.random.default_rng(seed)
    left = rng.random((3, height, width), dtype=np.float32)
    right = rng.random((3, height, width), dtype=np.float32)

    flops = forward_flops(model, left, right)
    logger.info(f"Timing {iters} forward passes at {height}×{width} after {warmup} warm-up runs")
    timings = time_forward(model, left, right, iters, warmup)
    mean = float(timings.mean())
    std = float(timings.std(ddof=0))
    return BenchReport(
        height=height,
        width=width,
        iters=iters,
        warmup=warmup,
        mean_ms=mean,
        median_ms=float(timings.median()),
        std_ms=std,
        cv=std / mean if mean > 0 else 0.0,
        parameter_count=parameter_count if parameter_count is not None else model.parameter_count(),
        gflops=flops / 1e9,
        mca_enabled=model.cfg.mca.enabled,
        hfdo_enabled=model.cfg.hfdo.enabled,
    )
