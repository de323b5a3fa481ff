"""Analytic FLOP accounting for benchmarking (multiply-adds counted as two FLOPs)."""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List

_lock = threading.Lock()
_active: List["FlopCounter"] = []


@dataclass
class FlopCounter:
    total: int = 0

    @property
    def gflops(self) -> float:
        return self.total / 1e9


def record_flops(count: int) -> None:
    if not _active:
        return
    with _lock:
        for counter in _active:
            counter.total += int(count)


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """Collect the FLOPs of every op executed inside the block."""
    counter = FlopCounter()
    with _lock:
        _active.append(counter)
    try:
        yield counter
    finally:
        with _lock:
            _active.remove(counter)
