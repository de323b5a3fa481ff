#!/usr/bin/env python3
"""
RRESM Stereo Matching

Inference, toy training, evaluation, benchmarking and self-tests for the
endoscopic stereo pipeline.
"""

import os

from src.config import THREADS

# BLAS reads these once at import time, so they must be set before numpy loads
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, str(THREADS))

from src.cli import StereoCLI  # noqa: E402


def main():
    cli = StereoCLI()
    raise SystemExit(cli.run())


if __name__ == "__main__":
    main()
