"""
Grayscale PFM ("Pf") reader and writer.

Only little-endian files (negative scale) are supported. Rows are stored
bottom-to-top. Infinite values are allowed (they mark invalid ground
truth); NaN is rejected in both directions.
"""

import re
from pathlib import Path
from typing import Union

import numpy as np

from src.errors import FormatError
from src.utils.atomic import write_bytes_atomic

_HEADER = re.compile(rb"^(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", re.DOTALL)


def read_pfm(path: Union[str, Path]) -> np.ndarray:
    """Read an H×W float32 map."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read PFM file {path}: {e}") from e
    match = _HEADER.match(blob)
    if match is None:
        raise FormatError(f"{path}: not a PFM file (bad header)")
    magic, width, height = match.group(1), int(match.group(2)), int(match.group(3))
    try:
        scale = float(match.group(4))
    except ValueError as e:
        raise FormatError(f"{path}: malformed scale field {match.group(4)!r}") from e
    if magic == b"PF":
        raise FormatError(f"{path}: color PFM is not supported, expected grayscale 'Pf'")
    if scale >= 0:
        raise FormatError(f"{path}: big-endian PFM (positive scale {scale}) is not supported")
    payload = blob[match.end() :]
    expected = width * height * 4
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    data = np.frombuffer(payload[:expected], dtype="<f4").reshape(height, width)
    if np.isnan(data).any():
        raise FormatError(f"{path}: NaN values are not allowed")
    return np.flipud(data).astype(np.float32)


def write_pfm(path: Union[str, Path], values: np.ndarray) -> str:
    data = np.asarray(values)
    if data.ndim != 2:
        raise FormatError(f"PFM maps must be H×W, got shape {data.shape}")
    data = data.astype("<f4")
    if np.isnan(data).any():
        raise FormatError("refusing to write NaN values to PFM")
    height, width = data.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    return write_bytes_atomic(path, header + np.ascontiguousarray(np.flipud(data)).tobytes())
