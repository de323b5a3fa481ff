"""
8-bit image I/O through Pillow.
"""

import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.errors import FormatError
from src.utils.atomic import write_bytes_atomic


def read_image(path: Union[str, Path]) -> np.ndarray:
    """Load a PNG/PGM as a 3×H×W float32 array in [0, 1]; grayscale is replicated to three channels."""
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode in ("I;16", "I", "F"):
                raise FormatError(f"{path}: only 8-bit images are supported, got mode {mode}")
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (OSError, UnidentifiedImageError) as e:
        raise FormatError(f"cannot read image {path}: {e}") from e
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    """3×H×W or H×W floats in [0, 1] -> uint8 in the PIL layout."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_png(path: Union[str, Path], pixels: np.ndarray) -> str:
    """Write H×W or H×W×3 uint8 pixels."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise FormatError(f"PNG output expects uint8 pixels, got {pixels.dtype}")
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PNG")
    return write_bytes_atomic(path, buffer.getvalue())


def write_image(path: Union[str, Path], image: np.ndarray) -> str:
    return write_png(path, to_uint8(image))
