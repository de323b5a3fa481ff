"""
Parameter checkpoint container.

Layout (all integers little-endian):

    bytes 0..7    magic b"RRESMCK1"
    bytes 8..11   uint32 manifest length M
    next M bytes  UTF-8 JSON manifest
    remainder     concatenated float32 payloads

The manifest is {"version": 1, "tensors": [{"name", "shape", "dtype",
"offset", "nbytes"}, ...], "meta": {...}} with offsets relative to the first
payload byte.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.errors import CheckpointError
from src.numerics.module import Module
from src.utils.atomic import write_bytes_atomic

logger = logging.getLogger(__name__)

MAGIC = b"RRESMCK1"
VERSION = 1
PAYLOAD_DTYPE = "<f4"


def encode_checkpoint(tensors: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> bytes:
    entries: List[Dict[str, Any]] = []
    chunks: List[bytes] = []
    offset = 0
    for name, value in tensors.items():
        payload = np.ascontiguousarray(value, dtype=PAYLOAD_DTYPE).tobytes()
        entries.append(
            {
                "name": name,
                "shape": [int(s) for s in np.shape(value)],
                "dtype": PAYLOAD_DTYPE,
                "offset": offset,
                "nbytes": len(payload),
            }
        )
        chunks.append(payload)
        offset += len(payload)
    manifest = json.dumps({"version": VERSION, "tensors": entries, "meta": meta or {}}).encode("utf-8")
    return MAGIC + struct.pack("<I", len(manifest)) + manifest + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    manifest = read_manifest_bytes(blob)
    start = len(MAGIC) + 4 + _manifest_length(blob)
    payload = memoryview(blob)[start:]
    tensors: Dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        try:
            name, shape = entry["name"], tuple(entry["shape"])
            offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
            dtype = entry.get("dtype", PAYLOAD_DTYPE)
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"malformed manifest entry {entry!r}: {e}") from e
        if dtype != PAYLOAD_DTYPE:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {dtype!r}")
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if nbytes != expected or offset < 0 or offset + nbytes > len(payload):
            raise CheckpointError(f"tensor {name!r} payload is truncated or inconsistent with shape {shape}")
        array = np.frombuffer(payload[offset : offset + nbytes], dtype=PAYLOAD_DTYPE).reshape(shape)
        tensors[name] = array.astype(np.float32)
    return tensors, manifest.get("meta", {})


def _manifest_length(blob: bytes) -> int:
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (length,) = struct.unpack("<I", blob[len(MAGIC) : len(MAGIC) + 4])
    if len(MAGIC) + 4 + length > len(blob):
        raise CheckpointError("checkpoint manifest is truncated")
    return length


def read_manifest_bytes(blob: bytes) -> Dict[str, Any]:
    length = _manifest_length(blob)
    raw = blob[len(MAGIC) + 4 : len(MAGIC) + 4 + length]
    try:
        manifest = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"checkpoint manifest is not valid JSON: {e}") from e
    if not isinstance(manifest, dict) or manifest.get("version") != VERSION or "tensors" not in manifest:
        raise CheckpointError(f"unsupported checkpoint manifest version {manifest.get('version')!r}")
    return manifest


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    return read_manifest_bytes(_read(path))


def manifest_parameter_count(manifest: Dict[str, Any]) -> int:
    """Number of scalars described by a manifest (sum of shape products)."""
    return int(sum(int(np.prod(entry["shape"], dtype=np.int64)) for entry in manifest["tensors"]))


def _read(path: Union[str, Path]) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e


def save_checkpoint(model: Module, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> str:
    blob = encode_checkpoint(model.state_dict(), meta)
    written = write_bytes_atomic(path, blob)
    logger.info(f"Saved checkpoint with {model.parameter_count()} parameters to {written}")
    return written


def load_checkpoint(model: Module, path: Union[str, Path]) -> Dict[str, Any]:
    """Load weights into `model` in place and return the checkpoint's meta dictionary."""
    tensors, meta = decode_checkpoint(_read(path))
    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(tensors))
    unexpected = sorted(set(tensors) - set(params))
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint does not match the model: missing={missing[:5]} unexpected={unexpected[:5]}"
        )
    for name, param in params.items():
        if tensors[name].shape != param.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {tensors[name].shape} vs model {param.shape}"
            )
        param.assign(tensors[name])
    logger.info(f"Loaded {len(params)} tensors from {path}")
    return meta
