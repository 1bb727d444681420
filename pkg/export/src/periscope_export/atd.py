"""Writer/reader for ATD activation dumps.

Deliberately self-contained: this tool talks to the verification pipeline
only through files, so the container format is implemented here again
rather than imported. Layout: magic ``ATD1``, kind byte (0 CNN volume,
1 ViT tokens), reserved 0, uint16 LE dim count, uint32 LE dims, float32
LE payload in C order (channels contiguous per patch).
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"ATD1"
KIND_CNN = 0
KIND_VIT = 1
_HEADER = struct.Struct("<4sBBH")
_NDIM = {KIND_CNN: 3, KIND_VIT: 2}


def write_atd(path, kind: int, data: np.ndarray) -> None:
    """Write one activation tensor: (S, S, C) for CNN, (P, E) for ViT."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if kind not in _NDIM:
        raise ExportError(f"unknown tensor kind {kind}")
    if arr.ndim != _NDIM[kind]:
        raise ExportError(f"kind {kind} needs {_NDIM[kind]} dims, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ExportError(f"all dims must be >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ExportError("activation tensor contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, kind, 0, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_atd(path) -> tuple:
    """Read an ATD file back as (kind, float32 array)."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ExportError(f"{path}: file shorter than the ATD header")
    magic, kind, reserved, ndim = _HEADER.unpack_from(blob)
    if magic != MAGIC or reserved != 0 or kind not in _NDIM or ndim != _NDIM[kind]:
        raise ExportError(f"{path}: malformed ATD header")
    dims_end = _HEADER.size + 4 * ndim
    if len(blob) < dims_end:
        raise ExportError(f"{path}: truncated dim list")
    dims = struct.unpack_from(f"<{ndim}I", blob, _HEADER.size)
    expected = int(np.prod(dims)) * 4
    if len(blob) - dims_end != expected:
        raise ExportError(f"{path}: payload is {len(blob) - dims_end} bytes, shape {dims} needs {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=dims_end).reshape(dims)
    return kind, data.copy()
