"""Activation tensors, the ATD dump format, and network catalogs.

The ATD container is the bit-exact interchange format that decouples the
numeric pipeline from whatever produced the activations.  Layout:

    bytes 0-3   magic ``ATD1``
    byte  4     kind: 0 = CNN volume, 1 = ViT token matrix
    byte  5     reserved, must be 0
    bytes 6-7   uint16 little-endian dim count (3 for volumes, 2 for tokens)
    then        dim count x uint32 little-endian dims
    then        float32 little-endian payload, row-major / patch-major
                (all channels of patch 0, then patch 1, ...)
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AtdFormatError, AtdTruncationError, CatalogError, TensorDataError

ATD_MAGIC = b"ATD1"
_HEADER = struct.Struct("<4sBBH")


class TensorKind(enum.IntEnum):
    CNN_VOLUME = 0
    VIT_TOKENS = 1


@dataclass(frozen=True)
class ActivationTensor:
    """One image's activations at one layer.

    ``data`` is float32, shaped ``(S, S, C)`` for CNN volumes (channels
    contiguous per spatial position) or ``(P, E)`` for ViT token matrices.
    """

    kind: TensorKind
    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.kind == TensorKind.CNN_VOLUME:
            if arr.ndim != 3:
                raise TensorDataError(f"CNN volume must be 3-d, got shape {arr.shape}")
            if arr.shape[0] != arr.shape[1]:
                raise TensorDataError(f"CNN volume must be square, got shape {arr.shape}")
        else:
            if arr.ndim != 2:
                raise TensorDataError(f"token matrix must be 2-d, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise TensorDataError(f"all dims must be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise TensorDataError("activation tensor contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def n_patches(self) -> int:
        if self.kind == TensorKind.CNN_VOLUME:
            return self.data.shape[0] * self.data.shape[1]
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[-1]

    def as_matrix(self) -> np.ndarray:
        """View as a (patches, channels) matrix; rows are patch slices."""
        return self.data.reshape(self.n_patches, self.n_channels)


def write_activation_dump(tensor: ActivationTensor, path) -> None:
    """Serialize ``tensor`` to ``path`` in the ATD container format."""
    dims = tensor.data.shape
    payload = tensor.data.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ATD_MAGIC, int(tensor.kind), 0, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(payload)


def read_activation_dump(path) -> ActivationTensor:
    """Read an ATD file, validating header, payload size, and finiteness."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise AtdFormatError(f"{path}: file shorter than the ATD header")
    magic, kind_byte, reserved, ndim = _HEADER.unpack_from(blob)
    if magic != ATD_MAGIC:
        raise AtdFormatError(f"{path}: bad magic {magic!r}")
    if kind_byte not in (0, 1):
        raise AtdFormatError(f"{path}: unknown tensor kind {kind_byte}")
    if reserved != 0:
        raise AtdFormatError(f"{path}: reserved byte must be 0, got {reserved}")
    kind = TensorKind(kind_byte)
    expect_ndim = 3 if kind == TensorKind.CNN_VOLUME else 2
    if ndim != expect_ndim:
        raise AtdFormatError(f"{path}: kind {kind.name} requires {expect_ndim} dims, header says {ndim}")
    dims_end = _HEADER.size + 4 * ndim
    if len(blob) < dims_end:
        raise AtdFormatError(f"{path}: truncated dim list")
    dims = struct.unpack_from(f"<{ndim}I", blob, _HEADER.size)
    if any(d < 1 for d in dims):
        raise AtdFormatError(f"{path}: zero-sized dim in {dims}")
    expected = int(np.prod(dims)) * 4
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise AtdTruncationError(
            f"{path}: payload is {len(payload)} bytes, shape {dims} needs {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.all(np.isfinite(data)):
        raise TensorDataError(f"{path}: payload contains non-finite values")
    return ActivationTensor(kind, data.copy())


@dataclass(frozen=True)
class CatalogLayer:
    name: str
    cum_learnables: int
    shape: tuple = ()


@dataclass(frozen=True)
class NetworkCatalogEntry:
    """Geometry and learnables accounting for one exported network."""

    name: str
    total_params: int
    layers: Sequence[CatalogLayer] = field(default_factory=tuple)
    input_side: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        counts = [layer.cum_learnables for layer in self.layers]
        if any(b < a for a, b in zip(counts, counts[1:])):
            raise CatalogError(f"{self.name}: cumulative learnables must be non-decreasing")
        if counts and counts[-1] != self.total_params:
            raise CatalogError(
                f"{self.name}: final cumulative count {counts[-1]} != total {self.total_params}"
            )

    @property
    def layer_names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def layer(self, name: str) -> CatalogLayer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise CatalogError(f"{self.name}: unknown layer {name!r}")


def learnables_up_to(entry: NetworkCatalogEntry, layer_name: str) -> int:
    """Cumulative trainable-parameter count up to and including ``layer_name``."""
    return entry.layer(layer_name).cum_learnables


def load_catalog(path) -> NetworkCatalogEntry:
    """Load the JSON catalog sidecar emitted by the export tool."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogError(f"cannot read catalog {path}: {exc}") from exc
    try:
        layers = [
            CatalogLayer(l["name"], int(l["cum_learnables"]), tuple(l.get("shape", ())))
            for l in raw["layers"]
        ]
        return NetworkCatalogEntry(
            name=raw["name"],
            total_params=int(raw["total_params"]),
            layers=layers,
            input_side=raw.get("input_side"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"malformed catalog {path}: {exc}") from exc


def save_catalog(entry: NetworkCatalogEntry, path) -> None:
    doc = {
        "name": entry.name,
        "total_params": entry.total_params,
        "input_side": entry.input_side,
        "layers": [
            {"name": l.name, "cum_learnables": l.cum_learnables, "shape": list(l.shape)}
            for l in entry.layers
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
