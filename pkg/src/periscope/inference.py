"""Executes exported model graphs and dumps intermediate activations.

A ModelGraph bundles a TorchScript artifact whose forward pass returns
every tapped layer's tensor by name, the network catalog describing the
expected geometry, and the input contract (side, channels, mean/std).
Execution is CPU-only and deterministic; activations come back as ATD
tensors shaped (S, S, C) for CNN taps and (P, E) for ViT taps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import CatalogError, ExtractionError, PeriscopeError
from .store import FeatureStore
from .tensors import ActivationTensor, NetworkCatalogEntry, TensorKind, load_catalog

PARITY_THRESHOLD = 0.999


def _torch():
    try:
        import torch
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise PeriscopeError(
            "PyTorch is required to execute model graphs; install periscope[graph]"
        ) from exc
    return torch


@dataclass(frozen=True)
class InputSpec:
    side: int
    channels: int
    mean: tuple
    std: tuple

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.mean) != self.channels or len(self.std) != self.channels:
            raise CatalogError("input mean/std length must equal the channel count")
        if any(s <= 0 for s in self.std):
            raise CatalogError("input std entries must be positive")


@dataclass(frozen=True)
class ModelGraph:
    graph_path: Path
    catalog: NetworkCatalogEntry
    taps: tuple
    input: InputSpec

    def __post_init__(self):
        known = set(self.catalog.layer_names)
        missing = [t for t in self.taps if t not in known]
        if missing:
            raise CatalogError(f"{self.catalog.name}: taps absent from catalog: {missing}")


def load_model_graph(spec_path) -> ModelGraph:
    """Read a ModelGraph spec JSON; relative paths resolve next to the spec."""
    spec_path = Path(spec_path)
    try:
        raw = json.loads(spec_path.read_text())
        inp = raw["input"]
        spec = ModelGraph(
            graph_path=spec_path.parent / raw["graph"],
            catalog=load_catalog(spec_path.parent / raw["catalog"]),
            taps=tuple(raw["taps"]),
            input=InputSpec(int(inp["side"]), int(inp["channels"]), inp["mean"], inp["std"]),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"malformed model spec {spec_path}: {exc}") from exc
    if not spec.graph_path.exists():
        raise CatalogError(f"graph artifact {spec.graph_path} does not exist")
    return spec


def prepare_input(img: np.ndarray, spec: InputSpec) -> np.ndarray:
    """Image to a (1, C, side, side) float32 batch per the input contract.

    Grayscale input is replicated across channels; uint8 is scaled to
    [0, 1]; float input is taken as already being in [0, 1].
    """
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], spec.channels, axis=2)
    if arr.ndim != 3 or arr.shape[2] != spec.channels:
        raise ExtractionError(f"input shape {np.asarray(img).shape} does not fit {spec.channels} channels")
    if arr.shape[:2] != (spec.side, spec.side):
        arr = cv2.resize(arr, (spec.side, spec.side), interpolation=cv2.INTER_LINEAR)
        arr = arr.reshape(spec.side, spec.side, spec.channels)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    arr = arr.astype(np.float32)
    mean = np.asarray(spec.mean, dtype=np.float32)
    std = np.asarray(spec.std, dtype=np.float32)
    arr = (arr - mean) / std
    return np.ascontiguousarray(arr.transpose(2, 0, 1))[None, ...]


def _to_tensor(name: str, raw: np.ndarray, catalog: NetworkCatalogEntry) -> ActivationTensor:
    expected = tuple(catalog.layer(name).shape)
    if raw.ndim == 4 and raw.shape[0] == 1:  # (1, C, S, S) -> (S, S, C)
        data = np.ascontiguousarray(raw[0].transpose(1, 2, 0))
        kind = TensorKind.CNN_VOLUME
    elif raw.ndim == 3 and raw.shape[0] == 1:  # (1, P, E) -> (P, E)
        data = np.ascontiguousarray(raw[0])
        kind = TensorKind.VIT_TOKENS
    else:
        raise ExtractionError(f"{catalog.name}/{name}: unexpected output rank {raw.shape}")
    if expected and data.shape != expected:
        raise ExtractionError(
            f"{catalog.name}/{name}: extracted shape {data.shape} does not match catalog {expected}"
        )
    return ActivationTensor(kind, data)


def extract_activations(graph: ModelGraph, img: np.ndarray, taps=None) -> dict:
    """Run the graph on one image and return {tap name: ActivationTensor}."""
    torch = _torch()
    taps = tuple(taps) if taps is not None else graph.taps
    unknown = [t for t in taps if t not in graph.taps]
    if unknown:
        raise ExtractionError(f"{graph.catalog.name}: taps not exported: {unknown}")
    module = torch.jit.load(str(graph.graph_path), map_location="cpu")
    module.eval()
    batch = torch.from_numpy(prepare_input(img, graph.input))
    with torch.no_grad():
        outputs = module(batch)
    result = {}
    for name in taps:
        if name not in outputs:
            raise ExtractionError(f"{graph.catalog.name}: graph produced no output for tap {name!r}")
        result[name] = _to_tensor(name, outputs[name].numpy(), graph.catalog)
    return result


def extract_to_store(graph: ModelGraph, records, image_dir, store: FeatureStore, taps=None) -> int:
    """Extract activations for every manifest record into the feature store."""
    from .preprocess import read_grayscale

    taps = tuple(taps) if taps is not None else graph.taps
    count = 0
    for rec in records:
        img = read_grayscale(Path(image_dir) / rec.path)
        for name, tensor in extract_activations(graph, img, taps).items():
            store.save_activation(graph.catalog.name, name, rec.image_id, tensor)
            count += 1
    return count


@dataclass(frozen=True)
class ParityEntry:
    tap: str
    cosine: float | None
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class ParityReport:
    entries: tuple

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failed(self) -> list:
        return [e for e in self.entries if not e.passed]


def _flat_cosine(a: np.ndarray, b: np.ndarray) -> float:
    x = a.astype(np.float64).ravel()
    y = b.astype(np.float64).ravel()
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 and ny == 0.0:
        return 1.0
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(x @ y / (nx * ny))


def verify_parity(extracted: dict, reference: dict, threshold: float = PARITY_THRESHOLD) -> ParityReport:
    """Per-tap cosine between two activation maps of the same image."""
    entries = []
    for tap in sorted(set(extracted) | set(reference)):
        if tap not in extracted or tap not in reference:
            side = "extracted" if tap not in extracted else "reference"
            entries.append(ParityEntry(tap, None, False, f"missing on the {side} side"))
            continue
        a, b = extracted[tap], reference[tap]
        if a.data.shape != b.data.shape:
            entries.append(
                ParityEntry(tap, None, False, f"shape mismatch {a.data.shape} vs {b.data.shape}")
            )
            continue
        cosine = _flat_cosine(a.data, b.data)
        entries.append(ParityEntry(tap, cosine, cosine >= threshold))
    return ParityReport(tuple(entries))
