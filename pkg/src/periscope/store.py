"""Disk-backed feature store and comparator registry.

Layout under one root (usually ``$PERISCOPE_CACHE``):

    <root>/lbp/<image_id>.atd          block descriptor as a 1xN tensor
    <root>/hog/<image_id>.atd          likewise
    <root>/sift/<image_id>.atd         Kx128 descriptors (absent when K = 0)
    <root>/sift/<image_id>.json        keypoint sidecar {x, y, scale, orientation}
    <root>/<network>/<layer>/<image_id>.atd   raw activations

Comparator ids name what ``score`` fuses: ``lbp``/``hog`` (negated
chi-square), ``sift`` (match score), or ``<network>:<layer>:<strategy>``
(cosine under the named normalization).
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ComparatorError, MissingFeatureError
from .handcrafted import (
    GRID,
    HOG_BINS,
    LBP_BINS,
    BlockHistogramDescriptor,
    KeypointSet,
    chi2_distance,
    detect_keypoints,
    hog_descriptor,
    lbp_descriptor,
    sift_match_score,
)
from .normalize import normalize_tensor, parse_strategy, score_normalized
from .tensors import ActivationTensor, TensorKind, read_activation_dump, write_activation_dump

HANDCRAFTED_KINDS = ("lbp", "hog", "sift")
_BINS = {"lbp": LBP_BINS, "hog": HOG_BINS}


def sanitize_layer(name: str) -> str:
    """Directory-safe form of a layer name."""
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


class FeatureStore:
    def __init__(self, root):
        self.root = Path(root)

    # -- handcrafted descriptors ------------------------------------

    def _descriptor_path(self, kind: str, image_id: str) -> Path:
        return self.root / kind / f"{image_id}.atd"

    def save_descriptor(self, image_id: str, desc: BlockHistogramDescriptor) -> None:
        path = self._descriptor_path(desc.kind, image_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tensor = ActivationTensor(TensorKind.VIT_TOKENS, desc.data.reshape(1, -1))
        write_activation_dump(tensor, path)

    def load_descriptor(self, kind: str, image_id: str) -> BlockHistogramDescriptor:
        path = self._descriptor_path(kind, image_id)
        if not path.exists():
            raise MissingFeatureError(f"no {kind} descriptor for {image_id!r}")
        tensor = read_activation_dump(path)
        bins = _BINS[kind]
        return BlockHistogramDescriptor(kind, GRID, bins, tensor.data.reshape(-1))

    # -- SIFT keypoints -----------------------------------------------

    def save_keypoints(self, image_id: str, keypoints: KeypointSet) -> None:
        directory = self.root / "sift"
        directory.mkdir(parents=True, exist_ok=True)
        sidecar = {
            "points": [
                {
                    "x": float(keypoints.xy[i, 0]),
                    "y": float(keypoints.xy[i, 1]),
                    "scale": float(keypoints.scale[i]),
                    "orientation": float(keypoints.orientation[i]),
                }
                for i in range(len(keypoints))
            ]
        }
        (directory / f"{image_id}.json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
        atd = directory / f"{image_id}.atd"
        if len(keypoints):
            tensor = ActivationTensor(TensorKind.VIT_TOKENS, keypoints.descriptors)
            write_activation_dump(tensor, atd)
        elif atd.exists():
            atd.unlink()

    def load_keypoints(self, image_id: str) -> KeypointSet:
        sidecar = self.root / "sift" / f"{image_id}.json"
        if not sidecar.exists():
            raise MissingFeatureError(f"no keypoints for {image_id!r}")
        points = json.loads(sidecar.read_text())["points"]
        if not points:
            return KeypointSet(np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros((0, 128), np.float32))
        descriptors = read_activation_dump(self.root / "sift" / f"{image_id}.atd").data
        return KeypointSet(
            xy=np.array([[p["x"], p["y"]] for p in points]),
            scale=np.array([p["scale"] for p in points]),
            orientation=np.array([p["orientation"] for p in points]),
            descriptors=descriptors,
        )

    # -- network activations ------------------------------------------

    def activation_path(self, network: str, layer: str, image_id: str) -> Path:
        return self.root / network / sanitize_layer(layer) / f"{image_id}.atd"

    def save_activation(self, network: str, layer: str, image_id: str, tensor: ActivationTensor) -> None:
        path = self.activation_path(network, layer, image_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_activation_dump(tensor, path)

    def load_activation(self, network: str, layer: str, image_id: str) -> ActivationTensor:
        path = self.activation_path(network, layer, image_id)
        if not path.exists():
            raise MissingFeatureError(f"no {network}/{layer} activation for {image_id!r}")
        return read_activation_dump(path)

    def has_activation(self, network: str, layer: str, image_id: str) -> bool:
        return self.activation_path(network, layer, image_id).exists()


def compute_handcrafted(store: FeatureStore, image_id: str, img, kinds=HANDCRAFTED_KINDS) -> None:
    """Extract and persist the requested handcrafted features for one image."""
    if "lbp" in kinds:
        store.save_descriptor(image_id, lbp_descriptor(img))
    if "hog" in kinds:
        store.save_descriptor(image_id, hog_descriptor(img))
    if "sift" in kinds:
        store.save_keypoints(image_id, detect_keypoints(img))


def parse_comparator_id(comp_id: str) -> tuple:
    """Split a comparator id into ('handcrafted', kind) or
    ('network', network, layer, strategy)."""
    if comp_id in HANDCRAFTED_KINDS:
        return ("handcrafted", comp_id)
    parts = comp_id.split(":")
    if len(parts) == 3 and all(parts):
        parse_strategy(parts[2])
        return ("network", parts[0], parts[1], parts[2])
    raise ComparatorError(
        f"bad comparator id {comp_id!r}: expected lbp|hog|sift or network:layer:strategy"
    )


def make_comparator(store: FeatureStore, comp_id: str):
    """Build ``score_pair(enrol_id, probe_id) -> float`` for a comparator id.

    Outputs are similarity-polarity: chi-square distances come back
    negated, so a larger value always means "more genuine".
    """
    parsed = parse_comparator_id(comp_id)
    if parsed[0] == "handcrafted":
        kind = parsed[1]
        if kind == "sift":
            @lru_cache(maxsize=256)
            def _keypoints(image_id: str) -> KeypointSet:
                return store.load_keypoints(image_id)

            def score_pair(enrol: str, probe: str) -> float:
                return sift_match_score(_keypoints(enrol), _keypoints(probe))
        else:
            @lru_cache(maxsize=256)
            def _descriptor(image_id: str) -> BlockHistogramDescriptor:
                return store.load_descriptor(kind, image_id)

            def score_pair(enrol: str, probe: str) -> float:
                return -chi2_distance(_descriptor(enrol), _descriptor(probe))
    else:
        _, network, layer, strategy_token = parsed
        strategy = parse_strategy(strategy_token)

        @lru_cache(maxsize=64)
        def _normalized(image_id: str) -> np.ndarray:
            return normalize_tensor(store.load_activation(network, layer, image_id), strategy)

        def score_pair(enrol: str, probe: str) -> float:
            a, b = _normalized(enrol), _normalized(probe)
            if a.shape != b.shape:
                raise ComparatorError(
                    f"{comp_id}: feature shapes differ between {enrol!r} and {probe!r}"
                )
            return score_normalized(a, b, strategy)

    return score_pair
