"""Runs an exported graph over a directory of images and writes its tap
activations as ATD files, one subdirectory per image. These dumps are the
reference side of the cross-implementation parity check.
"""

import json
from pathlib import Path

import cv2
import numpy as np

from .atd import KIND_CNN, KIND_VIT, write_atd
from .errors import ExportError

IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg")


def load_spec(spec_path) -> dict:
    spec_path = Path(spec_path)
    try:
        spec = json.loads(spec_path.read_text())
        spec["graph"] = spec_path.parent / spec["graph"]
        spec["input"]
        spec["taps"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ExportError(f"malformed spec {spec_path}: {exc}") from exc
    if not spec["graph"].exists():
        raise ExportError(f"graph artifact {spec['graph']} does not exist")
    return spec


def prepare_batch(img: np.ndarray, inp: dict) -> np.ndarray:
    """Image to a (1, C, side, side) float32 batch per the input contract."""
    side, channels = int(inp["side"]), int(inp["channels"])
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], channels, axis=2)
    if arr.shape[:2] != (side, side):
        arr = cv2.resize(arr, (side, side), interpolation=cv2.INTER_LINEAR).reshape(side, side, channels)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    arr = (arr.astype(np.float32) - np.asarray(inp["mean"], dtype=np.float32)) / np.asarray(
        inp["std"], dtype=np.float32
    )
    return np.ascontiguousarray(arr.transpose(2, 0, 1))[None, ...]


def dump_reference_activations(spec_path, image_dir, out_dir, taps=None) -> int:
    """Dump every tap for every image; returns the number of ATD files."""
    import torch

    spec = load_spec(spec_path)
    wanted = list(taps) if taps is not None else list(spec["taps"])
    unknown = [t for t in wanted if t not in spec["taps"]]
    if unknown:
        raise ExportError(f"taps not exported: {unknown}")
    images = sorted(p for p in Path(image_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise ExportError(f"no images found under {image_dir}")
    module = torch.jit.load(str(spec["graph"]), map_location="cpu").eval()
    out_dir = Path(out_dir)
    written = 0
    for image_path in images:
        img = cv2.imread(str(image_path), cv2.IMREAD_GRAYSCALE)
        if img is None:
            raise ExportError(f"cannot read image {image_path}")
        batch = torch.from_numpy(prepare_batch(img, spec["input"]))
        with torch.no_grad():
            outputs = module(batch)
        target = out_dir / image_path.stem
        target.mkdir(parents=True, exist_ok=True)
        for tap in wanted:
            if tap not in outputs:
                raise ExportError(f"graph produced no output for tap {tap!r}")
            raw = outputs[tap].numpy()
            if raw.ndim == 4:  # (1, C, S, S) -> patch-major (S, S, C)
                write_atd(target / f"{tap}.atd", KIND_CNN, raw[0].transpose(1, 2, 0))
            elif raw.ndim == 3:  # (1, P, E) -> (P, E)
                write_atd(target / f"{tap}.atd", KIND_VIT, raw[0])
            else:
                raise ExportError(f"{tap}: unexpected output rank {raw.shape}")
            written += 1
    return written
