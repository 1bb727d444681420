"""Geometric normalization of annotated periocular images.

The chain per record is: isotropic rescale so the sclera radius matches
its distance group's mean, a square crop of side round(7.6 * Rs) centered
on the sclera, and a horizontal mirror for right eyes so both eyes share
one canonical orientation.  Annotations ride along through every step;
the iris is left unmasked.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import AnnotationError, CatalogError, PeriscopeError
from .tensors import NetworkCatalogEntry

CROP_FACTOR = 7.6
DISTANCE_GROUPS = (4, 5, 6, 7, 8)
PNG_PARAMS = (cv2.IMWRITE_PNG_COMPRESSION, 3)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def scaled(self, factor: float) -> "Circle":
        return Circle(self.cx * factor, self.cy * factor, self.r * factor)

    def shifted(self, dx: float, dy: float) -> "Circle":
        return Circle(self.cx + dx, self.cy + dy, self.r)


@dataclass(frozen=True)
class ImageRecord:
    """One manifest row: where the image lives and how it is annotated."""

    path: str
    subject_id: str
    eye: str
    session: str
    distance_m: int
    pupil_circle: Circle
    sclera_circle: Circle

    def __post_init__(self):
        if self.eye not in ("L", "R"):
            raise AnnotationError(f"{self.path}: eye must be 'L' or 'R', got {self.eye!r}")
        d = self.distance_m
        if not (isinstance(d, (int, np.integer)) or float(d).is_integer()) or int(d) not in DISTANCE_GROUPS:
            raise AnnotationError(f"{self.path}: distance_m must be an integer in {DISTANCE_GROUPS}, got {d!r}")
        object.__setattr__(self, "distance_m", int(d))
        for name, circle in (("pupil_circle", self.pupil_circle), ("sclera_circle", self.sclera_circle)):
            if not isinstance(circle, Circle):
                raise AnnotationError(f"{self.path}: {name} must be a Circle")
            if not (circle.r > 0):
                raise AnnotationError(f"{self.path}: {name} radius must be > 0, got {circle.r}")

    @property
    def image_id(self) -> str:
        return Path(self.path).stem

    @property
    def user_key(self) -> tuple:
        """Identity for the verification protocol; each eye is its own user."""
        return (self.subject_id, self.eye)


def _circle_from_json(path: str, name: str, raw) -> Circle:
    try:
        return Circle(float(raw["cx"]), float(raw["cy"]), float(raw["r"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"{path}: malformed {name}: {exc}") from exc


def record_from_json(raw: dict) -> ImageRecord:
    path = raw.get("path", "<missing path>")
    try:
        return ImageRecord(
            path=raw["path"],
            subject_id=str(raw["subject_id"]),
            eye=raw["eye"],
            session=str(raw["session"]),
            distance_m=raw["distance_m"],
            pupil_circle=_circle_from_json(path, "pupil_circle", raw["pupil_circle"]),
            sclera_circle=_circle_from_json(path, "sclera_circle", raw["sclera_circle"]),
        )
    except KeyError as exc:
        raise AnnotationError(f"{path}: missing manifest field {exc}") from exc


def record_to_json(rec: ImageRecord) -> dict:
    return {
        "path": rec.path,
        "subject_id": rec.subject_id,
        "eye": rec.eye,
        "session": rec.session,
        "distance_m": rec.distance_m,
        "pupil_circle": dataclasses.asdict(rec.pupil_circle),
        "sclera_circle": dataclasses.asdict(rec.sclera_circle),
    }


def load_manifest(path) -> list:
    """Read a JSON-lines manifest of ImageRecords."""
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        records.append(record_from_json(raw))
    seen: dict = {}
    for rec in records:
        if rec.image_id in seen:
            raise AnnotationError(f"duplicate image id {rec.image_id!r} in {path}")
        seen[rec.image_id] = rec
    return records


def save_manifest(records, path) -> None:
    lines = [json.dumps(record_to_json(rec), sort_keys=True) for rec in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def group_mean_radius(records) -> dict:
    """Mean sclera radius per distance group, over the given manifest."""
    sums: dict = {}
    for rec in records:
        total, count = sums.get(rec.distance_m, (0.0, 0))
        sums[rec.distance_m] = (total + rec.sclera_circle.r, count + 1)
    return {d: total / count for d, (total, count) in sums.items()}


def scale_to_group_radius(img: np.ndarray, rec: ImageRecord, group_mean_rs: float) -> tuple:
    """Rescale image and annotations so the sclera radius equals the group mean."""
    if not group_mean_rs > 0:
        raise AnnotationError(f"{rec.path}: group mean radius must be > 0, got {group_mean_rs}")
    rs = rec.sclera_circle.r
    if not rs > 0:
        raise AnnotationError(f"{rec.path}: degenerate sclera radius {rs}")
    factor = group_mean_rs / rs
    height, width = img.shape[:2]
    new_w = max(1, int(round(width * factor)))
    new_h = max(1, int(round(height * factor)))
    if (new_w, new_h) != (width, height):
        img = cv2.resize(img, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    scaled = dataclasses.replace(
        rec,
        pupil_circle=rec.pupil_circle.scaled(factor),
        sclera_circle=rec.sclera_circle.scaled(factor),
    )
    return img, scaled


def _crop_geometry(center, rs: float) -> tuple:
    side = int(round(CROP_FACTOR * rs))
    if side < 1:
        raise AnnotationError(f"degenerate sclera radius {rs}: crop side would be {side}")
    x0 = int(round(center[0])) - side // 2
    y0 = int(round(center[1])) - side // 2
    return side, x0, y0


def crop_periocular(img: np.ndarray, sclera_center, rs: float) -> np.ndarray:
    """Square crop of side round(7.6 * Rs) around the sclera center.

    Regions falling outside the source image are zero-padded.
    """
    side, x0, y0 = _crop_geometry(sclera_center, rs)
    height, width = img.shape[:2]
    out = np.zeros((side, side) + img.shape[2:], dtype=img.dtype)
    sy0, sx0 = max(y0, 0), max(x0, 0)
    sy1, sx1 = min(y0 + side, height), min(x0 + side, width)
    if sy1 > sy0 and sx1 > sx0:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = img[sy0:sy1, sx0:sx1]
    return out


def canonicalize_orientation(img: np.ndarray, eye: str) -> np.ndarray:
    """Mirror right-eye images about the vertical axis; left eyes pass through."""
    if eye == "R":
        return np.ascontiguousarray(img[:, ::-1])
    return img


def resize_to_network(img: np.ndarray, network: NetworkCatalogEntry) -> np.ndarray:
    """Bilinear resize to the network's declared input side."""
    side = network.input_side
    if side is None:
        raise CatalogError(f"{network.name}: catalog declares no input side")
    if img.shape[:2] == (side, side):
        return img
    return cv2.resize(img, (side, side), interpolation=cv2.INTER_LINEAR)


def preprocess_record(img: np.ndarray, rec: ImageRecord, group_mean_rs: float) -> tuple:
    """Scale, crop, and orient one image; returns it with the updated record."""
    img, rec = scale_to_group_radius(img, rec, group_mean_rs)
    sclera = rec.sclera_circle
    side, x0, y0 = _crop_geometry((sclera.cx, sclera.cy), sclera.r)
    img = crop_periocular(img, (sclera.cx, sclera.cy), sclera.r)
    pupil = rec.pupil_circle.shifted(-x0, -y0)
    sclera = sclera.shifted(-x0, -y0)
    img = canonicalize_orientation(img, rec.eye)
    if rec.eye == "R":
        pupil = Circle(side - 1 - pupil.cx, pupil.cy, pupil.r)
        sclera = Circle(side - 1 - sclera.cx, sclera.cy, sclera.r)
    return img, dataclasses.replace(rec, pupil_circle=pupil, sclera_circle=sclera)


def read_grayscale(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise PeriscopeError(f"cannot read image {path}")
    return img


def run_prep(manifest_path, out_dir) -> Path:
    """Preprocess every manifest record into ``out_dir``.

    Writes one 8-bit grayscale PNG per record plus ``manifest.jsonl``
    describing the preprocessed images with updated annotations; paths in
    the new manifest are relative to ``out_dir``.  Returns the new
    manifest path.
    """
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_manifest(manifest_path)
    means = group_mean_radius(records)
    processed = []
    for rec in records:
        src = Path(rec.path)
        if not src.is_absolute():
            src = manifest_path.parent / src
        img = read_grayscale(src)
        img, new_rec = preprocess_record(img, rec, means[rec.distance_m])
        name = f"{rec.image_id}.png"
        if not cv2.imwrite(str(out_dir / name), img, PNG_PARAMS):
            raise PeriscopeError(f"cannot write image {out_dir / name}")
        processed.append(dataclasses.replace(new_rec, path=name))
    new_manifest = out_dir / "manifest.jsonl"
    save_manifest(processed, new_manifest)
    return new_manifest
