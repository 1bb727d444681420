"""Traditional comparators: block LBP and HOG histograms, chi-square
distance, and SIFT keypoint matching with a geometric consistency filter.

Conventions shared by the descriptor extractors:

* the image is split into an 8x8 grid of equal regions; remainder pixels
  at the right/bottom edges are dropped
* border handling is edge-replication, so every pixel produces a code or
  a gradient and every region holds exactly the same number of samples
* each region histogram is L2-normalized on its own (zero stays zero)
  and the 64 histograms are concatenated row-major
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ComparatorError, MissingFeatureError, TensorDataError

GRID = (8, 8)
LBP_NEIGHBORS = 8
LBP_RADIUS = 1.0
LBP_BINS = 59  # 58 uniform patterns + 1 catch-all
HOG_BINS = 9  # signed orientation, 40 degrees per bin
LOWE_RATIO = 0.8
ANGLE_MODE_BIN_DEG = 10.0
ANGLE_TOLERANCE_DEG = 20.0
LENGTH_TOLERANCE = 0.15


@dataclass(frozen=True)
class BlockHistogramDescriptor:
    """Concatenated per-region histograms for one image."""

    kind: str  # "lbp" | "hog"
    grid: tuple
    bins_per_block: int
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("lbp", "hog"):
            raise ComparatorError(f"unknown descriptor kind {self.kind!r}")
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        rows, cols = self.grid
        if arr.shape != (rows * cols * self.bins_per_block,):
            raise ComparatorError(
                f"{self.kind} descriptor length {arr.shape} does not match "
                f"{rows}x{cols} blocks of {self.bins_per_block} bins"
            )
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ComparatorError(f"{self.kind} descriptor entries must be finite and >= 0")
        object.__setattr__(self, "grid", (int(rows), int(cols)))
        object.__setattr__(self, "data", arr)


def _as_gray(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise TensorDataError(f"expected a 2-d grayscale image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise TensorDataError("image contains non-finite values")
    return arr


def _check_grid_fit(shape) -> None:
    rows, cols = GRID
    if shape[0] < rows or shape[1] < cols:
        raise ComparatorError(f"image {shape[0]}x{shape[1]} smaller than the {rows}x{cols} region grid")


def _block_index_map(height: int, width: int) -> tuple:
    """Flat block id per retained pixel, plus the retained crop extent."""
    rows, cols = GRID
    cell_h, cell_w = height // rows, width // cols
    crop_h, crop_w = cell_h * rows, cell_w * cols
    block_row = np.arange(crop_h) // cell_h
    block_col = np.arange(crop_w) // cell_w
    flat = block_row[:, None] * cols + block_col[None, :]
    return flat, crop_h, crop_w


def _l2_block_normalize(hist: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(hist, axis=1, keepdims=True)
    np.divide(hist, norms, out=hist, where=norms > 0.0)
    return hist


def _uniform_lut() -> np.ndarray:
    """Map each 8-bit code to its histogram bin.

    Codes whose circular bit pattern has at most two 0/1 transitions get
    their own bin in ascending code order; everything else shares bin 58.
    """
    lut = np.full(256, LBP_BINS - 1, dtype=np.int64)
    nxt = 0
    for code in range(256):
        bits = [(code >> k) & 1 for k in range(8)]
        transitions = sum(bits[k] != bits[(k + 1) % 8] for k in range(8))
        if transitions <= 2:
            lut[code] = nxt
            nxt += 1
    assert nxt == LBP_BINS - 1
    return lut


_LBP_LUT = _uniform_lut()
# Neighbor k sits at angle 2*pi*k/8 from the center; rounding scrubs the
# ~1e-17 trig residue so the four cardinal offsets are exactly integral.
_LBP_OFFSETS = tuple(
    (round(LBP_RADIUS * math.sin(2.0 * math.pi * k / LBP_NEIGHBORS), 15),
     round(LBP_RADIUS * math.cos(2.0 * math.pi * k / LBP_NEIGHBORS), 15))
    for k in range(LBP_NEIGHBORS)
)


def lbp_code_image(img) -> np.ndarray:
    """Uniform-LBP code (0..255) for every pixel of a grayscale image.

    Neighbors are sampled bilinearly at radius 1 with coordinates clamped
    to the image, and a neighbor counts as 1 when it is >= the center.
    Codes are plain sign patterns, not rotation-normalized.
    """
    arr = _as_gray(img)
    height, width = arr.shape
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    code = np.zeros(arr.shape, dtype=np.uint8)
    for k, (dy, dx) in enumerate(_LBP_OFFSETS):
        sy = np.clip(ys + dy, 0.0, height - 1.0)
        sx = np.clip(xs + dx, 0.0, width - 1.0)
        y0 = np.floor(sy).astype(np.int64)
        x0 = np.floor(sx).astype(np.int64)
        y1 = np.minimum(y0 + 1, height - 1)
        x1 = np.minimum(x0 + 1, width - 1)
        wy = sy - y0
        wx = sx - x0
        top = arr[y0, x0] + wx * (arr[y0, x1] - arr[y0, x0])
        bottom = arr[y1, x0] + wx * (arr[y1, x1] - arr[y1, x0])
        value = top + wy * (bottom - top)
        code |= (value >= arr).astype(np.uint8) << k
    return code


def lbp_descriptor(img) -> BlockHistogramDescriptor:
    """59-bin uniform-LBP histogram per region, L2-normalized, concatenated."""
    arr = _as_gray(img)
    _check_grid_fit(arr.shape)
    bins = _LBP_LUT[lbp_code_image(arr)]
    flat, crop_h, crop_w = _block_index_map(*arr.shape)
    hist = np.zeros((GRID[0] * GRID[1], LBP_BINS), dtype=np.float64)
    np.add.at(hist, (flat.ravel(), bins[:crop_h, :crop_w].ravel()), 1.0)
    data = _l2_block_normalize(hist).ravel()
    return BlockHistogramDescriptor("lbp", GRID, LBP_BINS, data)


def hog_descriptor(img) -> BlockHistogramDescriptor:
    """9-bin signed-orientation gradient histogram per region.

    Gradients are central differences over an edge-replicated border.  A
    gradient at angle theta (degrees, [0, 360)) votes its magnitude into
    the two bins whose centers at b*40 degrees straddle it, linearly by
    angular distance, so theta = 0 lands wholly in bin 0.
    """
    arr = _as_gray(img)
    _check_grid_fit(arr.shape)
    padded = np.pad(arr, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    magnitude = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 360.0
    position = theta / (360.0 / HOG_BINS)
    lower = np.floor(position).astype(np.int64)
    frac = position - lower
    flat, crop_h, crop_w = _block_index_map(*arr.shape)
    blocks = flat.ravel()
    lower_c = lower[:crop_h, :crop_w].ravel() % HOG_BINS
    frac_c = frac[:crop_h, :crop_w].ravel()
    mag_c = magnitude[:crop_h, :crop_w].ravel()
    hist = np.zeros((GRID[0] * GRID[1], HOG_BINS), dtype=np.float64)
    np.add.at(hist, (blocks, lower_c), mag_c * (1.0 - frac_c))
    np.add.at(hist, (blocks, (lower_c + 1) % HOG_BINS), mag_c * frac_c)
    data = _l2_block_normalize(hist).ravel()
    return BlockHistogramDescriptor("hog", GRID, HOG_BINS, data)


def chi2_distance(a: BlockHistogramDescriptor, b: BlockHistogramDescriptor) -> float:
    """Chi-square histogram distance; 0/0 terms contribute nothing."""
    if a.kind != b.kind:
        raise ComparatorError(f"descriptor kinds differ: {a.kind} vs {b.kind}")
    if a.grid != b.grid or a.bins_per_block != b.bins_per_block:
        raise ComparatorError("descriptor shapes differ")
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    denom = x + y
    mask = denom > 0.0
    diff = x - y
    return float(np.sum(diff[mask] ** 2 / denom[mask]))


@dataclass(frozen=True)
class KeypointSet:
    """Detected keypoints of one image: positions, scales, orientations
    (radians), and 128-d descriptors, all index-aligned."""

    xy: np.ndarray
    scale: np.ndarray
    orientation: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        xy = np.ascontiguousarray(self.xy, dtype=np.float64).reshape(-1, 2)
        count = xy.shape[0]
        scale = np.ascontiguousarray(self.scale, dtype=np.float64).reshape(-1)
        orientation = np.ascontiguousarray(self.orientation, dtype=np.float64).reshape(-1)
        descriptors = np.ascontiguousarray(self.descriptors, dtype=np.float32)
        if descriptors.size == 0:
            descriptors = descriptors.reshape(0, 128)
        if descriptors.ndim != 2 or descriptors.shape[1] != 128:
            raise ComparatorError(f"descriptors must be Kx128, got {descriptors.shape}")
        if not (count == scale.shape[0] == orientation.shape[0] == descriptors.shape[0]):
            raise ComparatorError("keypoint field lengths disagree")
        for name, field in (("xy", xy), ("scale", scale), ("orientation", orientation), ("descriptors", descriptors)):
            if not np.all(np.isfinite(field)):
                raise ComparatorError(f"keypoint {name} contains non-finite values")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "orientation", orientation)
        object.__setattr__(self, "descriptors", descriptors)

    def __len__(self) -> int:
        return self.xy.shape[0]


def detect_keypoints(img) -> KeypointSet:
    """Run the pinned difference-of-Gaussians detector on a grayscale image.

    Keypoints are sorted by (y, x, scale, orientation) so serialized sets
    are byte-stable regardless of detector-internal ordering.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise TensorDataError(f"expected a 2-d grayscale image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr.astype(np.float64)), 0, 255).astype(np.uint8)
    keypoints, descriptors = cv2.SIFT_create().detectAndCompute(arr, None)
    if not keypoints:
        return KeypointSet(np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros((0, 128), np.float32))
    xy = np.array([kp.pt for kp in keypoints], dtype=np.float64)
    scale = np.array([kp.size for kp in keypoints], dtype=np.float64)
    angles = np.array([kp.angle if kp.angle >= 0 else 0.0 for kp in keypoints], dtype=np.float64)
    orientation = np.deg2rad(angles % 360.0)
    order = np.lexsort((orientation, scale, xy[:, 0], xy[:, 1]))
    return KeypointSet(xy[order], scale[order], orientation[order], descriptors[order])


def _candidate_matches(a: KeypointSet, b: KeypointSet) -> list:
    """Ratio-tested nearest-descriptor pairs, one-to-one on both sides.

    Each left keypoint proposes its nearest right descriptor, kept when it
    beats the runner-up by the Lowe ratio (trivially kept when the right
    set has a single point); conflicts on the right side are resolved
    greedily by ascending distance, then left index.
    """
    da = a.descriptors.astype(np.float64)
    db = b.descriptors.astype(np.float64)
    sq = (da * da).sum(axis=1)[:, None] + (db * db).sum(axis=1)[None, :] - 2.0 * (da @ db.T)
    np.maximum(sq, 0.0, out=sq)
    nearest = np.argmin(sq, axis=1)
    d1 = np.sqrt(sq[np.arange(len(a)), nearest])
    if len(b) > 1:
        sq[np.arange(len(a)), nearest] = np.inf
        d2 = np.sqrt(np.min(sq, axis=1))
        accepted = d1 <= LOWE_RATIO * d2
    else:
        accepted = np.ones(len(a), dtype=bool)
    order = sorted((float(d1[i]), i) for i in np.flatnonzero(accepted))
    taken: set = set()
    matches = []
    for _, i in order:
        j = int(nearest[i])
        if j not in taken:
            taken.add(j)
            matches.append((i, j))
    return matches


def _modal_window_center(values: np.ndarray, tolerance: float) -> float:
    """The observed value whose +-tolerance relative window covers the
    most values; ties resolve to the smallest such value."""
    ordered = np.sort(values)
    lo = np.searchsorted(ordered, (1.0 - tolerance) * ordered, side="left")
    hi = np.searchsorted(ordered, (1.0 + tolerance) * ordered, side="right")
    return float(ordered[int(np.argmax(hi - lo))])


def sift_match_score(a: KeypointSet, b: KeypointSet) -> float:
    """Fraction of keypoints surviving matching plus geometric filtering.

    Surviving pairs must agree with the modal orientation difference
    within +-20 degrees (mode over 10-degree bins, ties to the lowest
    bin) and with the modal displacement length within +-15%; the count
    is normalized by the smaller keypoint set.
    """
    if len(a) == 0 or len(b) == 0:
        raise MissingFeatureError("cannot match an empty keypoint set")
    matches = _candidate_matches(a, b)
    if not matches:
        return 0.0
    ai = np.array([m[0] for m in matches])
    bi = np.array([m[1] for m in matches])
    delta_deg = np.degrees((b.orientation[bi] - a.orientation[ai]) % (2.0 * math.pi)) % 360.0
    bin_counts = np.bincount((delta_deg // ANGLE_MODE_BIN_DEG).astype(np.int64),
                             minlength=int(360 / ANGLE_MODE_BIN_DEG))
    modal_angle = float(np.argmax(bin_counts)) * ANGLE_MODE_BIN_DEG + ANGLE_MODE_BIN_DEG / 2.0
    gap = np.abs(delta_deg - modal_angle)
    angle_ok = np.minimum(gap, 360.0 - gap) <= ANGLE_TOLERANCE_DEG
    lengths = np.linalg.norm(b.xy[bi] - a.xy[ai], axis=1)
    modal_length = _modal_window_center(lengths, LENGTH_TOLERANCE)
    length_ok = (lengths >= (1.0 - LENGTH_TOLERANCE) * modal_length) & (
        lengths <= (1.0 + LENGTH_TOLERANCE) * modal_length
    )
    survivors = int(np.count_nonzero(angle_ok & length_ok))
    return survivors / min(len(a), len(b))


class BlockDescriptorExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping grayscale images to LBP or HOG descriptors."""

    def __init__(self, kind: str = "lbp"):
        self.kind = kind

    def fit(self, X, y=None):
        if self.kind not in ("lbp", "hog"):
            raise ComparatorError(f"unknown descriptor kind {self.kind!r}")
        return self

    def transform(self, X):
        fn = lbp_descriptor if self.kind == "lbp" else hog_descriptor
        self.fit(X)
        return [fn(img) for img in X]


class SiftKeypointExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping grayscale images to keypoint sets."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [detect_keypoints(img) for img in X]
