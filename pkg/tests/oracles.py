"""Independent brute-force reference implementations.

Everything here is deliberately scalar and loop-based so the vectorized
production code is checked against a second, structurally different
route.  Values produced by these functions are the expected side of the
derived tests; keep them slow and obvious.
"""

from __future__ import annotations

import math

import numpy as np

# ---------------------------------------------------------------- LBP

_NEIGHBOR_OFFSETS = [
    (round(math.sin(2.0 * math.pi * k / 8), 15), round(math.cos(2.0 * math.pi * k / 8), 15))
    for k in range(8)
]


def _transitions(code: int) -> int:
    bits = f"{code:08b}"
    circular = bits + bits[0]
    return sum(1 for a, b in zip(circular, circular[1:]) if a != b)


def lbp_bin_of_code(code: int) -> int:
    """Bin index for one LBP code: uniform codes in ascending order, rest 58."""
    if _transitions(code) > 2:
        return 58
    return sum(1 for c in range(code) if _transitions(c) <= 2)


def _sample(img, y: float, x: float) -> float:
    height, width = img.shape
    y = min(max(y, 0.0), height - 1.0)
    x = min(max(x, 0.0), width - 1.0)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, height - 1), min(x0 + 1, width - 1)
    wy, wx = y - y0, x - x0
    top = img[y0, x0] + wx * (img[y0, x1] - img[y0, x0])
    bottom = img[y1, x0] + wx * (img[y1, x1] - img[y1, x0])
    return top + wy * (bottom - top)


def lbp_code_at(img, y: int, x: int) -> int:
    center = img[y, x]
    code = 0
    for k, (dy, dx) in enumerate(_NEIGHBOR_OFFSETS):
        if _sample(img, y + dy, x + dx) >= center:
            code |= 1 << k
    return code


def lbp_descriptor(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    height, width = img.shape
    cell_h, cell_w = height // 8, width // 8
    blocks = [[0.0] * 59 for _ in range(64)]
    for y in range(8 * cell_h):
        for x in range(8 * cell_w):
            block = (y // cell_h) * 8 + (x // cell_w)
            blocks[block][lbp_bin_of_code(lbp_code_at(img, y, x))] += 1.0
    out = []
    for hist in blocks:
        norm = math.sqrt(sum(v * v for v in hist))
        out.extend([v / norm for v in hist] if norm > 0 else hist)
    return np.array(out, dtype=np.float32)


# ---------------------------------------------------------------- HOG


def hog_descriptor(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    height, width = img.shape
    cell_h, cell_w = height // 8, width // 8
    blocks = [[0.0] * 9 for _ in range(64)]
    for y in range(8 * cell_h):
        for x in range(8 * cell_w):
            gx = img[y, min(x + 1, width - 1)] - img[y, max(x - 1, 0)]
            gy = img[min(y + 1, height - 1), x] - img[max(y - 1, 0), x]
            magnitude = math.hypot(gx, gy)
            theta = math.degrees(math.atan2(gy, gx)) % 360.0
            position = theta / 40.0
            lower = int(math.floor(position))
            frac = position - lower
            block = (y // cell_h) * 8 + (x // cell_w)
            blocks[block][lower % 9] += magnitude * (1.0 - frac)
            blocks[block][(lower + 1) % 9] += magnitude * frac
    out = []
    for hist in blocks:
        norm = math.sqrt(sum(v * v for v in hist))
        out.extend([v / norm for v in hist] if norm > 0 else hist)
    return np.array(out, dtype=np.float32)


# ---------------------------------------------------------------- chi2


def chi2(a, b) -> float:
    total = 0.0
    for x, y in zip(a, b):
        x, y = float(x), float(y)
        if x + y > 0:
            total += (x - y) ** 2 / (x + y)
    return total


# ------------------------------------------------- normalization/score


def strategy_score(a, b, strategy: str) -> float:
    """Mean cosine over the strategy's slices, by explicit slice loops."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def cosine(u, v):
        nu = math.sqrt(float(np.sum(u * u)))
        nv = math.sqrt(float(np.sum(v * v)))
        if nu == 0.0 or nv == 0.0:
            return 0.0
        return float(np.sum(u * v)) / (nu * nv)

    if strategy == "per-patch":
        return sum(cosine(a[i], b[i]) for i in range(a.shape[0])) / a.shape[0]
    if strategy == "per-channel":
        return sum(cosine(a[:, j], b[:, j]) for j in range(a.shape[1])) / a.shape[1]
    if strategy == "whole":
        return cosine(a.ravel(), b.ravel())
    if strategy == "mean-per-channel":
        return cosine(a.mean(axis=0), b.mean(axis=0))
    if strategy == "mean-per-patch":
        return cosine(a.mean(axis=1), b.mean(axis=1))
    raise ValueError(strategy)


# ----------------------------------------------------------------- EER


def eer_percent(genuine, impostor) -> float:
    """Crossing of FAR/FRR found by explicit counting at each threshold."""
    genuine = sorted(float(g) for g in genuine)
    impostor = sorted(float(i) for i in impostor)
    points = [(1.0, 0.0)]
    for t in sorted(set(genuine) | set(impostor)):
        far = sum(1 for s in impostor if s >= t) / len(impostor)
        frr = sum(1 for s in genuine if s < t) / len(genuine)
        points.append((far, frr))
    points.append((0.0, 1.0))
    for k in range(1, len(points)):
        far1, frr1 = points[k - 1]
        far2, frr2 = points[k]
        if frr2 - far2 >= 0.0:
            # solve frr1 + t*(frr2-frr1) == far1 + t*(far2-far1)
            denom = (frr2 - frr1) - (far2 - far1)
            t = (far1 - frr1) / denom
            return 100.0 * (far1 + t * (far2 - far1))
    raise AssertionError("no crossing found")
