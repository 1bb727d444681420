"""Procedural eye-like dataset for desk-scale pipeline runs.

Generates annotated grayscale images that behave like a miniature
periocular corpus: each (subject, eye) user owns a stable texture
signature (grating orientation/frequency, iris banding, lid geometry)
rendered in sclera-radius units so distance scaling is realistic, while
per-image jitter and sensor noise keep comparators imperfect.  Output is
a manifest plus PNGs compatible with the preprocessing front end; byte
content depends only on the seed.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .preprocess import PNG_PARAMS, Circle, ImageRecord, save_manifest

CANVAS_H = 160
CANVAS_W = 220
DISTANCE_CYCLE = (4, 6, 8, 4)
RADIUS_BY_DISTANCE = {4: 20.0, 5: 17.0, 6: 15.0, 7: 13.0, 8: 11.0}
PUPIL_RATIO = 0.42
IRIS_RATIO = 0.62
NOISE_SIGMA = 0.025
PHASE_JITTER = 0.40
ANGLE_JITTER = 0.06


def _user_params(rng: np.random.Generator) -> dict:
    return {
        "theta": rng.uniform(0.0, np.pi),
        "freq": rng.uniform(2.2, 4.6),
        "freq2": rng.uniform(1.1, 2.3),
        "freq3": rng.uniform(6.0, 10.0),
        "phase": rng.uniform(0.0, 2.0 * np.pi),
        "phase2": rng.uniform(0.0, 2.0 * np.pi),
        "phase3": rng.uniform(0.0, 2.0 * np.pi),
        "iris_rings": rng.integers(6, 11),
        "iris_phase": rng.uniform(0.0, 2.0 * np.pi),
        "spokes": rng.integers(5, 9),
        "lid_curve": rng.uniform(0.15, 0.40),
        "lid_drop": rng.uniform(1.05, 1.30),
        "skin": rng.uniform(0.55, 0.70),
    }


def _render(params: dict, rng: np.random.Generator, center, rs: float) -> np.ndarray:
    """Render one left-form eye image; per-image variation comes from rng."""
    cx, cy = center
    ys = np.arange(CANVAS_H, dtype=np.float64)[:, None]
    xs = np.arange(CANVAS_W, dtype=np.float64)[None, :]
    xn = (xs - cx) / rs
    yn = (ys - cy) / rs
    theta = params["theta"] + rng.uniform(-ANGLE_JITTER, ANGLE_JITTER)
    phase = params["phase"] + rng.uniform(-PHASE_JITTER, PHASE_JITTER)
    phase2 = params["phase2"] + rng.uniform(-PHASE_JITTER, PHASE_JITTER)
    along = xn * np.cos(theta) + yn * np.sin(theta)
    across = -xn * np.sin(theta) + yn * np.cos(theta)
    img = (
        params["skin"]
        + 0.20 * np.sin(2.0 * np.pi * params["freq"] * along + phase)
        + 0.12 * np.sin(2.0 * np.pi * params["freq2"] * across + phase2)
        + 0.07 * np.sin(2.0 * np.pi * params["freq3"] * (along + 0.37 * across) + params["phase3"])
    )
    radius = np.hypot(xn, yn)
    angle = np.arctan2(yn, xn)
    sclera = radius < 1.0
    img[sclera] = 0.82 + 0.05 * np.sin(2.0 * np.pi * 1.5 * along[sclera] + phase)
    iris = radius < IRIS_RATIO
    rings = np.sin(params["iris_rings"] * np.pi * radius / IRIS_RATIO + params["iris_phase"])
    spokes = np.sin(params["spokes"] * angle + params["iris_phase"])
    img[iris] = 0.38 + 0.18 * rings[iris] + 0.10 * spokes[iris]
    img[radius < PUPIL_RATIO * IRIS_RATIO] = 0.07
    # eyelids: darken above the upper and below the lower parabolic arc
    upper = -params["lid_drop"] + params["lid_curve"] * xn**2
    lower = params["lid_drop"] - params["lid_curve"] * xn**2
    lid = (yn < upper) | (yn > lower)
    img[lid] = 0.45 * img[lid] + 0.55 * (params["skin"] - 0.18)
    img += rng.normal(0.0, NOISE_SIGMA, img.shape)
    return np.clip(img * 255.0, 0.0, 255.0).astype(np.uint8)


def generate_dataset(out_dir, subjects: int = 10, images_per_user: int = 4, seed: int = 42) -> Path:
    """Write PNGs plus ``manifest.jsonl`` under ``out_dir``; returns the
    manifest path.  Default size: 10 subjects x 2 eyes x 4 images."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for subject in range(subjects):
        for eye in ("L", "R"):
            params = _user_params(rng)
            for i in range(images_per_user):
                distance = DISTANCE_CYCLE[i % len(DISTANCE_CYCLE)]
                rs = RADIUS_BY_DISTANCE[distance] * rng.uniform(0.92, 1.08)
                cx = CANVAS_W / 2 + rng.uniform(-8.0, 8.0)
                cy = CANVAS_H / 2 + rng.uniform(-5.0, 5.0)
                img = _render(params, rng, (cx, cy), rs)
                if eye == "R":
                    img = np.ascontiguousarray(img[:, ::-1])
                    cx = CANVAS_W - 1 - cx
                name = f"s{subject:02d}{eye}_{i}.png"
                if not cv2.imwrite(str(image_dir / name), img, PNG_PARAMS):
                    raise OSError(f"cannot write {image_dir / name}")
                records.append(
                    ImageRecord(
                        path=f"images/{name}",
                        subject_id=f"s{subject:02d}",
                        eye=eye,
                        session=str(i),
                        distance_m=distance,
                        pupil_circle=Circle(cx, cy, rs * IRIS_RATIO * PUPIL_RATIO),
                        sclera_circle=Circle(cx, cy, rs),
                    )
                )
    manifest = out_dir / "manifest.jsonl"
    save_manifest(records, manifest)
    return manifest
