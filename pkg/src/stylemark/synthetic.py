"""Procedural generation of annotated face images for desk-scale runs.

Every image is a seeded cartoon face (colored head, ears, eyes, nose,
noise) with landmarks placed on an outer head ring and an inner feature
ring. Landmarks stay within 80 percent of the inscribed canvas radius so
rotation augmentation never pushes them off the canvas. Colors vary
strongly between faces, which gives the style backends real statistics to
move.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, ImageRecord, LandmarkSet, Split, save_manifest
from .images import save_image


def _unit_layout(count: int, rng: np.random.Generator) -> np.ndarray:
    """Landmark layout in the unit frame (max radius 1), lightly jittered."""
    n_outer = max(3, count * 5 // 8)
    n_inner = count - n_outer
    pts = []
    squash = rng.uniform(0.85, 1.0)
    for k in range(n_outer):
        a = 2 * np.pi * k / n_outer
        pts.append((np.cos(a), squash * np.sin(a)))
    for k in range(n_inner):
        a = 2 * np.pi * k / max(n_inner, 1)
        pts.append((0.45 * np.cos(a), 0.40 * np.sin(a) - 0.05))
    xy = np.array(pts[:count], dtype=np.float64)
    xy += rng.normal(0.0, 0.015, size=xy.shape)
    # Jitter must not break the radius budget that keeps rotations safe.
    radius = np.linalg.norm(xy, axis=1).max()
    if radius > 1.0:
        xy /= radius
    return xy


def _ellipse(xs, ys, cx, cy, ax, ay):
    return ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 <= 1.0


def _draw_face(size: int, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.empty((size, size, 3), dtype=np.float64)
    bg = rng.uniform(30, 225, size=3)
    fur = rng.uniform(40, 215, size=3)
    eye = rng.uniform(0, 90, size=3)
    nose = rng.uniform(80, 200, size=3)
    for ch in range(3):
        img[:, :, ch] = bg[ch]
    grad = rng.uniform(-40, 40)
    img += grad * (ys[:, :, None] / size - 0.5)
    c = (size - 1) / 2.0
    r = size * rng.uniform(0.30, 0.36)
    head = _ellipse(xs, ys, c, c + size * 0.02, r, r * rng.uniform(0.85, 1.0))
    ear_dx, ear_dy = r * 0.72, r * 0.95
    ears = _ellipse(xs, ys, c - ear_dx, c - ear_dy, r * 0.32, r * 0.45)
    ears |= _ellipse(xs, ys, c + ear_dx, c - ear_dy, r * 0.32, r * 0.45)
    for ch in range(3):
        img[:, :, ch] = np.where(head | ears, fur[ch], img[:, :, ch])
    eye_dx, eye_dy = r * 0.40, r * 0.15
    eyes = _ellipse(xs, ys, c - eye_dx, c - eye_dy, r * 0.14, r * 0.10)
    eyes |= _ellipse(xs, ys, c + eye_dx, c - eye_dy, r * 0.14, r * 0.10)
    nose_m = _ellipse(xs, ys, c, c + r * 0.25, r * 0.10, r * 0.08)
    for ch in range(3):
        img[:, :, ch] = np.where(eyes, eye[ch], img[:, :, ch])
        img[:, :, ch] = np.where(nose_m, nose[ch], img[:, :, ch])
    img += rng.normal(0.0, 6.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_dataset(out_dir: str | Path, count: int, seed: int,
                     image_size: int = 64, landmark_count: int = 48,
                     tag: str = "synthetic") -> DatasetManifest:
    """Write ``count`` annotated face images plus a manifest.jsonl."""
    out_dir = Path(out_dir).resolve()
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for k in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        rid = f"face_{k:04d}"
        image = _draw_face(image_size, rng)
        save_image(image, images_dir / f"{rid}.png")
        unit = _unit_layout(landmark_count, rng)
        half = (image_size - 1) / 2.0
        scale = half * rng.uniform(0.55, 0.72)
        center = half + rng.uniform(-0.04, 0.04, size=2) * half
        xy = center + unit * scale
        records.append(ImageRecord(
            id=rid,
            image_path=f"images/{rid}.png",
            landmarks=LandmarkSet(xy),
            width=image_size,
            height=image_size,
            split=Split.TRAIN,
        ))
    manifest = DatasetManifest(records=records, seed=seed, tag=tag,
                               landmark_count=landmark_count, root=out_dir)
    manifest.validate()
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
