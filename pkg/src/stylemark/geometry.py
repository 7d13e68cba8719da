"""Face cropping, rotation augmentation, and exact landmark remapping.

Every derived image carries the affine transform that produced it, and
annotations are always mapped by that same transform. That is the whole
anti-misalignment guarantee: pixels and coordinates can never use two
different geometries.

Coordinate convention: continuous image frame, origin at the top-left,
y down, and the center of pixel (i, j) at coordinates (i, j). Rotation
angles are degrees, counterclockwise as displayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dataset import ImageRecord, LandmarkSet, Lineage, Split
from .errors import GeometryError


@dataclass(frozen=True)
class AffineTransform:
    """Map (x, y) -> (a*x + b*y + tx, c*x + d*y + ty)."""

    a: float
    b: float
    c: float
    d: float
    tx: float
    ty: float

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 1.0, dx, dy)

    @classmethod
    def rotation_about(cls, angle_deg: float, cx: float, cy: float) -> "AffineTransform":
        """Rotation by angle_deg counterclockwise (as displayed) about (cx, cy)."""
        th = math.radians(angle_deg)
        cos_t, sin_t = math.cos(th), math.sin(th)
        # y points down, so visual CCW is [[cos, sin], [-sin, cos]].
        a, b = cos_t, sin_t
        c, d = -sin_t, cos_t
        tx = cx - (a * cx + b * cy)
        ty = cy - (c * cx + d * cy)
        return cls(a, b, c, d, tx, ty)

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def coefficients(self) -> tuple[float, float, float, float, float, float]:
        """Row-major coefficients of the 2x3 matrix [[a, b, tx], [c, d, ty]]."""
        return (self.a, self.b, self.tx, self.c, self.d, self.ty)

    @classmethod
    def from_coefficients(cls, coeffs) -> "AffineTransform":
        a, b, tx, c, d, ty = (float(v) for v in coeffs)
        return cls(a, b, c, d, tx, ty)

    def apply_xy(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        m = np.array([[self.a, self.b], [self.c, self.d]])
        return xy @ m.T + np.array([self.tx, self.ty])

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Return self applied after inner."""
        a = self.a * inner.a + self.b * inner.c
        b = self.a * inner.b + self.b * inner.d
        c = self.c * inner.a + self.d * inner.c
        d = self.c * inner.b + self.d * inner.d
        tx = self.a * inner.tx + self.b * inner.ty + self.tx
        ty = self.c * inner.tx + self.d * inner.ty + self.ty
        return AffineTransform(a, b, c, d, tx, ty)


@dataclass(frozen=True)
class CropBox:
    """Square crop window, origin (x0, y0), side length in pixels."""

    x0: float
    y0: float
    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise GeometryError(f"crop side must be positive, got {self.side}")


@dataclass
class BinaryMask:
    """Row-major boolean grid; ``bits[y, x]`` is pixel (x, y)."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise GeometryError(
                f"mask bits shape {self.bits.shape} != (height, width) = "
                f"({self.height}, {self.width})"
            )

    def count(self) -> int:
        return int(self.bits.sum())


def landmark_bbox(landmarks: LandmarkSet, margin: float = 0.0) -> CropBox:
    """Smallest square covering the landmark bbox, grown by ``margin`` per side.

    The square is centered on the bbox; margin is a fraction of the square's
    side added on each of the four sides. No clamping to the image happens
    here; crop_image handles out-of-image regions by zero padding.
    """
    if margin < 0:
        raise GeometryError(f"margin must be >= 0, got {margin}")
    xy = landmarks.xy
    if len(xy) == 0:
        raise GeometryError("empty landmark set")
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    side = max(x1 - x0, y1 - y0)
    if side <= 0:
        raise GeometryError("zero-extent bbox: all landmarks identical")
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    side *= 1.0 + 2.0 * margin
    return CropBox(cx - side / 2.0, cy - side / 2.0, side)


def crop_image(image: np.ndarray, box: CropBox) -> tuple[np.ndarray, AffineTransform]:
    """Extract a square window, zero-padding where the box exits the image.

    The box is snapped to the integer pixel grid so the returned transform
    is an exact translation, keeping landmark remapping lossless.
    """
    if image.ndim not in (2, 3):
        raise GeometryError(f"expected 2D or 3D image, got shape {image.shape}")
    h, w = image.shape[:2]
    x0 = int(round(box.x0))
    y0 = int(round(box.y0))
    side = max(1, int(round(box.side)))
    if x0 >= w or y0 >= h or x0 + side <= 0 or y0 + side <= 0:
        raise GeometryError(
            f"crop box ({x0}, {y0}, side {side}) lies fully outside {w}x{h} image"
        )
    out_shape = (side, side) + image.shape[2:]
    out = np.zeros(out_shape, dtype=image.dtype)
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + side, w), min(y0 + side, h)
    out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = image[sy0:sy1, sx0:sx1]
    return out, AffineTransform.translation(-float(x0), -float(y0))


def apply_transform(landmarks: LandmarkSet, t: AffineTransform) -> LandmarkSet:
    """Map every landmark by t, preserving order and indices."""
    return LandmarkSet(t.apply_xy(landmarks.xy), landmarks.indices.copy())


def invert_transform(t: AffineTransform) -> AffineTransform:
    det = t.det()
    if abs(det) < 1e-12:
        raise GeometryError(f"singular transform, determinant {det}")
    ia, ib = t.d / det, -t.b / det
    ic, id_ = -t.c / det, t.a / det
    itx = -(ia * t.tx + ib * t.ty)
    ity = -(ic * t.tx + id_ * t.ty)
    return AffineTransform(ia, ib, ic, id_, itx, ity)


def _bilinear_sample(image: np.ndarray, sx: np.ndarray, sy: np.ndarray,
                     fill: float) -> np.ndarray:
    """Sample image at continuous (sx, sy); outside points get ``fill``."""
    h, w = image.shape[:2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    img = image.astype(np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    chans = img.shape[2]
    out = np.empty(sx.shape + (chans,), dtype=np.float64)
    # Tolerance keeps exact-edge samples (e.g. 90-degree rotations) valid
    # despite float noise in the inverted transform.
    eps = 1e-7
    valid = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
    x0c = np.clip(x0, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    for ch in range(chans):
        plane = img[:, :, ch]
        val = (
            w00 * plane[y0c, x0c]
            + w10 * plane[y0c, x1c]
            + w01 * plane[y1c, x0c]
            + w11 * plane[y1c, x1c]
        )
        out[:, :, ch] = np.where(valid, val, fill)
    if image.ndim == 2:
        out = out[:, :, 0]
    return out


def rotate_image(image: np.ndarray, angle_deg: float,
                 fill: float = 0.0) -> tuple[np.ndarray, AffineTransform]:
    """Rotate about the canvas center, same canvas size, bilinear resampling.

    Corners that leave the canvas are clipped and exposed regions take the
    constant fill value. Returns the image and the landmark-frame transform.
    """
    h, w = image.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = AffineTransform.rotation_about(angle_deg, cx, cy)
    if angle_deg % 360.0 == 0.0:
        return image.copy(), t
    inv = invert_transform(t)
    ys, xs = np.mgrid[0:h, 0:w]
    sx = inv.a * xs + inv.b * ys + inv.tx
    sy = inv.c * xs + inv.d * ys + inv.ty
    sampled = _bilinear_sample(image, sx, sy, fill)
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        sampled = np.clip(np.rint(sampled), info.min, info.max)
    return sampled.astype(image.dtype), t


def rotate_augment(record: ImageRecord, image: np.ndarray, angle_deg: float,
                   fill: float = 0.0, new_id: Optional[str] = None,
                   new_image_path: Optional[str] = None,
                   ) -> tuple[ImageRecord, np.ndarray]:
    """Rotate a record's pixels and landmarks by the same transform.

    |angle| must be <= 180. The caller owns persistence: the rotated pixels
    are returned alongside the derived record, whose lineage stores the
    parent id and transform coefficients. Landmarks pushed off the canvas
    leave the record invalid under validate_record; set builders drop such
    records with a warning.
    """
    if abs(angle_deg) > 180:
        raise GeometryError(f"|angle| must be <= 180, got {angle_deg}")
    rotated, t = rotate_image(image, angle_deg, fill)
    landmarks = apply_transform(record.landmarks, t)
    derived = replace(
        record,
        id=new_id if new_id is not None else f"{record.id}::rot{angle_deg:+.2f}",
        image_path=new_image_path if new_image_path is not None else record.image_path,
        landmarks=landmarks,
        split=Split.DERIVED,
        lineage=Lineage(
            parent_id=record.id,
            transform_id=f"rotate:{angle_deg:+.4f}deg",
            transform=t.coefficients(),
        ),
    )
    return derived, rotated


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counterclockwise, no collinear vertices."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) < 3:
        raise GeometryError("need at least 3 distinct points for a hull")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise GeometryError("degenerate hull: points are collinear")
    return hull


def hull_mask(landmarks: LandmarkSet, width: int, height: int) -> BinaryMask:
    """Filled convex hull of the landmarks, pixel-center inclusion.

    A pixel is set when its center lies inside the hull or on its boundary.
    Used as the documented proxy mask whenever a record carries no
    segmentation mask of its own.
    """
    hull = convex_hull(landmarks.xy)
    ys, xs = np.mgrid[0:height, 0:width]
    inside = np.ones((height, width), dtype=bool)
    n = len(hull)
    # Hull is counterclockwise in (x, y); interior points have nonnegative
    # cross products against every edge. Small tolerance keeps boundary
    # pixels included despite float rounding.
    eps = 1e-9 * max(width, height, 1)
    for i in range(n):
        x1, y1 = hull[i]
        x2, y2 = hull[(i + 1) % n]
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        inside &= cross >= -eps
    return BinaryMask(width=width, height=height, bits=inside)
