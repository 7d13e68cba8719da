import numpy as np
import pytest

from stylemark import (
    AffineTransform,
    GeometryError,
    LandmarkSet,
    apply_transform,
    crop_image,
    hull_mask,
    invert_transform,
    landmark_bbox,
    rotate_augment,
    rotate_image,
)
from stylemark.geometry import convex_hull

from conftest import make_record


def brute_force_hull_mask(points, width, height):
    """Oracle: pixel centers inside/on the convex hull, via hull half-planes
    computed independently from every ordered point pair."""
    pts = np.asarray(points, dtype=float)
    bits = np.zeros((height, width), dtype=bool)
    hull = convex_hull(pts)
    for py in range(height):
        for px in range(width):
            inside = True
            n = len(hull)
            for i in range(n):
                x1, y1 = hull[i]
                x2, y2 = hull[(i + 1) % n]
                cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                if cross < -1e-9 * max(width, height):
                    inside = False
                    break
            bits[py, px] = inside
    return bits


class TestLandmarkBbox:
    def test_square_side_is_max_extent(self):
        # Points spanning (10,10)-(50,40): bbox 40x30, so the square has
        # side 40 centered on the bbox -> origin (10, 5).
        pts = LandmarkSet(np.array([[10.0, 10.0], [50.0, 40.0], [30.0, 20.0]]))
        box = landmark_bbox(pts, margin=0.0)
        assert (box.x0, box.y0, box.side) == (10.0, 5.0, 40.0)

    def test_margin_grows_each_side(self):
        pts = LandmarkSet(np.array([[10.0, 10.0], [50.0, 40.0]]))
        box = landmark_bbox(pts, margin=0.10)
        assert (box.x0, box.y0, box.side) == (6.0, 1.0, 48.0)

    def test_degenerate_points_error(self):
        pts = LandmarkSet(np.tile([[7.0, 7.0]], (5, 1)))
        with pytest.raises(GeometryError, match="zero-extent"):
            landmark_bbox(pts)

    def test_negative_margin_rejected(self):
        pts = LandmarkSet(np.array([[0.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(GeometryError):
            landmark_bbox(pts, margin=-0.1)


class TestCrop:
    def test_translation_of_landmarks(self):
        from stylemark.geometry import CropBox

        image = np.zeros((200, 200, 3), dtype=np.uint8)
        cropped, t = crop_image(image, CropBox(100, 100, 64))
        moved = t.apply_xy(np.array([[110.0, 120.0]]))
        assert np.allclose(moved, [[10.0, 20.0]])
        assert cropped.shape == (64, 64, 3)

    def test_full_image_box_is_identity(self):
        from stylemark.geometry import CropBox

        image = np.random.default_rng(0).integers(0, 255, (32, 32, 3)).astype(np.uint8)
        cropped, t = crop_image(image, CropBox(0, 0, 32))
        assert t == AffineTransform.identity()
        assert np.array_equal(cropped, image)

    def test_zero_padding_past_right_edge(self):
        from stylemark.geometry import CropBox

        image = np.arange(64, dtype=np.uint8).reshape(8, 8)
        cropped, t = crop_image(image, CropBox(4, 2, 8))
        assert cropped.shape == (8, 8)
        # Overlap region copied exactly; everything past the edge is zero.
        expected = np.zeros((8, 8), dtype=np.uint8)
        expected[0:6, 0:4] = image[2:8, 4:8]
        assert np.array_equal(cropped, expected)
        assert (t.tx, t.ty) == (-4.0, -2.0)

    def test_box_fully_outside_errors(self):
        from stylemark.geometry import CropBox

        image = np.zeros((8, 8), dtype=np.uint8)
        with pytest.raises(GeometryError, match="outside"):
            crop_image(image, CropBox(100, 100, 4))


class TestTransforms:
    def test_identity_apply(self, rng):
        lms = LandmarkSet(rng.uniform(0, 50, (12, 2)))
        out = apply_transform(lms, AffineTransform.identity())
        assert out == lms

    def test_translation(self):
        lms = LandmarkSet(np.array([[110.0, 120.0]]))
        out = apply_transform(lms, AffineTransform.translation(-100, -100))
        assert np.allclose(out.xy, [[10.0, 20.0]])

    def test_inverse_round_trip_on_random_points(self, rng):
        for _ in range(50):
            t = AffineTransform(*rng.uniform(-2, 2, 4), *rng.uniform(-30, 30, 2))
            if abs(t.det()) < 1e-3:
                continue
            pts = rng.uniform(-100, 100, (20, 2))
            back = invert_transform(t).apply_xy(t.apply_xy(pts))
            assert np.abs(back - pts).max() < 1e-9

    def test_rotation_inverse_is_negative_rotation(self):
        t = AffineTransform.rotation_about(90, 0, 0)
        inv = invert_transform(t)
        expect = AffineTransform.rotation_about(-90, 0, 0)
        for name in ("a", "b", "c", "d", "tx", "ty"):
            assert getattr(inv, name) == pytest.approx(getattr(expect, name), abs=1e-12)

    def test_identity_inverse(self):
        assert invert_transform(AffineTransform.identity()) == AffineTransform.identity()

    def test_singular_errors(self):
        with pytest.raises(GeometryError, match="singular"):
            invert_transform(AffineTransform(0, 0, 0, 0, 1, 1))

    def test_compose_matches_sequential_application(self, rng):
        t1 = AffineTransform.rotation_about(30, 5, 5)
        t2 = AffineTransform.translation(3, -4)
        pts = rng.uniform(0, 10, (7, 2))
        assert np.allclose(t2.compose(t1).apply_xy(pts), t2.apply_xy(t1.apply_xy(pts)))


class TestRotation:
    def test_zero_angle_is_identity(self, rng):
        image = rng.integers(0, 255, (16, 16, 3)).astype(np.uint8)
        out, t = rotate_image(image, 0.0)
        assert np.array_equal(out, image)
        pts = rng.uniform(0, 15, (30, 2))
        assert np.allclose(t.apply_xy(pts), pts)

    def test_corner_maps_to_corner_at_90(self):
        # Hand geometry on a 4x4 grid: rotating counterclockwise about the
        # center ((w-1)/2, (h-1)/2) sends the top-right pixel to top-left.
        w = 4
        image = np.zeros((w, w), dtype=np.uint8)
        _, t = rotate_image(image, 90.0)
        corner = t.apply_xy(np.array([[w - 1.0, 0.0]]))
        assert np.allclose(corner, [[0.0, 0.0]], atol=1e-9)

    def test_rotation_round_trip_coordinates(self, rng):
        _, t_fwd = rotate_image(np.zeros((10, 10)), 30.0)
        _, t_back = rotate_image(np.zeros((10, 10)), -30.0)
        pts = rng.uniform(0, 9, (100, 2))
        back = t_back.apply_xy(t_fwd.apply_xy(pts))
        assert np.abs(back - pts).max() < 1e-6

    def test_rotation_pixels_90_exact(self):
        # At multiples of 90 degrees bilinear sampling lands on grid points,
        # so the rotation must equal the exact permutation np.rot90 gives
        # (np.rot90 with k=1 is counterclockwise as displayed).
        image = np.arange(16, dtype=np.uint8).reshape(4, 4)
        out, _ = rotate_image(image, 90.0)
        assert np.array_equal(out, np.rot90(image, k=1))

    def test_rotate_augment_lineage_and_landmarks(self, rng):
        rec = make_record(rng, "a", count=6, width=32, height=32)
        image = rng.integers(0, 255, (32, 32, 3)).astype(np.uint8)
        derived, pixels = rotate_augment(rec, image, 15.0)
        assert derived.lineage.parent_id == "a"
        assert derived.lineage.transform is not None
        t = AffineTransform.from_coefficients(derived.lineage.transform)
        assert np.allclose(t.apply_xy(rec.landmarks.xy), derived.landmarks.xy,
                           atol=1e-9)
        assert pixels.shape == image.shape

    def test_rotate_augment_angle_limit(self, rng):
        rec = make_record(rng, "a", count=6)
        with pytest.raises(GeometryError):
            rotate_augment(rec, np.zeros((64, 64, 3), dtype=np.uint8), 181.0)


class TestHullMask:
    def test_triangle_pixel_count(self):
        # Right triangle (0,0),(4,0),(0,4) on a 5x5 grid: centers with
        # x+y <= 4 lie inside -> 5+4+3+2+1 = 15.
        tri = LandmarkSet(np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]))
        mask = hull_mask(tri, 5, 5)
        assert mask.count() == 15

    def test_matches_brute_force_oracle(self, rng):
        for trial in range(40):
            n = int(rng.integers(3, 12))
            w = int(rng.integers(4, 33))
            h = int(rng.integers(4, 33))
            pts = rng.uniform(0, [w - 1, h - 1], (n, 2))
            try:
                mask = hull_mask(LandmarkSet(pts), w, h)
            except GeometryError:
                continue
            assert np.array_equal(mask.bits, brute_force_hull_mask(pts, w, h))

    def test_degenerate_points_error(self):
        same = LandmarkSet(np.tile([[3.0, 3.0]], (5, 1)))
        with pytest.raises(GeometryError):
            hull_mask(same, 8, 8)
        collinear = LandmarkSet(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
        with pytest.raises(GeometryError):
            hull_mask(collinear, 8, 8)

    def test_permutation_invariance(self, rng):
        pts = rng.uniform(0, 20, (10, 2))
        mask1 = hull_mask(LandmarkSet(pts), 21, 21)
        mask2 = hull_mask(LandmarkSet(pts[rng.permutation(10)]), 21, 21)
        assert np.array_equal(mask1.bits, mask2.bits)
