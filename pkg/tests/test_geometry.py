import math

import numpy as np
import pytest
import shapely.geometry as sg

from osmfix.exceptions import DegenerateGeometry
from osmfix.geometry import (Polygon, Rect, assd, boundary_pixels, iou, mask_assd, rasterize,
                             shift, union_mask)

from conftest import box, brute_pixels, mask_pixels


def circle(cx, cy, r, n=32):
    a = 2 * np.pi * np.arange(n) / n
    return Polygon(np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)]))


class TestPolygon:
    def test_closing_vertex_dropped(self):
        p = Polygon([(0, 0), (4, 0), (4, 4), (0, 4), (0, 0)])
        assert len(p) == 4
        assert p.area == 16.0

    @pytest.mark.parametrize("coords", [
        [(0, 0), (1, 1), (2, 2)],
        [(0, 0), (1, 0)],
        [(0, 0), (4, 4), (4, 0), (0, 4)],
        [(0, 0), (1, 0), (np.nan, 1)],
    ])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(DegenerateGeometry):
            Polygon(coords)

    def test_centroid_of_box(self):
        assert box(2, 4, 6, 10).centroid == (4.0, 7.0)

    def test_centroid_matches_shapely(self, rng):
        pts = [(0, 0), (7, 1), (9, 6), (3, 8), (-1, 4)]
        c = Polygon(pts).centroid
        ref = sg.Polygon(pts).centroid
        assert c.x == pytest.approx(ref.x) and c.y == pytest.approx(ref.y)


class TestRasterize:
    def test_integer_square(self):
        m = rasterize(box(3, 5, 7, 9))
        assert m.count == 16
        assert m.rect == Rect(3, 5, 7, 9)

    def test_circle_radius_11_matches_brute_force(self):
        p = circle(40.0, 40.0, 11.0)
        assert mask_pixels(rasterize(p)) == brute_pixels(p)

    def test_circle_at_fractional_center(self):
        p = circle(40.3, 17.7, 11.0, n=64)
        assert mask_pixels(rasterize(p)) == brute_pixels(p)

    def test_rotated_rectangle_matches_brute_force(self):
        a = math.radians(30)
        rect = np.array([[-10, -6], [10, -6], [10, 6], [-10, 6]], float)
        rot = rect @ np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]).T
        p = Polygon(rot + 50)
        assert mask_pixels(rasterize(p)) == brute_pixels(p)

    def test_concave_polygon(self):
        p = Polygon([(0, 0), (10, 0), (10, 10), (5, 3), (0, 10)])
        assert mask_pixels(rasterize(p)) == brute_pixels(p)

    def test_centers_on_edges(self):
        # box edges pass through pixel centers: left/top in, right/bottom out
        m = rasterize(box(0.5, 0.5, 3.5, 2.5))
        assert mask_pixels(m) == {(c, r) for c in (0, 1, 2) for r in (0, 1)}

    def test_count_close_to_area(self):
        p = circle(100, 100, 11)
        assert abs(rasterize(p).count - p.area) < 2 * math.pi * 11

    def test_tiny_polygon_rejected(self):
        with pytest.raises(DegenerateGeometry):
            rasterize(box(0, 0, 0.5, 0.5))


class TestShift:
    def test_identity(self):
        p = circle(5.25, 3.125, 4)
        assert shift(p, (0, 0)) == p

    def test_unit_square(self):
        q = shift(box(0, 0, 1, 1), (5, -3))
        assert q == box(5, -3, 6, -2)

    def test_inverse_bit_exact(self):
        p = circle(0.1, 0.7, 3.3 / 0.3)
        back = shift(shift(p, (17, -29)), (-17, 29))
        assert np.array_equal(back.coords, p.coords)

    def test_mask_translates(self):
        p = circle(20.1, 20.2, 6)
        assert rasterize(shift(p, (7, -4))) == rasterize(p).translated(7, -4)


class TestIoU:
    def test_identical(self):
        assert iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0, 10, 10), box(20, 0, 30, 10)) == 0.0

    def test_half_overlap(self):
        assert iou(box(0, 0, 10, 10), box(0, 5, 10, 15)) == pytest.approx(50 / 150)

    def test_matches_pixel_set_oracle(self):
        a, b = circle(20, 20, 8), circle(26, 23, 7)
        pa, pb = brute_pixels(a), brute_pixels(b)
        assert iou(a, b) == pytest.approx(len(pa & pb) / len(pa | pb))


def brute_assd(pa, pb):
    da = [min(math.dist(p, q) for q in pb) for p in pa]
    db = [min(math.dist(q, p) for p in pa) for q in pb]
    return (sum(da) + sum(db)) / (len(da) + len(db))


class TestASSD:
    def test_identical(self):
        assert assd(box(0, 0, 5, 5), box(0, 0, 5, 5)) == 0.0

    def test_offset_unit_width_squares(self):
        a, b = box(0, 0, 1, 6), box(3, 0, 4, 6)
        pa = [tuple(p) for p in boundary_pixels(rasterize(a))]
        pb = [tuple(p) for p in boundary_pixels(rasterize(b))]
        assert assd(a, b) == pytest.approx(brute_assd(pa, pb))
        assert assd(a, b) == pytest.approx(3.0)

    def test_circles_against_quadratic_oracle(self):
        a, b = circle(20, 20, 7), circle(23, 21, 6)
        pa = [tuple(p) for p in boundary_pixels(rasterize(a))]
        pb = [tuple(p) for p in boundary_pixels(rasterize(b))]
        assert mask_assd(rasterize(a), rasterize(b)) == pytest.approx(brute_assd(pa, pb))

    def test_boundary_is_4_connected_rim(self):
        m = rasterize(box(0, 0, 5, 4))
        assert len(boundary_pixels(m)) == 5 * 4 - 3 * 2


def test_union_mask_covers_members():
    a, b = rasterize(box(0, 0, 3, 3)), rasterize(box(10, 5, 12, 8))
    u = union_mask([a, b])
    assert u.count == a.count + b.count
    assert u.rect == Rect(0, 0, 12, 8)
