import math

import numpy as np
import pytest

from osmfix.addition import (IGNORE, NEGATIVE, POSITIVE, DetectionGrid, ShapeAdder, _ring,
                             build_catalog, builtin_score, grid_size, label_shape_samples,
                             load_detection_grid, place, select_candidates,
                             write_detection_grid)
from osmfix.exceptions import FormatError
from osmfix.geometry import iou, rasterize
from osmfix.raster import ProbMap, mean_prob

from conftest import box, fp, mask_pixels

CATALOG = build_catalog(0.3)
BY_NAME = {(s.base, s.scale): s for s in CATALOG}


class TestCatalog:
    def test_size_and_ids(self):
        assert len(CATALOG) == 18
        assert [s.id for s in CATALOG] == list(range(18))

    def test_circle_radius(self):
        c = BY_NAME[("circle", 1.0)].polygon_at_origin.coords
        assert np.allclose(np.hypot(c[:, 0], c[:, 1]), 11.0)
        assert len(c) == 32

    def test_rect_dimensions(self):
        x0, y0, x1, y1 = BY_NAME[("rect0", 1.0)].polygon_at_origin.bounds
        assert (x1 - x0, y1 - y0) == pytest.approx((20.0, 12.0))
        x0, y0, x1, y1 = BY_NAME[("square", 1.0)].polygon_at_origin.bounds
        assert x1 - x0 == pytest.approx(16.0)

    @pytest.mark.parametrize("base", ["circle", "square", "rect0", "rect45", "rect90", "rect135"])
    def test_scaled_areas(self, base):
        a1 = BY_NAME[(base, 1.0)].polygon_at_origin.area
        assert BY_NAME[(base, math.sqrt(2))].polygon_at_origin.area == pytest.approx(2 * a1, rel=0.02)
        assert BY_NAME[(base, 2.0)].polygon_at_origin.area == pytest.approx(4 * a1, rel=1e-12)

    def test_rotations_preserve_area(self):
        a = BY_NAME[("rect0", 1.0)].polygon_at_origin.area
        for base in ("rect45", "rect90", "rect135"):
            assert BY_NAME[(base, 1.0)].polygon_at_origin.area == pytest.approx(a, rel=1e-12)

    def test_centered(self):
        for s in CATALOG:
            c = s.polygon_at_origin.centroid
            assert abs(c.x) < 1e-9 and abs(c.y) < 1e-9


class TestBuiltinScore:
    def test_grid_size(self):
        assert grid_size(900, 900, 4) == (225, 225)
        assert grid_size(10, 7, 4) == (3, 2)

    def test_exact_blob_scores_one(self):
        square = BY_NAME[("square", 1.0)]
        m = rasterize(square.polygon_at_origin).translated(40, 40)
        v = np.zeros((80, 80))
        v[m.y0:m.y0 + m.height, m.x0:m.x0 + m.width] = m.bits
        grid = builtin_score(ProbMap(v), CATALOG, 4, pool=False)
        assert grid.scores[square.id, 10, 10] == 1.0

    def test_uniform_map_interior(self):
        grid = builtin_score(ProbMap(np.full((120, 120), 0.3)), CATALOG, 4, pool=False)
        inner = grid.scores[:, 8:-8, 8:-8]
        assert np.allclose(inner, 0.5, atol=1e-6)

    def test_random_map_per_cell(self, rng):
        pm = ProbMap(rng.random((48, 52)))
        grid = builtin_score(pm, CATALOG, 4, pool=False)
        for sid in (0, 7, 17):
            m = rasterize(CATALOG[sid].polygon_at_origin)
            ring = _ring(m)
            for iy, ix in [(0, 0), (5, 6), (11, 12), (3, 9)]:
                cx, cy = 4 * ix, 4 * iy
                s = 0.5 * (mean_prob(m.translated(cx, cy), pm) + 1 - mean_prob(ring.translated(cx, cy), pm))
                assert grid.scores[sid, iy, ix] == pytest.approx(np.clip(s, 0, 1), abs=1e-6)

    def test_pooled_is_block_max(self, rng):
        pm = ProbMap(rng.random((40, 40)))
        pooled = builtin_score(pm, CATALOG[:2], 4)
        dense = builtin_score(pm, CATALOG[:2], 1, pool=False)
        padded = np.pad(dense.scores, ((0, 0), (2, 2), (2, 2)), constant_values=-1)
        for iy in range(10):
            for ix in range(10):
                block = padded[:, 4 * iy:4 * iy + 4, 4 * ix:4 * ix + 4]
                inside = block.reshape(2, -1).max(axis=1)
                # dense misses placements left/above the raster; pooled sees them too
                assert np.all(pooled.scores[:, iy, ix] >= inside - 1e-6)

    def test_ring_is_two_pixel_band(self):
        m = rasterize(box(0, 0, 4, 4))
        r = _ring(m)
        assert not (mask_pixels(m) & mask_pixels(r))
        assert (-2, 0) in mask_pixels(r) and (-3, 0) not in mask_pixels(r)


class TestGridFile:
    def test_round_trip(self, tmp_path, rng):
        g = DetectionGrid(rng.random((18, 5, 7)).astype(np.float32), 4)
        write_detection_grid(tmp_path / "g.dgrd", g)
        assert load_detection_grid(tmp_path / "g.dgrd") == g

    def test_wrong_plane_count(self, tmp_path):
        write_detection_grid(tmp_path / "g.dgrd", DetectionGrid(np.zeros((12, 3, 3)), 4))
        with pytest.raises(FormatError):
            load_detection_grid(tmp_path / "g.dgrd")

    def test_truncated(self, tmp_path):
        write_detection_grid(tmp_path / "g.dgrd", DetectionGrid(np.zeros((18, 3, 3)), 4))
        data = (tmp_path / "g.dgrd").read_bytes()
        (tmp_path / "h.dgrd").write_bytes(data[:-1])
        with pytest.raises(FormatError):
            load_detection_grid(tmp_path / "h.dgrd")


def grid_with(entries, shape=(25, 25)):
    scores = np.zeros((18, *shape), np.float32)
    for sid, iy, ix, v in entries:
        scores[sid, iy, ix] = v
    return DetectionGrid(scores, 4)


SQ = BY_NAME[("square", 1.0)].id


class TestSelect:
    def test_avg_below_threshold_filtered(self):
        pm = ProbMap(np.full((100, 100), 0.79))
        assert select_candidates(grid_with([(SQ, 10, 10, 0.95)]), pm, [], CATALOG, 0.80) == []

    def test_higher_sum_wins(self):
        pm = ProbMap(np.full((100, 100), 0.85))
        grid = grid_with([(SQ, 10, 10, 0.75), (SQ, 10, 11, 0.85)])
        added, cands = select_candidates(grid, pm, [], CATALOG, 0.70, return_candidates=True)
        assert len(added) == 1
        assert cands[0].center == (44, 40)
        assert cands[0].total == pytest.approx(1.7, abs=1e-6)

    def test_nothing_above_threshold(self):
        pm = ProbMap(np.ones((100, 100)))
        assert select_candidates(grid_with([(SQ, 10, 10, 0.5)]), pm, [], CATALOG) == []

    def test_overlap_with_existing_blocks(self):
        pm = ProbMap(np.ones((100, 100)))
        existing = [fp("e", box(30, 30, 42, 42))]
        assert select_candidates(grid_with([(SQ, 10, 10, 0.9)]), pm, existing, CATALOG) == []

    def test_added_footprint(self):
        pm = ProbMap(np.ones((100, 100)))
        (a,) = select_candidates(grid_with([(SQ, 10, 10, 0.9)]), pm, [], CATALOG)
        assert a.id == "added-00000" and a.source == "added"
        assert a.polygon == place(CATALOG[SQ], (40, 40))
        assert a.properties["shape_id"] == SQ


class TestLabels:
    def test_identical_is_positive(self):
        truth = [fp("t", place(CATALOG[SQ], (40, 40)))]
        labels = label_shape_samples(truth, CATALOG, (25, 25))
        assert labels[SQ, 10, 10] == POSITIVE

    def test_empty_scene(self):
        labels = label_shape_samples([], CATALOG, (6, 6))
        assert (labels == NEGATIVE).all()

    def test_half_overlap_is_ignored(self):
        r0 = BY_NAME[("rect0", 1.0)]
        truth = [fp("t", place(r0, (40, 44)))]
        assert iou(place(r0, (40, 40)), truth[0].polygon) == 0.5
        labels = label_shape_samples(truth, CATALOG, (25, 25))
        assert labels[r0.id, 10, 10] == IGNORE

    def test_far_cells_negative(self):
        truth = [fp("t", place(CATALOG[SQ], (40, 40)))]
        labels = label_shape_samples(truth, CATALOG, (25, 25))
        assert labels[SQ, 20, 20] == NEGATIVE


def test_shape_adder_finds_blob():
    sq = rasterize(place(CATALOG[SQ], (48, 52)))
    v = np.zeros((100, 100))
    v[sq.y0:sq.y0 + sq.height, sq.x0:sq.x0 + sq.width] = sq.bits
    pm = ProbMap(v)
    adder = ShapeAdder().fit([], pm)
    assert len(adder.added_) == 1
    assert iou(adder.added_[0].polygon, place(CATALOG[SQ], (48, 52))) > 0.5
    assert adder.transform([]) == adder.added_


def test_prefilter_does_not_change_candidates(monkeypatch, rng):
    import osmfix.addition as addition

    v = np.clip(rng.normal(0.5, 0.2, (120, 120)), 0, 1)
    v[40:60, 40:60] = 0.95
    pm = ProbMap(v)
    grid = builtin_score(pm, CATALOG, 4)
    fast = addition.score_candidates(grid, pm, CATALOG, 0.5)
    monkeypatch.setattr(addition, "PREFILTER_MIN", 10**9)
    slow = addition.score_candidates(grid, pm, CATALOG, 0.5)
    assert len(fast) > 0 and fast == slow
