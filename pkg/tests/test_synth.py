import numpy as np
import pytest

from osmfix.exceptions import PackingError
from osmfix.geometry import Rect, rasterize
from osmfix.grouping import group_buildings
from osmfix.synth import SceneSpec, generate, read_shift_table, write_scene


def test_identity_scene():
    sc = generate(SceneSpec(seed=1, width=400, height=400, group_count=4, max_shift=0,
                            blur_sigma=0, noise_sigma=0))
    raster = np.zeros((400, 400), bool)
    for b in sc.truth:
        raster |= rasterize(b.polygon).render(Rect(0, 0, 400, 400))
    assert np.array_equal(sc.prob_map.values, raster.astype(float))
    assert [a.polygon for a in sc.annotations] == [t.polygon for t in sc.truth]


def test_deterministic():
    a = generate(SceneSpec(seed=7, drop_fraction=0.1, miss_fraction=0.1))
    b = generate(SceneSpec(seed=7, drop_fraction=0.1, miss_fraction=0.1))
    assert a.prob_map == b.prob_map
    assert [(f.id, f.polygon) for f in a.annotations] == [(f.id, f.polygon) for f in b.annotations]
    assert a.dropped_ids == b.dropped_ids and a.shifts == b.shifts


def test_drop_count_and_seeded_order():
    spec = SceneSpec(seed=3, group_count=5, buildings_per_group=(2, 2), drop_fraction=0.2)
    sc = generate(spec)
    assert len(sc.buildings) == 10 and len(sc.dropped_ids) == 2
    # replay the sampler: after the layout the next draw is the permutation
    again = generate(spec)
    assert sc.dropped_ids == again.dropped_ids
    ids = {b.id for b in sc.buildings}
    assert set(sc.dropped_ids) <= ids
    assert not set(sc.dropped_ids) & {t.id for t in sc.truth}
    assert set(sc.dropped_ids) <= {a.id for a in sc.annotations}


def test_missing_not_annotated():
    sc = generate(SceneSpec(seed=4, miss_fraction=0.25))
    ann = {a.id for a in sc.annotations}
    assert sc.missing_ids and not set(sc.missing_ids) & ann
    assert set(sc.missing_ids) <= {t.id for t in sc.truth}


def test_annotations_shifted_by_cluster():
    sc = generate(SceneSpec(seed=5, shift_mode="independent"))
    truth = {b.id: b for b in sc.buildings}
    for a in sc.annotations:
        gx, gy = sc.shifts[sc.cluster_of[a.id]]
        assert np.array_equal(a.polygon.coords, truth[a.id].polygon.coords + [gx, gy])
        assert sc.expected_correction(a.id) == (-gx, -gy)


def test_clusters_are_groups():
    sc = generate(SceneSpec(seed=6))
    groups = group_buildings(sc.buildings, sc.spec.resolution)
    assert len(groups) == sc.spec.group_count
    for g in groups:
        assert len({sc.cluster_of[i] for i in g.member_ids}) == 1


def test_packing_error():
    with pytest.raises(PackingError):
        generate(SceneSpec(width=100, height=100, group_count=12))


def test_invalid_fractions():
    with pytest.raises(ValueError):
        SceneSpec(drop_fraction=0.6, miss_fraction=0.5)


def test_write_scene(tmp_path):
    sc = generate(SceneSpec(seed=2, drop_fraction=0.2, miss_fraction=0.1))
    paths = write_scene(tmp_path, sc)
    shifts, cluster_of, dropped, missing = read_shift_table(paths["shifts"])
    assert shifts == sc.shifts and cluster_of == sc.cluster_of
    assert dropped == sc.dropped_ids and missing == sc.missing_ids
