"""Synthetic scenes with known misalignment, stale and missing annotations.

Buildings are catalog shapes packed into well-separated clusters.  Every
cluster carries one true shift; annotations are the buildings displaced by
that shift.  The probability map is the truth raster blurred and corrupted
with Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .addition import build_catalog, place
from .exceptions import PackingError
from .geometry import Footprint, Rect, rasterize
from .raster import ProbMap, write_pmap


@dataclass
class SceneSpec:
    seed: int = 0
    width: int = 900
    height: int = 900
    resolution: float = 0.3
    group_count: int = 12
    buildings_per_group: tuple[int, int] = (1, 3)
    shape_weights: tuple[float, ...] | None = None
    max_shift: int = 25
    # "shared": one shift for the whole scene; "independent": one per cluster
    shift_mode: str = "shared"
    # extra per-cluster integer offset in [-shift_jitter, shift_jitter]
    shift_jitter: int = 0
    drop_fraction: float = 0.0
    miss_fraction: float = 0.0
    blur_sigma: float = 2.0
    noise_sigma: float = 0.1
    # building centroids of one cluster stay inside this radius (pixels)
    cluster_radius: float = 30.0
    # gap kept between clusters on top of their extent and the shift range
    cluster_gap: float = 20.0
    max_retries: int = 500

    def __post_init__(self):
        for name in ("drop_fraction", "miss_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.drop_fraction + self.miss_fraction >= 1.0:
            raise ValueError("drop_fraction + miss_fraction must stay below 1")
        lo, hi = self.buildings_per_group
        if not 1 <= lo <= hi:
            raise ValueError("buildings_per_group must be a range with lower bound >= 1")
        if self.max_shift < 0 or self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("max_shift, blur_sigma and noise_sigma must be non-negative")
        if self.shift_mode not in ("shared", "independent"):
            raise ValueError(f"unknown shift_mode {self.shift_mode!r}")
        if not 0 <= self.shift_jitter <= self.max_shift:
            raise ValueError("shift_jitter must lie in [0, max_shift]")
        if 2 * self.cluster_radius >= 21.0 / self.resolution:
            raise ValueError("cluster diameter must stay below the 21 m grouping distance")


@dataclass
class SyntheticScene:
    spec: SceneSpec
    truth: list[Footprint]
    annotations: list[Footprint]
    prob_map: ProbMap
    shifts: dict[int, tuple[int, int]]
    cluster_of: dict[str, int]
    dropped_ids: list[str] = field(default_factory=list)
    missing_ids: list[str] = field(default_factory=list)
    buildings: list[Footprint] = field(default_factory=list)

    def expected_correction(self, footprint_id: str) -> tuple[int, int]:
        """Displacement that maps the annotation back onto its building."""
        gx, gy = self.shifts[self.cluster_of[footprint_id]]
        return -gx, -gy


def _cluster_centers(spec: SceneSpec, rng, reach: float) -> list[tuple[float, float]]:
    """Cluster centers on a jittered lattice, at least ``2 * reach + gap`` apart."""
    jitter = spec.cluster_gap / 2.0
    cell = 2 * reach + 3 * spec.cluster_gap
    nx, ny = int(spec.width // cell), int(spec.height // cell)
    if nx * ny < spec.group_count:
        raise PackingError(f"{spec.width}x{spec.height} px holds at most {nx * ny} clusters, "
                           f"{spec.group_count} requested")
    ox = (spec.width - nx * cell) / 2.0
    oy = (spec.height - ny * cell) / 2.0
    cells = rng.permutation(nx * ny)[:spec.group_count]
    centers = []
    for c in sorted(cells):
        iy, ix = divmod(int(c), nx)
        centers.append((ox + (ix + 0.5) * cell + rng.uniform(-jitter, jitter),
                        oy + (iy + 0.5) * cell + rng.uniform(-jitter, jitter)))
    return centers


PLACEMENT_ATTEMPTS = 50
BUILDING_GAP = 3


def _layout_cluster(cx, cy, count, occupied, masks, catalog, weights, spec, rng):
    """Place ``count`` buildings around ``(cx, cy)`` or return ``None``.

    Buildings keep ``BUILDING_GAP`` free pixels (4-connected) from each
    other and from anything already in ``occupied``, which is not modified.
    """
    grow = ndimage.generate_binary_structure(2, 1)
    local = occupied.copy()
    placed = []
    for _ in range(count):
        for _attempt in range(PLACEMENT_ATTEMPTS):
            sid = int(rng.choice(len(catalog), p=weights))
            rad = spec.cluster_radius * np.sqrt(rng.uniform())
            ang = rng.uniform(0, 2 * np.pi)
            px, py = int(round(cx + rad * np.cos(ang))), int(round(cy + rad * np.sin(ang)))
            m = masks[sid].translated(px, py)
            halo = ndimage.binary_dilation(np.pad(m.bits, BUILDING_GAP), structure=grow,
                                           iterations=BUILDING_GAP)
            y0, x0 = m.y0 - BUILDING_GAP, m.x0 - BUILDING_GAP
            win = local[y0:y0 + halo.shape[0], x0:x0 + halo.shape[1]]
            if not (win & halo).any():
                local[m.y0:m.y0 + m.height, m.x0:m.x0 + m.width] |= m.bits
                placed.append((sid, (px, py), m))
                break
        else:
            return None
    return placed


def generate(spec: SceneSpec) -> SyntheticScene:
    rng = np.random.default_rng(spec.seed)
    catalog = build_catalog(spec.resolution)
    weights = np.ones(len(catalog)) if spec.shape_weights is None else np.asarray(spec.shape_weights, float)
    if len(weights) != len(catalog) or weights.min() < 0 or weights.sum() <= 0:
        raise ValueError("shape_weights needs one non-negative weight per catalog shape")
    weights = weights / weights.sum()

    masks = {s.id: rasterize(s.polygon_at_origin) for s in catalog}
    half_extent = max(max(abs(m.x0), abs(m.y0), m.x0 + m.width, m.y0 + m.height) for m in masks.values())
    reach = spec.cluster_radius + half_extent + spec.max_shift
    centers = _cluster_centers(spec, rng, reach)

    def draw(r):
        return int(rng.integers(-r, r + 1))

    scene_shift = (draw(spec.max_shift), draw(spec.max_shift))
    occupied = np.zeros((spec.height, spec.width), dtype=bool)
    buildings, cluster_of, shifts = [], {}, {}
    for g, (cx, cy) in enumerate(centers):
        if spec.shift_mode == "shared":
            gx, gy = scene_shift
        else:
            gx, gy = draw(spec.max_shift), draw(spec.max_shift)
        if spec.shift_jitter:
            gx = int(np.clip(gx + draw(spec.shift_jitter), -spec.max_shift, spec.max_shift))
            gy = int(np.clip(gy + draw(spec.shift_jitter), -spec.max_shift, spec.max_shift))
        shifts[g] = (gx, gy)
        count = int(rng.integers(spec.buildings_per_group[0], spec.buildings_per_group[1] + 1))
        # a large early building can leave no room for the rest; lay the
        # whole cluster out again when that happens
        for _layout in range(spec.max_retries):
            placed = _layout_cluster(cx, cy, count, occupied, masks, catalog, weights, spec, rng)
            if placed is not None:
                break
        else:
            raise PackingError(f"could not pack {count} buildings into cluster {g}")
        for sid, (px, py), m in placed:
            occupied[m.y0:m.y0 + m.height, m.x0:m.x0 + m.width] |= m.bits
            fid = f"b{len(buildings):04d}"
            buildings.append(Footprint(fid, place(catalog[sid], (px, py)), "original",
                                       {"shape_id": sid}))
            cluster_of[fid] = g

    n = len(buildings)
    order = rng.permutation(n)
    n_drop = int(round(spec.drop_fraction * n))
    n_miss = int(round(spec.miss_fraction * n))
    dropped = sorted(buildings[i].id for i in order[:n_drop])
    missing = sorted(buildings[i].id for i in order[n_drop:n_drop + n_miss])
    dropped_set, missing_set = set(dropped), set(missing)

    truth = [b for b in buildings if b.id not in dropped_set]
    extent = Rect(0, 0, spec.width, spec.height)
    raster = np.zeros((spec.height, spec.width), dtype=bool)
    for b in truth:
        raster |= rasterize(b.polygon).render(extent)
    values = raster.astype(np.float64)
    if spec.blur_sigma > 0:
        values = ndimage.gaussian_filter(values, spec.blur_sigma, mode="constant")
    if spec.noise_sigma > 0:
        values = values + rng.normal(0.0, spec.noise_sigma, values.shape)
    # float32-representable so that writing the raster is lossless
    values = np.clip(values, 0.0, 1.0).astype(np.float32).astype(np.float64)
    prob_map = ProbMap(values, spec.resolution)

    annotations = [b.replace(polygon=b.polygon.translated(*shifts[cluster_of[b.id]]), properties={})
                   for b in buildings if b.id not in missing_set]
    return SyntheticScene(spec, truth, annotations, prob_map, shifts, cluster_of,
                          dropped, missing, buildings)


def write_shift_table(path, scene: SyntheticScene) -> None:
    lines = ["# cluster dx dy members"]
    members: dict[int, list[str]] = {}
    for fid, g in scene.cluster_of.items():
        members.setdefault(g, []).append(fid)
    for g in sorted(scene.shifts):
        dx, dy = scene.shifts[g]
        lines.append(f"{g} {dx} {dy} {','.join(sorted(members.get(g, [])))}")
    lines.append("# dropped " + ",".join(scene.dropped_ids))
    lines.append("# missing " + ",".join(scene.missing_ids))
    Path(path).write_text("\n".join(lines) + "\n")


def read_shift_table(path) -> tuple[dict[int, tuple[int, int]], dict[str, int], list[str], list[str]]:
    shifts, cluster_of, dropped, missing = {}, {}, [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# dropped"):
            dropped = [s for s in line[len("# dropped"):].strip().split(",") if s]
        elif line.startswith("# missing"):
            missing = [s for s in line[len("# missing"):].strip().split(",") if s]
        elif line and not line.startswith("#"):
            parts = line.split()
            g = int(parts[0])
            shifts[g] = (int(parts[1]), int(parts[2]))
            for fid in (parts[3].split(",") if len(parts) > 3 else []):
                cluster_of[fid] = g
    return shifts, cluster_of, dropped, missing


def write_scene(directory, scene: SyntheticScene) -> dict[str, Path]:
    """Write ``prob.pmap``, ``truth.geojson``, ``annotations.geojson`` and ``shifts.txt``."""
    from .io import write_geojson

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "map": d / "prob.pmap",
        "truth": d / "truth.geojson",
        "annotations": d / "annotations.geojson",
        "shifts": d / "shifts.txt",
    }
    write_pmap(paths["map"], scene.prob_map)
    write_geojson(paths["truth"], scene.truth)
    write_geojson(paths["annotations"], scene.annotations)
    write_shift_table(paths["shifts"], scene)
    return paths
