"""Command-line interface: ``osmfix <command> ...``.

Exit codes: 0 success, 1 invalid input or parameters, 2 I/O failure,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import io as gio
from .addition import (DetectionGrid, build_catalog, builtin_score, grid_size,
                       load_detection_grid, select_candidates)
from .alignment import (UNARY_ALIASES, AlignConfig, DisplacementDomain, apply_alignment,
                        icm_align)
from .exceptions import FormatError, InconsistentState, OsmFixError
from .geometry import Footprint
from .grouping import build_graph, group_buildings, singleton_groups
from .metrics import evaluate
from .raster import ProbMap, load_prob_map
from .removal import DEFAULT_MODE_GAP, mark_removed, remove_footprints
from .synth import SceneSpec, generate, write_scene

log = logging.getLogger("osmfix")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        if isinstance(self.cause, OSError):
            return EXIT_IO
        if isinstance(self.cause, InconsistentState):
            return EXIT_INTERNAL
        if isinstance(self.cause, (OsmFixError, ValueError, TypeError)):
            return EXIT_INVALID
        return EXIT_INTERNAL


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- stages

def align_stage(footprints: list[Footprint], prob_map: ProbMap, args) -> list[Footprint]:
    config = AlignConfig(beta=args.beta, max_iters=args.max_iters,
                         domain=DisplacementDomain.symmetric(args.domain),
                         unary=args.unary, site_mode=args.sites)
    if config.site_mode == "groups":
        groups = group_buildings(footprints, prob_map.resolution, args.link_distance)
    else:
        groups = singleton_groups(footprints)
    result = icm_align(build_graph(groups, args.knn), prob_map, config)
    log.info("aligned %d sites in %d sweeps (converged=%s, energy %.4f)",
             len(groups), result.iterations, result.converged, result.energy)
    return apply_alignment(footprints, groups, result)


def remove_stage(footprints: list[Footprint], prob_map: ProbMap, args) -> list[Footprint]:
    """All footprints, the removed ones tagged with ``removed_reason``."""
    kept, removed, t = remove_footprints(footprints, prob_map, args.bins, args.mode_gap)
    log.info("removal threshold %s: %d removed, %d kept", t, len(removed), len(kept))
    flagged = {fp.id: fp for fp in mark_removed(removed)}
    return [flagged.get(fp.id, fp) for fp in footprints]


def add_stage(footprints: list[Footprint], prob_map: ProbMap, args):
    """Returns ``(final, added)``; footprints tagged as removed are dropped."""
    existing = [fp for fp in footprints if "removed_reason" not in fp.properties]
    catalog = build_catalog(prob_map.resolution)
    if args.detection_grid:
        grid: DetectionGrid = load_detection_grid(args.detection_grid, len(catalog))
        gw, gh = grid_size(prob_map.width, prob_map.height, grid.stride)
        if (grid.grid_w, grid.grid_h) != (gw, gh):
            raise FormatError(f"detection grid is {grid.grid_w}x{grid.grid_h}, "
                              f"map needs {gw}x{gh} at stride {grid.stride}")
    else:
        grid = builtin_score(prob_map, catalog, args.stride, pool=not args.no_pool)
    added = select_candidates(grid, prob_map, existing, catalog, args.threshold)
    log.info("added %d footprints", len(added))
    return existing + added, added


# ---------------------------------------------------------------- commands

def _check_distinct(*paths):
    resolved = [Path(p).resolve() for p in paths if p]
    if len(set(resolved)) != len(resolved):
        raise ValueError("input and output paths must be distinct")


def _load_inputs(args):
    with stage("load"):
        _check_distinct(args.map, args.annotations, getattr(args, "out", None),
                        getattr(args, "added_out", None), getattr(args, "truth", None))
        prob_map = load_prob_map(args.map, args.resolution)
        footprints = gio.read_geojson(args.annotations)
    return prob_map, footprints


def _write(path, footprints, name):
    with stage(name):
        gio.write_geojson(path, footprints)


def cmd_align(args):
    prob_map, footprints = _load_inputs(args)
    with stage("align"):
        out = align_stage(footprints, prob_map, args)
    _write(args.out, out, "align")


def cmd_remove(args):
    prob_map, footprints = _load_inputs(args)
    with stage("remove"):
        out = remove_stage(footprints, prob_map, args)
    _write(args.out, out, "remove")


def cmd_add(args):
    prob_map, footprints = _load_inputs(args)
    with stage("add"):
        final, added = add_stage(footprints, prob_map, args)
    if args.added_out:
        _write(args.added_out, added, "add")
    _write(args.out, final, "add")


def cmd_pipeline(args):
    prob_map, footprints = _load_inputs(args)
    out = Path(args.out_dir)
    with stage("load"):
        out.mkdir(parents=True, exist_ok=True)
        truth = gio.read_geojson(args.truth) if args.truth else None
    with stage("align"):
        aligned = align_stage(footprints, prob_map, args)
    _write(out / "aligned.geojson", aligned, "align")
    with stage("remove"):
        flagged = remove_stage(aligned, prob_map, args)
    _write(out / "removed.geojson", flagged, "remove")
    with stage("add"):
        final, added = add_stage(flagged, prob_map, args)
    _write(out / "added.geojson", added, "add")
    _write(out / "final.geojson", final, "add")
    if truth is not None:
        with stage("eval"):
            report = evaluate(final, truth, (prob_map.width, prob_map.height))
            (out / "report.txt").write_text(report.to_text())
        sys.stdout.write(report.to_text())


def cmd_eval(args):
    with stage("load"):
        pred = [fp for fp in gio.read_geojson(args.pred) if "removed_reason" not in fp.properties]
        truth = gio.read_geojson(args.truth)
        if args.map:
            pm = load_prob_map(args.map, args.resolution)
            extent = (pm.width, pm.height)
        elif args.extent:
            extent = tuple(args.extent)
        else:
            raise ValueError("eval needs --map or --extent for the pixel extent")
    with stage("eval"):
        text = evaluate(pred, truth, extent).to_text()
    if args.out:
        with stage("eval"):
            Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args):
    with stage("synth"):
        spec = SceneSpec(seed=args.seed, width=args.width, height=args.height,
                         resolution=args.resolution, group_count=args.groups,
                         buildings_per_group=tuple(args.per_group), max_shift=args.max_shift,
                         shift_mode=args.shift_mode, shift_jitter=args.shift_jitter,
                         drop_fraction=args.drop, miss_fraction=args.miss,
                         blur_sigma=args.blur, noise_sigma=args.noise)
        scene = generate(spec)
        paths = write_scene(args.out_dir, scene)
    for k, p in paths.items():
        log.info("wrote %s: %s", k, p)


def cmd_shapes(args):
    with stage("shapes"):
        catalog = build_catalog(args.resolution)
        fps = [Footprint(f"shape-{s.id:02d}", s.polygon_at_origin, "original",
                         {"base": s.base, "scale": s.scale}) for s in catalog]
    _write(args.out, fps, "shapes")


# ---------------------------------------------------------------- parser

def _unit(v):
    f = float(v)
    if not 0.0 <= f <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} is not in [0, 1]")
    return f


def _positive_int(v):
    i = int(v)
    if i < 1:
        raise argparse.ArgumentTypeError(f"{v} must be a positive integer")
    return i


def _nonneg(v):
    f = float(v)
    if f < 0:
        raise argparse.ArgumentTypeError(f"{v} must be non-negative")
    return f


def _add_io(p, out=True):
    p.add_argument("--map", required=True, help="probability raster (.pmap or grayscale .png)")
    p.add_argument("--resolution", type=float, default=None,
                   help="meters per pixel, required for PNG rasters")
    p.add_argument("--annotations", required=True, help="input footprints (GeoJSON)")
    if out:
        p.add_argument("--out", required=True, help="output GeoJSON")


def _add_align(p):
    g = p.add_argument_group("alignment")
    g.add_argument("--beta", type=_nonneg, default=2.0)
    g.add_argument("--max-iters", type=_positive_int, default=10)
    g.add_argument("--domain", type=int, default=30, help="max displacement in pixels")
    g.add_argument("--link-distance", type=_nonneg, default=21.0, help="grouping distance (m)")
    g.add_argument("--knn", type=_positive_int, default=5)
    g.add_argument("--unary", default="correlation",
                   choices=["correlation", *UNARY_ALIASES, "abs_difference", "mutual_info"])
    g.add_argument("--sites", default="groups", choices=["groups", "buildings"])


def _add_remove(p):
    g = p.add_argument_group("removal")
    g.add_argument("--bins", type=_positive_int, default=64)
    g.add_argument("--mode-gap", type=_unit, default=DEFAULT_MODE_GAP,
                   help="minimum distance between the two histogram modes")


def _add_add(p):
    g = p.add_argument_group("addition")
    g.add_argument("--threshold", type=_unit, default=0.80)
    g.add_argument("--stride", type=_positive_int, default=4)
    g.add_argument("--detection-grid", default=None, help="DGRD file instead of the built-in scorer")
    g.add_argument("--no-pool", action="store_true",
                   help="score lattice points only, without the per-cell maximum")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osmfix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align footprint groups to the probability map")
    _add_io(p)
    _add_align(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("remove", help="tag footprints without probability evidence")
    _add_io(p)
    _add_remove(p)
    p.set_defaults(func=cmd_remove)

    p = sub.add_parser("add", help="add buildings from the shape catalog")
    _add_io(p)
    _add_add(p)
    p.add_argument("--added-out", default=None, help="also write the additions alone")
    p.set_defaults(func=cmd_add)

    p = sub.add_parser("pipeline", help="align, remove and add in one run")
    _add_io(p, out=False)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--truth", default=None, help="ground truth GeoJSON; writes report.txt")
    _add_align(p)
    _add_remove(p)
    _add_add(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="score footprints against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--map", default=None, help="raster defining the pixel extent")
    p.add_argument("--resolution", type=float, default=None)
    p.add_argument("--extent", type=int, nargs=2, metavar=("WIDTH", "HEIGHT"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic scene with known errors")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=_positive_int, default=900)
    p.add_argument("--height", type=_positive_int, default=900)
    p.add_argument("--resolution", type=float, default=0.3)
    p.add_argument("--groups", type=_positive_int, default=12)
    p.add_argument("--per-group", type=_positive_int, nargs=2, default=[1, 3], metavar=("MIN", "MAX"))
    p.add_argument("--max-shift", type=int, default=25)
    p.add_argument("--shift-mode", choices=["shared", "independent"], default="shared")
    p.add_argument("--shift-jitter", type=int, default=0)
    p.add_argument("--drop", type=_unit, default=0.0)
    p.add_argument("--miss", type=_unit, default=0.0)
    p.add_argument("--blur", type=_nonneg, default=2.0)
    p.add_argument("--noise", type=_nonneg, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("shapes", help="write the shape catalog as GeoJSON")
    p.add_argument("--resolution", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shapes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"osmfix: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
