"""MRF alignment of footprint groups onto a probability map.

Each site (a group of footprints, or a single footprint) receives an
integer displacement from a finite domain.  The energy of a labelling is

    sum_i unary_i(d_i) + beta / Z * sum_{edges (i, j)} ||d_i - d_j||

with ``Z`` the largest distance between two labels of the domain.  The
correlation unary is ``-log`` of the mean probability under the shifted
site mask.  It is minimized by iterated conditional modes starting from the
per-site best unary label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import EmptyMask, InconsistentState
from .geometry import Footprint, Mask, Rect, shift
from .grouping import BuildingGroup, GroupGraph, build_graph, group_buildings, singleton_groups
from .raster import (MI_BINS, ProbMap, abs_difference, mean_prob, mi_from_joint, mutual_info,
                     quantize)
from .validation import check_footprints, check_prob_map

EPS = 1e-6
UNARIES = ("correlation", "abs_difference", "mutual_info")
UNARY_ALIASES = {"corr": "correlation", "absdiff": "abs_difference", "mi": "mutual_info"}
SITE_MODES = ("groups", "buildings")


class Displacement(NamedTuple):
    dx: int
    dy: int


@dataclass(frozen=True)
class DisplacementDomain:
    """Integer displacements ``x_range x y_range`` (inclusive bounds)."""

    x_range: tuple[int, int] = (-30, 30)
    y_range: tuple[int, int] = (-30, 30)

    def __post_init__(self):
        (ax, bx), (ay, by) = self.x_range, self.y_range
        if ax > bx or ay > by:
            raise ValueError("empty displacement domain")
        if not (ax <= 0 <= bx and ay <= 0 <= by):
            raise ValueError("displacement domain must contain (0, 0)")

    @classmethod
    def symmetric(cls, r: int) -> "DisplacementDomain":
        return cls((-r, r), (-r, r))

    @property
    def radius(self) -> int:
        return max(abs(v) for v in self.x_range + self.y_range)

    @property
    def normalizer(self) -> float:
        """Largest distance between two labels (the domain diagonal)."""
        w = self.x_range[1] - self.x_range[0]
        h = self.y_range[1] - self.y_range[0]
        return math.hypot(w, h)

    @property
    def labels(self) -> np.ndarray:
        """All labels as an ``(m, 2)`` int array in tie-breaking order.

        Order: smaller norm first, then lexicographic ``(dx, dy)``.
        """
        xs = np.arange(self.x_range[0], self.x_range[1] + 1)
        ys = np.arange(self.y_range[0], self.y_range[1] + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        dx, dy = gx.ravel(), gy.ravel()
        order = np.lexsort((dy, dx, dx * dx + dy * dy))
        return np.column_stack([dx[order], dy[order]])

    def __contains__(self, d) -> bool:
        dx, dy = d
        return (self.x_range[0] <= dx <= self.x_range[1]
                and self.y_range[0] <= dy <= self.y_range[1])

    def __len__(self) -> int:
        return ((self.x_range[1] - self.x_range[0] + 1)
                * (self.y_range[1] - self.y_range[0] + 1))


@dataclass
class AlignConfig:
    beta: float = 2.0
    max_iters: int = 10
    domain: DisplacementDomain = field(default_factory=DisplacementDomain)
    unary: str = "correlation"
    site_mode: str = "groups"

    def __post_init__(self):
        self.unary = UNARY_ALIASES.get(self.unary, self.unary)
        if self.unary not in UNARIES:
            raise ValueError(f"unknown unary {self.unary!r}")
        if self.site_mode not in SITE_MODES:
            raise ValueError(f"unknown site mode {self.site_mode!r}")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class AlignmentResult:
    displacements: list[Displacement]
    unary: list[float]
    energy: float
    energy_trace: list[float]
    iterations: int
    converged: bool
    initial: list[Displacement]
    # same energy with every edge counted from both of its endpoints
    energy_trace_both: list[float] = field(default_factory=list)


def site_window(mask: Mask, prob_map: ProbMap, domain: DisplacementDomain) -> Rect:
    """Evaluation window of the windowed measures: mask box grown by the domain radius."""
    return mask.rect.dilate(domain.radius).intersect(prob_map.rect)


def unary_energy(mask: Mask, d, prob_map: ProbMap, unary: str = "correlation",
                 window: Rect | None = None, domain: DisplacementDomain | None = None) -> float:
    """Data cost of displacing ``mask`` by ``d`` (lower is better)."""
    unary = UNARY_ALIASES.get(unary, unary)
    moved = mask.translated(*d)
    if unary == "correlation":
        return -math.log(max(mean_prob(moved, prob_map), EPS))
    if mask.count == 0:
        raise EmptyMask("site mask has no set pixels")
    if window is None:
        window = site_window(mask, prob_map, domain or DisplacementDomain())
    if unary == "abs_difference":
        return abs_difference(moved, prob_map, window)
    if unary == "mutual_info":
        return -mutual_info(moved, prob_map, window)
    raise ValueError(f"unknown unary {unary!r}")


def _shifted_sums(mask: Mask, grid: np.ndarray, domain: DisplacementDomain):
    """Sum of ``grid`` under the mask for every displacement, as a (ny, nx) array.

    ``grid`` covers the mask box grown by the domain ranges.
    """
    (ax, bx), (ay, by) = domain.x_range, domain.y_range
    nx, ny = bx - ax + 1, by - ay + 1
    out = np.zeros((ny, nx))
    rows, cols = np.nonzero(mask.bits)
    for r, c in zip(rows, cols):
        out += grid[r:r + ny, c:c + nx]
    return out


def unary_table(mask: Mask, prob_map: ProbMap, domain: DisplacementDomain,
                unary: str = "correlation") -> np.ndarray:
    """Unary energy of every label of ``domain``, ordered like ``domain.labels``."""
    unary = UNARY_ALIASES.get(unary, unary)
    n = mask.count
    if n == 0:
        raise EmptyMask("site mask has no set pixels")
    (ax, bx), (ay, by) = domain.x_range, domain.y_range
    pad = Rect(mask.x0 + ax, mask.y0 + ay, mask.x0 + mask.width + bx, mask.y0 + mask.height + by)
    labels = domain.labels
    li, lj = labels[:, 1] - ay, labels[:, 0] - ax
    vals = prob_map.window(pad)

    if unary == "correlation":
        sums = _shifted_sums(mask, vals, domain)[li, lj]
        return -np.log(np.maximum(sums / n, EPS))

    window = site_window(mask, prob_map, domain)
    inside = np.zeros((pad.height, pad.width), dtype=bool)
    ov = window.intersect(pad)
    inside[ov.y0 - pad.y0:ov.y1 - pad.y0, ov.x0 - pad.x0:ov.x1 - pad.x0] = True

    if unary == "abs_difference":
        total = prob_map.window(window).sum()
        count_in = _shifted_sums(mask, inside.astype(np.float64), domain)[li, lj]
        sums = _shifted_sums(mask, vals, domain)[li, lj]
        return total + count_in - 2.0 * sums

    if unary == "mutual_info":
        bins = MI_BINS
        q = np.where(inside, quantize(vals, bins), bins).ravel()
        wcounts = np.bincount(quantize(prob_map.window(window), bins).ravel(), minlength=bins)
        rows, cols = np.nonzero(mask.bits)
        base = rows * pad.width + cols
        offsets = li * pad.width + lj
        out = np.empty(len(labels))
        chunk = max(1, 2_000_000 // max(len(base), 1))
        for s in range(0, len(labels), chunk):
            off = offsets[s:s + chunk]
            qv = q[base[None, :] + off[:, None]]
            local = np.arange(len(off))[:, None] * (bins + 1) + qv
            cnt = np.bincount(local.ravel(), minlength=len(off) * (bins + 1))
            ones = cnt.reshape(len(off), bins + 1)[:, :bins].astype(np.float64)
            joint = np.stack([wcounts[None, :] - ones, ones], axis=1)
            out[s:s + chunk] = [-mi_from_joint(j) for j in joint]
        return out
    raise ValueError(f"unknown unary {unary!r}")


def pairwise_energy(d_i, d_j, beta: float, normalizer: float) -> float:
    if normalizer <= 0:
        raise ValueError("normalizer must be positive")
    return beta * math.hypot(d_i[0] - d_j[0], d_i[1] - d_j[1]) / normalizer


def site_energy(i: int, d, current, graph: GroupGraph, prob_map: ProbMap,
                config: AlignConfig) -> float:
    """Conditional energy of site ``i`` taking label ``d`` given its neighbours."""
    mask = graph.groups[i].union_mask
    e = unary_energy(mask, d, prob_map, config.unary, domain=config.domain)
    z = config.domain.normalizer
    for j in graph.neighbors[i]:
        e += pairwise_energy(d, current[j], config.beta, z)
    return e


class _Problem:
    """Precomputed unary tables plus vectorized conditional energies."""

    def __init__(self, graph: GroupGraph, prob_map: ProbMap, config: AlignConfig):
        self.graph = graph
        self.config = config
        self.labels = config.domain.labels
        self.labels_f = self.labels.astype(np.float64)
        self.scale = config.beta / config.domain.normalizer
        self.tables = [unary_table(g.union_mask, prob_map, config.domain, config.unary)
                       for g in graph.groups]

    def conditional(self, i: int, state: np.ndarray) -> np.ndarray:
        e = self.tables[i].copy()
        if self.scale > 0 and self.graph.neighbors[i]:
            pair = np.zeros(len(self.labels))
            for j in self.graph.neighbors[i]:
                dj = self.labels_f[state[j]]
                pair += np.hypot(self.labels_f[:, 0] - dj[0], self.labels_f[:, 1] - dj[1])
            e += self.scale * pair
        return e

    def total(self, state: np.ndarray, edge_weight: int = 1) -> float:
        e = sum(float(self.tables[i][s]) for i, s in enumerate(state))
        if self.scale > 0:
            for i, j in self.graph.edges():
                a, b = self.labels_f[state[i]], self.labels_f[state[j]]
                e += edge_weight * self.scale * math.hypot(a[0] - b[0], a[1] - b[1])
        return e

    def to_displacements(self, state) -> list[Displacement]:
        return [Displacement(int(self.labels[s][0]), int(self.labels[s][1])) for s in state]


def total_energy(displacements, graph: GroupGraph, prob_map: ProbMap, config: AlignConfig,
                 count_edges_twice: bool = False) -> float:
    """Energy of a labelling, each undirected edge counted once by default."""
    z = config.domain.normalizer
    e = 0.0
    for i, g in enumerate(graph.groups):
        e += unary_energy(g.union_mask, displacements[i], prob_map, config.unary, domain=config.domain)
    for i, j in graph.edges():
        weight = 2 if count_edges_twice else 1
        e += weight * pairwise_energy(displacements[i], displacements[j], config.beta, z)
    return e


def init_alignment(graph: GroupGraph, prob_map: ProbMap, config: AlignConfig) -> list[Displacement]:
    """Best unary label of every site, ignoring neighbours."""
    prob = _Problem(graph, prob_map, config)
    return prob.to_displacements([int(np.argmin(t)) for t in prob.tables])


def icm_align(graph: GroupGraph, prob_map: ProbMap, config: AlignConfig | None = None) -> AlignmentResult:
    """Iterated conditional modes from the best-unary initialization.

    Sites are visited in ascending id.  A site moves only to a strictly
    lower conditional energy; ties keep the earliest label in domain order.
    """
    config = config or AlignConfig()
    if len(graph) == 0:
        return AlignmentResult([], [], 0.0, [0.0], 0, True, [], [0.0])
    prob = _Problem(graph, prob_map, config)
    state = np.array([int(np.argmin(t)) for t in prob.tables])
    initial = prob.to_displacements(state)
    trace = [prob.total(state)]
    trace_both = [prob.total(state, 2)]
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        changes = 0
        for i in range(len(graph)):
            e = prob.conditional(i, state)
            best = int(np.argmin(e))
            if e[best] < e[state[i]]:
                state[i] = best
                changes += 1
        iterations += 1
        trace.append(prob.total(state))
        trace_both.append(prob.total(state, 2))
        if changes == 0:
            converged = True
            break
    return AlignmentResult(
        displacements=prob.to_displacements(state),
        unary=[float(prob.tables[i][s]) for i, s in enumerate(state)],
        energy=trace[-1],
        energy_trace=trace,
        iterations=iterations,
        converged=converged,
        initial=initial,
        energy_trace_both=trace_both,
    )


def apply_alignment(footprints: list[Footprint], groups: list[BuildingGroup],
                    result: AlignmentResult) -> list[Footprint]:
    if len(result.displacements) != len(groups):
        raise InconsistentState("alignment result does not match the group list")
    lookup = {}
    for g, d in zip(groups, result.displacements):
        for fid in g.member_ids:
            lookup[fid] = d
    out = []
    for fp in footprints:
        if fp.id not in lookup:
            raise InconsistentState(f"footprint {fp.id!r} belongs to no aligned group")
        out.append(fp.replace(polygon=shift(fp.polygon, lookup[fp.id]), source="aligned"))
    return out


BASELINES = {
    "CorrBuildings": dict(beta=0.0, site_mode="buildings"),
    "CorrGroups": dict(beta=0.0, site_mode="groups"),
    "MRFBuildings": dict(site_mode="buildings"),
    "MRFGroups": dict(site_mode="groups"),
    "AbsDifference": dict(beta=0.0, unary="abs_difference"),
    "MutualInfo": dict(beta=0.0, unary="mutual_info"),
}


class MRFAligner(TransformerMixin, BaseEstimator):
    """Align footprints to a probability map by translating footprint groups.

    ``fit(footprints, prob_map)`` solves for one displacement per site;
    ``transform(footprints)`` applies them.  Chaining with
    :class:`~osmfix.removal.EvidenceFilter` and :class:`~osmfix.addition.ShapeAdder`
    in a :class:`sklearn.pipeline.Pipeline` passes the map along as ``y``.

    Parameters
    ----------
    beta : float
        Weight of the smoothness term between neighbouring sites.
    max_iters : int
        Maximum number of ICM sweeps.
    max_displacement : int
        Displacements range over ``[-max_displacement, max_displacement]``
        on both axes.
    unary : {"correlation", "abs_difference", "mutual_info"}
    site_mode : {"groups", "buildings"}
    link_distance : float
        Grouping distance between footprint centroids, in meters.
    n_neighbors : int
        Number of nearest groups each site is connected to.
    """

    def __init__(self, beta=2.0, max_iters=10, max_displacement=30, unary="correlation",
                 site_mode="groups", link_distance=21.0, n_neighbors=5):
        self.beta = beta
        self.max_iters = max_iters
        self.max_displacement = max_displacement
        self.unary = unary
        self.site_mode = site_mode
        self.link_distance = link_distance
        self.n_neighbors = n_neighbors

    @classmethod
    def baseline(cls, name: str, **overrides) -> "MRFAligner":
        return cls(**{**BASELINES[name], **overrides})

    def _config(self) -> AlignConfig:
        return AlignConfig(beta=float(self.beta), max_iters=int(self.max_iters),
                           domain=DisplacementDomain.symmetric(int(self.max_displacement)),
                           unary=self.unary, site_mode=self.site_mode)

    def fit(self, X, y):
        footprints = check_footprints(X)
        prob_map = check_prob_map(y)
        config = self._config()
        if config.site_mode == "groups":
            groups = group_buildings(footprints, prob_map.resolution, self.link_distance)
        else:
            groups = singleton_groups(footprints)
        self.groups_ = groups
        self.graph_ = build_graph(groups, int(self.n_neighbors))
        self.result_ = icm_align(self.graph_, prob_map, config)
        self.shifts_ = {fid: d for g, d in zip(groups, self.result_.displacements)
                        for fid in g.member_ids}
        return self

    def transform(self, X):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "result_")
        footprints = check_footprints(X)
        return apply_alignment(footprints, self.groups_, self.result_)
