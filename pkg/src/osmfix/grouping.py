"""Clustering footprints into groups and linking groups into a k-NN graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .geometry import Footprint, Mask, Point, rasterize, union_mask


@dataclass
class BuildingGroup:
    id: int
    member_ids: list[str]
    centroid: Point
    union_mask: Mask


@dataclass
class GroupGraph:
    groups: list[BuildingGroup]
    knn: list[list[int]]
    neighbors: list[list[int]]

    def __len__(self):
        return len(self.groups)

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges ``(i, j)`` with ``i < j``."""
        return [(i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j]


def _make_groups(footprints, labels) -> list[BuildingGroup]:
    members: dict[int, list[int]] = {}
    for idx, lab in enumerate(labels):
        members.setdefault(int(lab), []).append(idx)
    cents = [fp.polygon.centroid for fp in footprints]

    def key(idxs):
        return min((cents[i].y, cents[i].x) for i in idxs)

    ordered = sorted(members.values(), key=key)
    groups = []
    for gid, idxs in enumerate(ordered):
        idxs = sorted(idxs, key=lambda i: (cents[i].y, cents[i].x, footprints[i].id))
        cx = float(np.mean([cents[i].x for i in idxs]))
        cy = float(np.mean([cents[i].y for i in idxs]))
        groups.append(BuildingGroup(
            id=gid,
            member_ids=[footprints[i].id for i in idxs],
            centroid=Point(cx, cy),
            union_mask=union_mask(rasterize(footprints[i].polygon) for i in idxs),
        ))
    return groups


def group_buildings(footprints: list[Footprint], resolution: float,
                    link_distance: float = 21.0) -> list[BuildingGroup]:
    """Single-linkage clustering of footprint centroids.

    Two footprints are linked when their centroids are closer than
    ``link_distance`` meters; groups are the connected components.
    """
    if not footprints:
        return []
    limit = link_distance / resolution
    c = np.array([fp.polygon.centroid for fp in footprints], dtype=np.float64)
    dist = cdist(c, c)
    i, j = np.nonzero(dist < limit)
    adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(len(c), len(c)))
    _, labels = connected_components(adj, directed=False)
    return _make_groups(footprints, labels)


def singleton_groups(footprints: list[Footprint]) -> list[BuildingGroup]:
    """One group per footprint, ordered like :func:`group_buildings`."""
    return _make_groups(footprints, np.arange(len(footprints)))


def build_graph(groups: list[BuildingGroup], k: int = 5) -> GroupGraph:
    n = len(groups)
    if n == 0:
        return GroupGraph([], [], [])
    c = np.array([g.centroid for g in groups], dtype=np.float64)
    dist = cdist(c, c)
    knn = []
    for i in range(n):
        # stable sort keeps lower ids first among equal distances
        order = [j for j in np.argsort(dist[i], kind="stable") if j != i]
        knn.append([int(j) for j in order[:min(k, n - 1)]])
    sym = [set(nb) for nb in knn]
    for i, nb in enumerate(knn):
        for j in nb:
            sym[j].add(i)
    return GroupGraph(groups, knn, [sorted(s) for s in sym])
