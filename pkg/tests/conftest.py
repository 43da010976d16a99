import numpy as np
import pytest

from osmfix.geometry import Footprint, Polygon


def box(x0, y0, x1, y1):
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def fp(fid, polygon, **props):
    return Footprint(fid, polygon, "original", props)


def brute_inside(coords, px, py):
    """Even-odd point-in-polygon test with a half-open rule on each edge."""
    inside = False
    n = len(coords)
    for k in range(n):
        ax, ay = coords[k]
        bx, by = coords[(k + 1) % n]
        if ay == by:
            continue
        if min(ay, by) <= py < max(ay, by):
            xc = ax + (py - ay) / (by - ay) * (bx - ax)
            if xc <= px:
                inside = not inside
    return inside


def brute_pixels(polygon):
    c = polygon.coords
    out = set()
    for col in range(int(np.floor(c[:, 0].min())) - 1, int(np.ceil(c[:, 0].max())) + 1):
        for row in range(int(np.floor(c[:, 1].min())) - 1, int(np.ceil(c[:, 1].max())) + 1):
            if brute_inside(c, col + 0.5, row + 0.5):
                out.add((col, row))
    return out


def mask_pixels(mask):
    rows, cols = mask.pixels()
    return set(zip(cols.tolist(), rows.tolist()))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
