"""Graded meshes and histogram bin layouts.

Densities blow up or lose smoothness at critical points, so node spacing is
geometric toward flagged ends and uniform elsewhere.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateModelError

__all__ = ["graded_offsets", "graded_nodes", "occupation_bin_edges"]

DEFAULT_RATIO = 1.05
DEFAULT_MIN_OFFSET_REL = 1e-8


def graded_offsets(limit: float, min_offset: float, h_max: float,
                   ratio: float = DEFAULT_RATIO) -> np.ndarray:
    """Offsets min_offset = x_0 < x_1 < ... < limit with geometric growth.

    Cell sizes grow by `ratio` until they reach h_max, then stay uniform.
    """
    if not (0.0 < min_offset < limit):
        raise DegenerateModelError("min_offset must sit strictly inside (0, limit)")
    xs = [min_offset]
    while True:
        step = min(xs[-1] * (ratio - 1.0), h_max)
        step = max(step, min_offset * (ratio - 1.0))
        nxt = xs[-1] + step
        if nxt >= limit:
            break
        xs.append(nxt)
    return np.asarray(xs)


def graded_nodes(a: float, b: float, *, left_singular: bool, right_singular: bool,
                 min_offset: float, h_max: float,
                 ratio: float = DEFAULT_RATIO) -> np.ndarray:
    """Nodes on [a, b], geometrically refined toward each singular end.

    A singular end is approached down to `min_offset` but never touched; a
    regular end is included exactly.
    """
    length = b - a
    if length <= 0.0:
        raise DegenerateModelError(f"empty mesh interval [{a}, {b}]")
    mid = 0.5 * length
    if left_singular:
        left = a + graded_offsets(mid, min_offset, h_max, ratio)
    else:
        left = a + np.arange(0.0, mid, h_max)
    if right_singular:
        right = b - graded_offsets(mid, min_offset, h_max, ratio)[::-1]
    else:
        right = b - np.arange(0.0, mid, h_max)[::-1]
    nodes = np.concatenate([left, right])
    nodes = np.unique(nodes)
    keep = np.concatenate([[True], np.diff(nodes) > 0.25 * min_offset])
    return nodes[keep]


def occupation_bin_edges(window: tuple[float, float], criticals: list[float], *,
                         n_uniform: int = 256, min_offset_rel: float = 1e-8,
                         ratio: float = 1.35) -> np.ndarray:
    """Histogram bin edges: uniform background, log-refined at critical points.

    Each critical point inside the window becomes an edge, flanked by
    geometrically growing offsets so power-law densities stay resolved.
    """
    lo, hi = float(window[0]), float(window[1])
    width = hi - lo
    if width <= 0.0:
        raise DegenerateModelError("empty window")
    min_offset = min_offset_rel * width
    edges = [np.linspace(lo, hi, n_uniform + 1)]
    for xi in criticals:
        if not (lo < xi < hi):
            continue
        local = min([abs(xi - c) for c in criticals if c != xi] + [xi - lo, hi - xi])
        limit = max(0.45 * local, 4.0 * min_offset)
        offs = graded_offsets(limit, min_offset, h_max=width / n_uniform, ratio=ratio)
        edges.append(np.asarray([xi]))
        edges.append(xi + offs)
        edges.append(xi - offs)
    out = np.unique(np.concatenate(edges))
    out = out[(out >= lo) & (out <= hi)]
    keep = np.concatenate([[True], np.diff(out) > 0.25 * min_offset])
    return out[keep]
