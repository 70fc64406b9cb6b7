"""Hyperbolic fillings of finite metric measure spaces.

A filling of depth N over a space Z is a leveled graph.  Level n >= 1
holds one vertex per point of a maximal 2^-n-separated net Z_n; the
vertex represents the open ball of radius 2^(1-n) around its net point.
Level 0 is a single root vertex representing all of Z (radius 1).  Edges
join distinct vertices whose levels differ by at most 1 and whose balls
intersect, tested on center distance:  d(c, c') < r + r'.  Each edge is
oriented from the lower level to the higher (ties broken by smaller
vertex id), so a function difference across an edge has a well-defined
sign.

Nets are built greedily: points are visited in a seed-determined random
order and accepted when at least 2^-n from every previously accepted
point.  Greedy insertion over any order yields a separated net that is
automatically maximal once every point has been visited.  The seed only
chooses among the many valid maximal nets; two seeds give two legitimate
fillings of the same space, which is exactly what the cross-filling
experiments need.

Vertex ids are assigned level by level in net acceptance order, so
(space, max_level, seed) determines the filling completely, and fillings
of different depths with the same seed share their common levels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .metric_space import MetricMeasureSpace

__all__ = [
    "HyperbolicFilling",
    "build_filling",
    "nearest_ball_map",
    "filling_to_json",
    "filling_from_json",
]

_BLOCK = 512


@dataclass
class HyperbolicFilling:
    space: MetricMeasureSpace
    max_level: int
    seed: int
    vertex_level: np.ndarray        # (V,) int
    vertex_center: np.ndarray       # (V,) point id, -1 for the root
    vertex_radius: np.ndarray       # (V,) float, 2^(1-level)
    nets: list                      # nets[n] = point ids of Z_n (nets[0] empty)
    edges: np.ndarray               # (E, 2) int, columns (minus, plus)
    adjacency: list                 # per-vertex sorted neighbor id arrays
    level_start: np.ndarray         # (N+2,) vertex-id offsets per level
    ball_members: list = field(repr=False)   # per-vertex point-id arrays
    ball_measure: np.ndarray = field(repr=False)
    max_degree: int = 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_level)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertices_at(self, level: int) -> np.ndarray:
        return np.arange(self.level_start[level], self.level_start[level + 1])

    def level_count(self, level: int) -> int:
        return int(self.level_start[level + 1] - self.level_start[level])


def _greedy_net(space: MetricMeasureSpace, r: float, order: np.ndarray) -> np.ndarray:
    """Maximal r-separated net: greedy accept over the given visit order."""
    mindist = np.full(space.n_points, np.inf)
    accepted = []
    for i in order:
        if mindist[i] >= r:
            accepted.append(int(i))
            np.minimum(mindist, space.dist_row(int(i)), out=mindist)
    return np.asarray(accepted, dtype=int)


def _intersecting_pairs(space, centers_a, radius_a, centers_b, radius_b, same):
    """Index pairs (i, j) with d(a_i, b_j) < r_a + r_b; i < j when same."""
    thresh = radius_a + radius_b
    out_i, out_j = [], []
    for start in range(0, len(centers_a), _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, len(centers_a)))
        d = space.dist_block(centers_a[rows])[:, centers_b]
        hit = d < thresh
        if same:
            hit &= rows[:, None] < np.arange(len(centers_b))[None, :]
        ii, jj = np.nonzero(hit)
        out_i.append(rows[ii])
        out_j.append(jj)
    if not out_i:
        return np.empty(0, int), np.empty(0, int)
    return np.concatenate(out_i), np.concatenate(out_j)


def build_filling(space: MetricMeasureSpace, max_level: int, seed: int = 0) -> HyperbolicFilling:
    """Construct the depth-N filling of a space.

    Rejects depths where 2^-N drops below the space resolution: nets at
    such levels would contain every point and stop changing.
    """
    if space.n_points == 0:
        raise ValueError("empty space")
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    if 2.0 ** (-max_level) < space.resolution * (1 - 1e-12):
        raise ValueError(
            f"max_level {max_level} exceeds the resolution bound: "
            f"2^-N = {2.0**-max_level:.3g} < h = {space.resolution:.3g}")

    rng = np.random.default_rng(seed)
    nets = [np.empty(0, dtype=int)]
    for n in range(1, max_level + 1):
        nets.append(_greedy_net(space, 2.0 ** (-n), rng.permutation(space.n_points)))

    counts = [1] + [len(nets[n]) for n in range(1, max_level + 1)]
    level_start = np.concatenate([[0], np.cumsum(counts)])
    vertex_level = np.concatenate(
        [np.full(c, n, dtype=int) for n, c in enumerate(counts)])
    vertex_center = np.concatenate(
        [np.array([-1], dtype=int)] + [nets[n] for n in range(1, max_level + 1)])
    vertex_radius = 2.0 ** (1.0 - vertex_level)

    # edges: root to all of level 1 (the root ball is everything), then
    # same-level and adjacent-level ball intersections
    minus, plus = [], []
    if max_level >= 1:
        v1 = np.arange(level_start[1], level_start[2])
        minus.append(np.zeros(len(v1), dtype=int))
        plus.append(v1)
    for a in range(1, max_level + 1):
        for b in (a, a + 1):
            if b > max_level:
                continue
            ii, jj = _intersecting_pairs(
                space, nets[a], 2.0 ** (1 - a), nets[b], 2.0 ** (1 - b), same=(a == b))
            minus.append(level_start[a] + ii)
            plus.append(level_start[b] + jj)
    edges = (np.column_stack([np.concatenate(minus), np.concatenate(plus)])
             if minus else np.empty((0, 2), dtype=int))

    adjacency = _adjacency_lists(len(vertex_level), edges)
    members, measures = _ball_data(space, vertex_center, vertex_radius)
    filling = HyperbolicFilling(
        space=space, max_level=max_level, seed=seed,
        vertex_level=vertex_level, vertex_center=vertex_center,
        vertex_radius=vertex_radius, nets=nets, edges=edges,
        adjacency=adjacency, level_start=level_start,
        ball_members=members, ball_measure=measures,
        max_degree=max(len(a) for a in adjacency),
    )
    if not _connected(filling):
        raise RuntimeError("filling graph is disconnected; net construction is broken")
    return filling


def _adjacency_lists(n_vertices, edges):
    deg = np.zeros(n_vertices, dtype=int)
    if len(edges):
        np.add.at(deg, edges[:, 0], 1)
        np.add.at(deg, edges[:, 1], 1)
    ends = np.concatenate([edges[:, 0], edges[:, 1]]) if len(edges) else np.empty(0, int)
    nbrs = np.concatenate([edges[:, 1], edges[:, 0]]) if len(edges) else np.empty(0, int)
    order = np.argsort(ends, kind="stable")
    split = np.cumsum(deg)[:-1]
    return [np.sort(a) for a in np.split(nbrs[order], split)]


def _ball_data(space, vertex_center, vertex_radius):
    m = space.n_points
    members = [None] * len(vertex_center)
    measures = np.zeros(len(vertex_center))
    members[0] = np.arange(m)
    measures[0] = 1.0
    body = np.flatnonzero(vertex_center >= 0)
    for start in range(0, len(body), _BLOCK):
        vs = body[start:start + _BLOCK]
        d = space.dist_block(vertex_center[vs])
        inside = d < vertex_radius[vs, None]
        for row, v in enumerate(vs):
            members[v] = np.flatnonzero(inside[row])
            measures[v] = float(space.weight[members[v]].sum())
    return members, measures


def _connected(filling: HyperbolicFilling) -> bool:
    seen = np.zeros(filling.n_vertices, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in filling.adjacency[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(int(w))
    return bool(seen.all())


def nearest_ball_map(src: HyperbolicFilling, dst: HyperbolicFilling) -> np.ndarray:
    """Map each src vertex to a same-level dst vertex with intersecting ball.

    Nearest center wins, ties by smaller id.  Net maximality of dst makes
    the nearest center closer than 2^-n, so the balls always intersect.
    """
    if src.space is not dst.space and src.space.label != dst.space.label:
        raise ValueError("fillings are over different spaces")
    if dst.max_level < src.max_level:
        raise ValueError(
            f"destination filling has {dst.max_level} levels, source needs {src.max_level}")
    psi = np.zeros(src.n_vertices, dtype=int)
    space = src.space
    for n in range(1, src.max_level + 1):
        sv = src.vertices_at(n)
        dv = dst.vertices_at(n)
        best = np.empty(len(sv), dtype=int)
        bestd = np.empty(len(sv))
        for start in range(0, len(sv), _BLOCK):
            rows = slice(start, min(start + _BLOCK, len(sv)))
            d = space.dist_block(src.vertex_center[sv[rows]])[:, dst.vertex_center[dv]]
            best[rows] = np.argmin(d, axis=1)      # first minimum = smallest id
            bestd[rows] = np.min(d, axis=1)
        if np.any(bestd >= src.vertex_radius[sv] + 2.0 ** (1 - n)):
            raise RuntimeError("nearest ball does not intersect; dst net is not maximal")
        psi[sv] = dv[best]
    return psi


# ---------------------------------------------------------------------------
# serialization


def filling_to_json(filling: HyperbolicFilling) -> dict:
    """Loss-free JSON description (recomputable caches are not included)."""
    return {
        "space_label": filling.space.label,
        "seed": int(filling.seed),
        "max_level": int(filling.max_level),
        "levels": [[int(v) for v in filling.vertices_at(n)]
                   for n in range(filling.max_level + 1)],
        "vertices": [
            {"id": int(v), "level": int(filling.vertex_level[v]),
             "center": int(filling.vertex_center[v]),
             "radius": float(filling.vertex_radius[v])}
            for v in range(filling.n_vertices)
        ],
        "edges": [{"minus": int(a), "plus": int(b)} for a, b in filling.edges],
    }


def filling_from_json(data: dict, space: MetricMeasureSpace) -> HyperbolicFilling:
    """Rebuild a filling exported by filling_to_json over its space."""
    if data["space_label"] != space.label:
        raise ValueError(
            f"filling was built over {data['space_label']!r}, not {space.label!r}")
    n_vertices = len(data["vertices"])
    vertex_level = np.zeros(n_vertices, dtype=int)
    vertex_center = np.zeros(n_vertices, dtype=int)
    vertex_radius = np.zeros(n_vertices)
    for rec in data["vertices"]:
        v = rec["id"]
        vertex_level[v] = rec["level"]
        vertex_center[v] = rec["center"]
        vertex_radius[v] = rec["radius"]
    max_level = int(data["max_level"])
    counts = [len(lv) for lv in data["levels"]]
    level_start = np.concatenate([[0], np.cumsum(counts)])
    nets = [np.empty(0, dtype=int)]
    for n in range(1, max_level + 1):
        nets.append(vertex_center[np.asarray(data["levels"][n], dtype=int)])
    edges = (np.array([[e["minus"], e["plus"]] for e in data["edges"]], dtype=int)
             if data["edges"] else np.empty((0, 2), dtype=int))
    adjacency = _adjacency_lists(n_vertices, edges)
    members, measures = _ball_data(space, vertex_center, vertex_radius)
    return HyperbolicFilling(
        space=space, max_level=max_level, seed=int(data["seed"]),
        vertex_level=vertex_level, vertex_center=vertex_center,
        vertex_radius=vertex_radius, nets=nets, edges=edges,
        adjacency=adjacency, level_start=level_start,
        ball_members=members, ball_measure=measures,
        max_degree=max(len(a) for a in adjacency) if adjacency else 0,
    )


def save_filling(filling: HyperbolicFilling, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(filling_to_json(filling), fh)


def load_filling(path, space: MetricMeasureSpace) -> HyperbolicFilling:
    with open(path, encoding="utf-8") as fh:
        return filling_from_json(json.load(fh), space)
