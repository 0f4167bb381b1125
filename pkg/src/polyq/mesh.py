"""Conforming triangulations of simple polygons.

``triangulate`` ear-clips the polygon, bisects longest edges (Rivara's
longest-edge propagation path, which keeps the mesh conforming) until every
edge is at most ``h_target``, then runs a Delaunay edge-flip pass.
``refine`` splits every triangle into four at its edge midpoints, giving
nested meshes for convergence studies.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, MeshQualityError
from .geometry import RationalPolygon

MIN_ANGLE_DEG = 15.0


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    nodes: np.ndarray          # (n, 2)
    triangles: np.ndarray      # (m, 3) ccw
    boundary_nodes: np.ndarray  # sorted node indices on the polygon boundary
    h: float                   # max edge length
    level: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tri(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted node pairs) and the number of triangles using each."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def boundary_edges(self) -> np.ndarray:
        e, c = self.edges()
        return e[c == 1]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_nodes": self.boundary_nodes.tolist(),
            "h": self.h,
            "level": self.level,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TriangleMesh":
        return cls(np.array(d["nodes"], dtype=float),
                   np.array(d["triangles"], dtype=np.int64),
                   np.array(d["boundary_nodes"], dtype=np.int64),
                   float(d["h"]), int(d.get("level", 0)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TriangleMesh":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _max_edge(nodes, tris) -> float:
    p = nodes[tris]
    lens = [np.hypot(*(p[:, (i + 1) % 3] - p[:, i]).T) for i in range(3)]
    return float(np.max(lens))


class _Builder:
    """Mutable triangulation used during bisection and flipping."""

    def __init__(self, nodes, tris, boundary_node_flags, boundary_edges):
        self.nodes = [tuple(map(float, p)) for p in nodes]
        self.bnode = list(boundary_node_flags)
        self.tris = [tuple(int(i) for i in t) for t in tris]
        self.alive = [True] * len(self.tris)
        self.bedges = set(boundary_edges)
        self.edge_tris: dict[tuple, list] = {}
        self.mid: dict[tuple, int] = {}
        for ti, t in enumerate(self.tris):
            self._register(ti, t)
        self.scale = max(math.dist(a, b) for a in self.nodes for b in self.nodes)

    @staticmethod
    def _key(a, b):
        return (a, b) if a < b else (b, a)

    def _register(self, ti, t):
        for i in range(3):
            self.edge_tris.setdefault(self._key(t[i], t[(i + 1) % 3]), []).append(ti)

    def _unregister(self, ti, t):
        for i in range(3):
            k = self._key(t[i], t[(i + 1) % 3])
            lst = self.edge_tris[k]
            lst.remove(ti)
            if not lst:
                del self.edge_tris[k]

    def length(self, e):
        return math.dist(self.nodes[e[0]], self.nodes[e[1]])

    def longest(self, ti):
        t = self.tris[ti]
        best = None
        for i in range(3):
            e = self._key(t[i], t[(i + 1) % 3])
            # Equal lengths (to rounding) are ordered by node indices so the
            # longest-edge choice is a strict total order.
            k = (round(self.length(e) / self.scale, 11), e)
            if best is None or k > best[0]:
                best = (k, e)
        return best[1]

    def tri_max_edge(self, ti):
        t = self.tris[ti]
        return max(self.length((t[i], t[(i + 1) % 3])) for i in range(3))

    def bisect_edge(self, e):
        a, b = e
        pa, pb = self.nodes[a], self.nodes[b]
        m = len(self.nodes)
        self.nodes.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
        on_boundary = e in self.bedges
        self.bnode.append(on_boundary)
        if on_boundary:
            self.bedges.discard(e)
            self.bedges.add(self._key(a, m))
            self.bedges.add(self._key(m, b))
        new = []
        for ti in list(self.edge_tris.get(e, [])):
            t = self.tris[ti]
            # rotate so that the bisected edge is (t0, t1)
            for r in range(3):
                if self._key(t[r], t[(r + 1) % 3]) == e:
                    t0, t1, t2 = t[r], t[(r + 1) % 3], t[(r + 2) % 3]
                    break
            self._unregister(ti, t)
            self.alive[ti] = False
            for child in ((t0, m, t2), (m, t1, t2)):
                ci = len(self.tris)
                self.tris.append(child)
                self.alive.append(True)
                self._register(ci, child)
                new.append(ci)
        return new

    def refine_to(self, h):
        queue = list(range(len(self.tris)))
        while queue:
            ti = queue.pop()
            while self.alive[ti] and self.tri_max_edge(ti) > h:
                cur = ti
                for _ in range(10_000):
                    e = self.longest(cur)
                    nbrs = [n for n in self.edge_tris[e] if n != cur]
                    if not nbrs or self.longest(nbrs[0]) == e:
                        queue.extend(self.bisect_edge(e))
                        break
                    cur = nbrs[0]
                else:
                    raise DegenerateInput("longest-edge propagation did not terminate")

    def _angle(self, at, p, q):
        o = self.nodes[at]
        u = (self.nodes[p][0] - o[0], self.nodes[p][1] - o[1])
        v = (self.nodes[q][0] - o[0], self.nodes[q][1] - o[1])
        return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u[0] * v[0] + u[1] * v[1])

    def _area2(self, a, b, c):
        pa, pb, pc = self.nodes[a], self.nodes[b], self.nodes[c]
        return (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])

    def flip_pass(self, max_sweeps=50) -> int:
        flips = 0
        for _ in range(max_sweeps):
            changed = False
            for e in sorted(self.edge_tris):
                tl = self.edge_tris.get(e)
                if tl is None or len(tl) != 2 or e in self.bedges:
                    continue
                t1, t2 = tl
                a, b = e
                c = next(i for i in self.tris[t1] if i not in e)
                d = next(i for i in self.tris[t2] if i not in e)
                if self._angle(c, a, b) + self._angle(d, a, b) <= math.pi + 1e-10:
                    continue
                # orient new triangles ccw
                n1 = (c, d, b) if self._area2(c, d, b) > 0 else (c, b, d)
                n2 = (d, c, a) if self._area2(d, c, a) > 0 else (d, a, c)
                if self._area2(*n1) <= 0 or self._area2(*n2) <= 0:
                    continue
                for ti in (t1, t2):
                    self._unregister(ti, self.tris[ti])
                    self.alive[ti] = False
                for child in (n1, n2):
                    ci = len(self.tris)
                    self.tris.append(child)
                    self.alive.append(True)
                    self._register(ci, child)
                flips += 1
                changed = True
            if not changed:
                break
        return flips

    def result(self):
        tris = np.array([t for t, ok in zip(self.tris, self.alive) if ok], dtype=np.int64)
        nodes = np.array(self.nodes)
        bnodes = np.flatnonzero(np.array(self.bnode))
        return nodes, tris, bnodes


def triangulate(poly: RationalPolygon, h_target: float, min_angle: float = MIN_ANGLE_DEG) -> TriangleMesh:
    """Mesh ``poly`` with max edge length at most ``h_target``.

    Polygon vertices (including reflex ones) are always mesh nodes.  Raises
    :class:`MeshQualityError` if the final minimum angle is below
    ``min(min_angle, smallest polygon angle / 2)``.
    """
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    from .geometry import ear_clip

    v = poly.vertices
    tris = ear_clip(v)
    k = len(v)
    bedges = {(min(i, (i + 1) % k), max(i, (i + 1) % k)) for i in range(k)}
    b = _Builder(v, tris, [True] * k, bedges)
    for _ in range(20):
        b.refine_to(h_target)
        if b.flip_pass() == 0:
            break
    nodes, tris, bnodes = b.result()
    h = _max_edge(nodes, tris)
    mesh = TriangleMesh(nodes, _canonical_order(tris), bnodes, h, 0)
    q = mesh_quality(mesh)
    bound = min(min_angle, math.degrees(poly.interior_angles.min()) / 2)
    if q.min_angle < bound - 1e-9:
        raise MeshQualityError(f"min angle {q.min_angle:.2f} deg below {bound:.2f} deg")
    return mesh


def _canonical_order(tris: np.ndarray) -> np.ndarray:
    # rotate each triangle so its smallest index comes first, then sort rows
    r = np.argmin(tris, axis=1)
    rolled = np.array([np.roll(t, -i) for t, i in zip(tris, r)], dtype=np.int64)
    order = np.lexsort(rolled.T[::-1])
    return rolled[order]


def refine(mesh: TriangleMesh) -> TriangleMesh:
    """Red refinement: every triangle split into four by its edge midpoints."""
    t = mesh.triangles
    m = len(t)
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e_sorted = np.sort(e, axis=1)
    uniq, inverse, counts = np.unique(e_sorted, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    n0 = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    mid_idx = n0 + inverse
    m01, m12, m20 = mid_idx[:m], mid_idx[m:2 * m], mid_idx[2 * m:]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    new = np.vstack([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    bmid = n0 + np.flatnonzero(counts == 1)
    bnodes = np.union1d(mesh.boundary_nodes, bmid)
    return TriangleMesh(nodes, new, bnodes, 0.5 * mesh.h, mesh.level + 1)


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float  # degrees
    max_angle: float
    h: float
    n_nodes: int
    n_tri: int

    def to_dict(self):
        return dict(self.__dict__)


def triangle_angles(mesh: TriangleMesh) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    out = np.empty((mesh.n_tri, 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        out[:, i] = np.degrees(np.arctan2(np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]),
                                          (u * w).sum(axis=1)))
    return out


def mesh_quality(mesh: TriangleMesh) -> MeshQuality:
    ang = triangle_angles(mesh)
    return MeshQuality(float(ang.min()), float(ang.max()), float(_max_edge(mesh.nodes, mesh.triangles)),
                       mesh.n_nodes, mesh.n_tri)


def build_mesh(poly: RationalPolygon, h: float, refinements: int = 0) -> TriangleMesh:
    mesh = triangulate(poly, h)
    for _ in range(refinements):
        mesh = refine(mesh)
    return mesh
