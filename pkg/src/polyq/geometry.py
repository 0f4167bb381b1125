"""Rational polygons, their reflection groups, and measurable sub-regions.

A :class:`RationalPolygon` is a simple, counterclockwise polygon whose interior
angles are certified by the caller as rational multiples of pi.  The
certificates are checked against the vertex geometry instead of being guessed
from floating point coordinates.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AngleCertificateMismatch,
    DegenerateInput,
    GroupNotFinite,
    NotClosed,
    PolygonError,
    RegionError,
    SelfIntersecting,
)

ANGLE_TOL = 1e-9
GROUP_TOL = 1e-9
GROUP_CAP = 10_000
BOUNDARY_EPS = 1e-12


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, str):
        num, sep, den = c.strip().partition("/")
        try:
            c = (int(num), int(den)) if sep else (int(num), 1)
        except ValueError:
            raise PolygonError(f"cannot interpret angle certificate {c!r}") from None
    if isinstance(c, (tuple, list)) and len(c) == 2:
        p, q = int(c[0]), int(c[1])
        if q <= 0:
            raise PolygonError(f"certificate {c!r}: denominator must be positive")
        if math.gcd(p, q) != 1:
            raise PolygonError(f"certificate {p}/{q} is not in lowest terms")
        return Fraction(p, q)
    if isinstance(c, int):
        return Fraction(c)
    raise PolygonError(f"cannot interpret angle certificate {c!r}")


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _segments_intersect(p1, p2, q1, q2, eps=1e-14) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _cross(p2[0] - p1[0], p2[1] - p1[1], q1[0] - p1[0], q1[1] - p1[1])
    d2 = _cross(p2[0] - p1[0], p2[1] - p1[1], q2[0] - p1[0], q2[1] - p1[1])
    d3 = _cross(q2[0] - q1[0], q2[1] - q1[1], p1[0] - q1[0], p1[1] - q1[1])
    d4 = _cross(q2[0] - q1[0], q2[1] - q1[1], p2[0] - q1[0], p2[1] - q1[1])
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True

    def on_seg(a, b, c, d):
        return (
            abs(d) <= eps
            and min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
        )

    return (
        on_seg(p1, p2, q1, d1)
        or on_seg(p1, p2, q2, d2)
        or on_seg(q1, q2, p1, d3)
        or on_seg(q1, q2, p2, d4)
    )


def _interior_angles(v: np.ndarray) -> np.ndarray:
    e_in = v - np.roll(v, 1, axis=0)
    e_out = np.roll(v, -1, axis=0) - v
    turn = np.arctan2(
        e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0],
        (e_in * e_out).sum(axis=1),
    )
    return math.pi - turn


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class RationalPolygon:
    """Validated simple rational polygon; build with :func:`build_polygon`."""

    vertices: np.ndarray
    angle_certificates: tuple
    name: str | None = None

    def __post_init__(self):
        self.vertices.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(self.edges[:, 0], self.edges[:, 1])

    @cached_property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward unit normal of side i (from vertex i to vertex i+1)."""
        e = self.edges / self.edge_lengths[:, None]
        out = np.column_stack([e[:, 1], -e[:, 0]])
        out.setflags(write=False)
        return out

    @cached_property
    def interior_angles(self) -> np.ndarray:
        return _interior_angles(self.vertices)

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @cached_property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(axis=2)).max())

    @cached_property
    def triangles(self) -> np.ndarray:
        """Ear-clipping triangulation, as vertex index triples."""
        return ear_clip(self.vertices)

    def contains(self, points) -> np.ndarray:
        """Even-odd test for the closed polygon; boundary within 1e-12 is ambiguous."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        v = self.vertices
        for i in range(len(v)):
            x1, y1 = v[i]
            x2, y2 = v[(i + 1) % len(v)]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < xint)
        return inside | (self.distance_to_boundary(pts) <= BOUNDARY_EPS)

    def distance_to_boundary(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.vertices[None, :, :]
        e = self.edges[None, :, :]
        rel = pts[:, None, :] - a
        u = np.clip((rel * e).sum(axis=2) / (self.edge_lengths**2)[None, :], 0.0, 1.0)
        d = rel - u[:, :, None] * e
        return np.sqrt((d**2).sum(axis=2)).min(axis=1)

    def to_dict(self) -> dict:
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "angles": [[c.numerator, c.denominator] for c in self.angle_certificates],
            "name": self.name,
        }


def build_polygon(vertices, certificates, name: str | None = None) -> RationalPolygon:
    """Validate vertices and angle certificates and return a :class:`RationalPolygon`.

    Raises
    ------
    NotClosed
        Fewer than three vertices or repeated vertices.
    SelfIntersecting
        Two non-adjacent sides touch.
    AngleCertificateMismatch
        A certified angle differs from the measured one by more than 1e-9 rad.
    """
    v = np.array(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise PolygonError("vertices must be a list of (x, y) pairs")
    if len(v) < 3:
        raise NotClosed(f"a polygon needs at least 3 vertices, got {len(v)}")
    if not np.all(np.isfinite(v)):
        raise PolygonError("non-finite vertex coordinate")
    certs = tuple(_as_fraction(c) for c in certificates)
    if len(certs) != len(v):
        raise PolygonError(
            f"{len(certs)} certificates supplied for {len(v)} vertices"
        )
    for i, c in enumerate(certs):
        if not 0 < c < 2:
            raise PolygonError(f"certificate {c} at vertex {i} outside (0, 2)")

    k = len(v)
    diffs = v[:, None, :] - v[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2)) + np.eye(k)
    if dist.min() <= BOUNDARY_EPS:
        raise NotClosed("repeated vertex")
    if _signed_area(v) <= 0:
        raise PolygonError("vertices must be listed counterclockwise")

    for i in range(k):
        for j in range(i + 1, k):
            if j == i + 1 or (i == 0 and j == k - 1):
                continue
            if _segments_intersect(v[i], v[(i + 1) % k], v[j], v[(j + 1) % k]):
                raise SelfIntersecting(f"sides {i} and {j} intersect")

    angles = _interior_angles(v)
    for i, a in enumerate(angles):
        if abs(a - math.pi) <= ANGLE_TOL:
            raise PolygonError(f"vertices around index {i} are collinear")
    for i, (c, a) in enumerate(zip(certs, angles)):
        target = float(c) * math.pi
        if abs(target - a) > ANGLE_TOL:
            raise AngleCertificateMismatch(i, target, float(a))
    if abs(angles.sum() - (k - 2) * math.pi) > ANGLE_TOL * k:
        raise SelfIntersecting("interior angles do not sum to (k-2)*pi")
    return RationalPolygon(v, certs, name)


def polygon_area(poly: RationalPolygon) -> float:
    return poly.area


def ear_clip(vertices) -> np.ndarray:
    """Triangulate a simple ccw polygon by ear clipping.

    Among the available ears the one with the largest minimum angle is cut
    first, which keeps the initial triangles reasonably shaped.
    """
    v = np.asarray(vertices, dtype=float)
    idx = list(range(len(v)))
    tris = []

    def min_angle(a, b, c):
        pa, pb, pc = v[a], v[b], v[c]
        out = math.pi
        for p, q, r in ((pa, pb, pc), (pb, pc, pa), (pc, pa, pb)):
            u, w = q - p, r - p
            out = min(out, math.atan2(abs(_cross(u[0], u[1], w[0], w[1])), float(u @ w)))
        return out

    def is_ear(pos):
        n = len(idx)
        a, b, c = idx[(pos - 1) % n], idx[pos], idx[(pos + 1) % n]
        pa, pb, pc = v[a], v[b], v[c]
        area2 = _cross(pb[0] - pa[0], pb[1] - pa[1], pc[0] - pa[0], pc[1] - pa[1])
        scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1])) ** 2
        if area2 <= 1e-14 * scale:
            return False
        for j in idx:
            if j in (a, b, c):
                continue
            p = v[j]
            d1 = _cross(pb[0] - pa[0], pb[1] - pa[1], p[0] - pa[0], p[1] - pa[1])
            d2 = _cross(pc[0] - pb[0], pc[1] - pb[1], p[0] - pb[0], p[1] - pb[1])
            d3 = _cross(pa[0] - pc[0], pa[1] - pc[1], p[0] - pc[0], p[1] - pc[1])
            if d1 >= -1e-14 and d2 >= -1e-14 and d3 >= -1e-14:
                return False
        return True

    while len(idx) > 3:
        best, best_q = None, -1.0
        n = len(idx)
        for pos in range(n):
            if is_ear(pos):
                q = min_angle(idx[(pos - 1) % n], idx[pos], idx[(pos + 1) % n])
                if q > best_q:
                    best, best_q = pos, q
        if best is None:
            raise DegenerateInput("no valid ear found (collinear or invalid polygon)")
        n = len(idx)
        tris.append((idx[(best - 1) % n], idx[best], idx[(best + 1) % n]))
        del idx[best]
    a, b, c = idx
    pa, pb, pc = v[a], v[b], v[c]
    if _cross(pb[0] - pa[0], pb[1] - pa[1], pc[0] - pa[0], pc[1] - pa[1]) <= 0:
        raise DegenerateInput("final ear is degenerate")
    tris.append((a, b, c))
    return np.array(tris, dtype=np.int64)


# -- reflection group -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReflectionGroup:
    """Finite group generated by the linear parts of the side reflections."""

    elements: np.ndarray  # (order, 2, 2)
    generator_normals: np.ndarray

    @property
    def order(self) -> int:
        return len(self.elements)

    def index_of(self, m, tol: float = GROUP_TOL) -> int:
        d = np.sqrt(((self.elements - np.asarray(m)[None]) ** 2).sum(axis=(1, 2)))
        i = int(np.argmin(d))
        if d[i] > tol:
            raise KeyError("matrix is not an element of the group")
        return i

    @cached_property
    def rotations(self) -> np.ndarray:
        return self.elements[np.linalg.det(self.elements) > 0]


def reflection_matrix(normal) -> np.ndarray:
    n = np.asarray(normal, dtype=float)
    n = n / np.hypot(*n)
    return np.eye(2) - 2.0 * np.outer(n, n)


def reflection_group(
    poly: RationalPolygon, cap: int = GROUP_CAP, tol: float = GROUP_TOL
) -> ReflectionGroup:
    """Close the side reflections under products by fixed-point iteration.

    Raises :class:`GroupNotFinite` once more than ``cap`` distinct elements
    have been generated.
    """
    gens = [reflection_matrix(n) for n in poly.normals]
    elems = np.empty((min(cap, 64) + 1, 2, 2))
    elems[0] = np.eye(2)
    count = 1
    frontier = [np.eye(2)]
    while frontier:
        new = []
        for g in frontier:
            for r in gens:
                m = r @ g
                d = ((elems[:count] - m[None]) ** 2).sum(axis=(1, 2))
                if d.min() <= tol * tol:
                    continue
                if count >= cap:
                    raise GroupNotFinite(
                        f"reflection closure exceeded {cap} elements; "
                        "angles are probably not rational"
                    )
                if count == len(elems):
                    elems = np.concatenate([elems, np.empty_like(elems)])
                elems[count] = m
                count += 1
                new.append(m)
        frontier = new
    out = elems[:count].copy()
    out.setflags(write=False)
    return ReflectionGroup(out, poly.normals)


# -- regions ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Region:
    """A measurable subset A of the closed polygon D with piecewise-linear or circular boundary.

    ``shape`` is ``"polygon"`` (a simple sub-polygon given by ccw vertices),
    ``"disk"`` (``center``, ``radius``) or ``"halfplanes"`` (rows ``(nx, ny, c)``
    meaning ``nx*x + ny*y <= c``, intersected with D).
    """

    shape: str
    params: dict
    domain: RationalPolygon
    label: str | None = None

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "disk":
            c = np.asarray(self.params["center"], dtype=float)
            r = float(self.params["radius"])
            return np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) <= r
        if self.shape == "halfplanes":
            planes = self.planes
            ok = (pts @ planes[:, :2].T) <= planes[:, 2][None, :]
            return ok.all(axis=1) & self.domain.contains(pts)
        if self.shape == "polygon":
            return self._subpolygon.contains(pts)
        raise RegionError(f"unknown region shape {self.shape!r}")

    @cached_property
    def planes(self) -> np.ndarray:
        p = np.array(self.params["planes"], dtype=float).reshape(-1, 3)
        norms = np.hypot(p[:, 0], p[:, 1])
        return p / norms[:, None]

    @cached_property
    def _subpolygon(self) -> RationalPolygon:
        # Angles of an arbitrary sub-polygon need not be rational; skip certificates.
        v = np.array(self.params["vertices"], dtype=float)
        return RationalPolygon(v, tuple(), "subregion")

    @cached_property
    def area(self) -> float:
        if self.shape == "disk":
            return math.pi * float(self.params["radius"]) ** 2
        if self.shape == "polygon":
            return _signed_area(np.array(self.params["vertices"], dtype=float))
        return sum(_signed_area(p) for p in self.convex_clip_pieces() if len(p) >= 3)

    def convex_clip_pieces(self) -> list[np.ndarray]:
        """For half-plane regions: D's ear triangles clipped by every half-plane."""
        out = []
        v = self.domain.vertices
        for tri in self.domain.triangles:
            poly = v[tri]
            for nx, ny, c in self.planes:
                poly = _clip_halfplane(poly, nx, ny, c)
                if len(poly) == 0:
                    break
            if len(poly) >= 3:
                out.append(poly)
        return out

    def convex_pieces_planes(self) -> list[np.ndarray]:
        """Region as a disjoint union of convex pieces, each a set of half-planes.

        Used by the flow kernel to integrate the indicator exactly along a
        segment lying inside D.
        """
        if self.shape == "halfplanes":
            return [self.planes.copy()]
        if self.shape == "polygon":
            v = np.array(self.params["vertices"], dtype=float)
            pieces = []
            for tri in ear_clip(v):
                pts = v[tri]
                e = np.roll(pts, -1, axis=0) - pts
                n = np.column_stack([e[:, 1], -e[:, 0]])
                n /= np.hypot(n[:, 0], n[:, 1])[:, None]
                c = (n * pts).sum(axis=1)
                pieces.append(np.column_stack([n, c]))
            return pieces
        raise RegionError("disk regions are not polygonal")

    def complement(self) -> "Region":
        """D minus A, available for a single half-plane region."""
        if self.shape != "halfplanes" or len(self.planes) != 1:
            raise RegionError("complement is only available for a single half-plane")
        nx, ny, c = self.planes[0]
        return Region("halfplanes", {"planes": [[-nx, -ny, -c]]}, self.domain,
                      f"complement({self.label})")

    def describe(self) -> dict:
        p = {k: (np.asarray(v).tolist() if isinstance(v, (np.ndarray, list, tuple)) else v)
             for k, v in self.params.items()}
        return {"shape": self.shape, "params": p, "label": self.label}


def _clip_halfplane(poly: np.ndarray, nx, ny, c) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon by ``nx*x + ny*y <= c``."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = nx * p[0] + ny * p[1] - c
        fq = nx * q[0] + ny * q[1] - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return np.array(out).reshape(-1, 2)


def make_region(domain: RationalPolygon, shape: str, label: str | None = None, **params) -> Region:
    """Construct a region and verify it lies inside the closed domain."""
    if shape == "disk":
        c = np.asarray(params["center"], dtype=float)
        r = float(params["radius"])
        if r <= 0:
            raise RegionError("disk radius must be positive")
        if not domain.contains(c)[0] or domain.distance_to_boundary(c)[0] < r - 1e-12:
            raise RegionError("disk is not contained in the polygon")
        params = {"center": c.tolist(), "radius": r}
    elif shape == "polygon":
        v = np.array(params["vertices"], dtype=float)
        if len(v) < 3 or _signed_area(v) <= 0:
            raise RegionError("sub-polygon must have >= 3 ccw vertices")
        mids = 0.5 * (v + np.roll(v, -1, axis=0))
        probe = np.vstack([v, mids, v.mean(axis=0)])
        if not domain.contains(probe[:-1]).all():
            raise RegionError("sub-polygon is not contained in the polygon")
        params = {"vertices": v.tolist()}
    elif shape == "halfplanes":
        p = np.array(params["planes"], dtype=float).reshape(-1, 3)
        if np.any(np.hypot(p[:, 0], p[:, 1]) == 0):
            raise RegionError("half-plane normal must be nonzero")
        params = {"planes": p.tolist()}
    else:
        raise RegionError(f"unknown region shape {shape!r}")
    return Region(shape, params, domain, label)


def region_contains(region: Region, point) -> bool:
    return bool(region.contains(np.asarray(point, dtype=float)[None, :])[0])


def left_half(domain: RationalPolygon) -> Region:
    x0, _, x1, _ = domain.bbox
    return make_region(domain, "halfplanes", label="left-half",
                       planes=[[1.0, 0.0, 0.5 * (x0 + x1)]])


def largest_inner_disk(domain: RationalPolygon, grid: int = 64) -> tuple[np.ndarray, float]:
    """Approximate the center and radius of the largest disk inside D (grid search)."""
    x0, y0, x1, y1 = domain.bbox
    xs = np.linspace(x0, x1, grid + 2)[1:-1]
    ys = np.linspace(y0, y1, grid + 2)[1:-1]
    pts = np.array([(x, y) for y in ys for x in xs])
    pts = pts[domain.contains(pts)]
    d = domain.distance_to_boundary(pts)
    i = int(np.argmax(d))
    return pts[i], float(d[i])


def named_region(domain: RationalPolygon, name: str) -> Region:
    if name == "left-half":
        return left_half(domain)
    if name == "right-half":
        return left_half(domain).complement()
    if name == "disk":
        c, r = largest_inner_disk(domain)
        return make_region(domain, "disk", label="disk", center=c, radius=0.6 * r)
    raise RegionError(f"unknown named region {name!r}")


# -- built-in polygons -------------------------------------------------------

def unit_square() -> RationalPolygon:
    return rectangle(1.0, 1.0, name="square")


def rectangle(a: float, b: float, name: str | None = None) -> RationalPolygon:
    return build_polygon(
        [(0, 0), (a, 0), (a, b), (0, b)], ["1/2"] * 4, name or f"rectangle({a},{b})"
    )


def right_isoceles(leg: float = 1.0) -> RationalPolygon:
    return build_polygon(
        [(0, 0), (leg, 0), (0, leg)], ["1/2", "1/4", "1/4"], "right-isoceles"
    )


def pi8_triangle(scale: float = 1.0) -> RationalPolygon:
    """Right triangle with angles (pi/2, 3pi/8, pi/8)."""
    return build_polygon(
        [(0, 0), (scale, 0), (0, scale * math.tan(3 * math.pi / 8))],
        ["1/2", "3/8", "1/8"],
        "pi8-triangle",
    )


def equilateral(side: float = 1.0) -> RationalPolygon:
    return build_polygon(
        [(0, 0), (side, 0), (0.5 * side, side * math.sqrt(3) / 2)],
        ["1/3"] * 3,
        "equilateral",
    )


def l_shape(scale: float = 1.0) -> RationalPolygon:
    pts = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    return build_polygon(
        [(scale * x, scale * y) for x, y in pts],
        ["1/2", "1/2", "1/2", "3/2", "1/2", "1/2"],
        "L-shape",
    )


BUILTINS = {
    "square": lambda *a: unit_square() if not a else rectangle(a[0], a[0], name="square"),
    "rectangle": lambda a=2.0, b=1.0: rectangle(a, b),
    "right-isoceles": right_isoceles,
    "pi8-triangle": pi8_triangle,
    "equilateral": equilateral,
    "L-shape": l_shape,
}


def builtin(name: str) -> RationalPolygon:
    """Look up a built-in polygon; ``"rectangle:2,1"`` passes parameters."""
    base, _, args = name.partition(":")
    if base not in BUILTINS:
        raise PolygonError(
            f"unknown builtin polygon {base!r}; choose from {sorted(BUILTINS)}"
        )
    params = [float(a) for a in args.split(",")] if args else []
    return BUILTINS[base](*params)


def polygon_from_dict(d: dict) -> RationalPolygon:
    try:
        return build_polygon(d["vertices"], [tuple(a) if isinstance(a, list) else a
                                             for a in d["angles"]], d.get("name"))
    except KeyError as exc:
        raise PolygonError(f"polygon description missing key {exc}") from None


def load_polygon(spec: str) -> RationalPolygon:
    """Resolve a ``--polygon`` argument: a JSON file path or a builtin name."""
    if os.path.isfile(spec):
        with open(spec) as fh:
            return polygon_from_dict(json.load(fh))
    return builtin(spec)


def save_polygon(poly: RationalPolygon, path) -> None:
    with open(path, "w") as fh:
        json.dump(poly.to_dict(), fh, indent=2)


def exterior_turning_sum(poly: RationalPolygon) -> float:
    return float((math.pi - poly.interior_angles).sum())


def direction_set_permutation(group: ReflectionGroup, theta: Sequence[float]) -> bool:
    """True if every group element permutes the orbit {g theta} (used in tests)."""
    th = np.asarray(theta, dtype=float)
    orbit = group.elements @ th
    for g in group.elements:
        img = orbit @ g.T
        d = np.sqrt(((img[:, None, :] - orbit[None, :, :]) ** 2).sum(axis=2))
        if np.any(d.min(axis=1) > GROUP_TOL):
            return False
    return True


def parse_certificates(items: Iterable) -> list[Fraction]:
    return [_as_fraction(c) for c in items]
