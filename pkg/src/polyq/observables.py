"""Isotropic observables a(x, w) = a0(x) on the billiard phase space.

Each observable is bound to its polygon so that the configuration-space mean
``(1/area D) * integral_D a0`` can be cached.  For isotropic observables this
mean is also the phase-space (Liouville) average.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import RegionError
from .geometry import RationalPolygon, Region, largest_inner_disk

KIND_CONSTANT = 0
KIND_TRIG = 1
KIND_BUMP = 2
KIND_DISK = 3
KIND_PIECES = 4

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    f = np.exp(-1.0 / ti)
    g = np.exp(-1.0 / (1.0 - ti))
    out[inside] = f / (f + g)
    out[t >= 1] = 1.0
    return out


def bump_profile(r, radius, inner_radius=0.0):
    """1 on the plateau r <= inner_radius, smoothly down to 0 at r = radius."""
    t = (radius - np.asarray(r, dtype=float)) / (radius - inner_radius)
    return smooth_step(t)


def triangle_quadrature(tri: np.ndarray):
    """Collapsed Gauss-Legendre rule on one triangle (32x32 points)."""
    u = 0.5 * (_GL_NODES + 1.0)
    w = 0.5 * _GL_WEIGHTS
    s, t = np.meshgrid(u, u, indexing="ij")
    ws = np.outer(w, w) * (1.0 - s)
    # Duffy map from the square onto the reference triangle.
    l1 = s
    l2 = (1.0 - s) * t
    a, b, c = tri
    pts = a[None, None, :] + l1[..., None] * (b - a) + l2[..., None] * (c - a)
    jac = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return pts.reshape(-1, 2), (ws * jac).ravel()


CHORD_DEGREE = 96
CHORD_TOL = 1e-12


def chord_integral(radius: float, rho: float, inner_radius: float = 0.0) -> float:
    """Integral of the bump profile along a full chord at distance rho*radius."""
    b = rho * radius
    half = math.sqrt(max(radius * radius - b * b, 0.0))
    if half == 0.0:
        return 0.0
    v, _ = integrate.quad(lambda u: float(bump_profile(math.hypot(b, u), radius, inner_radius)),
                          0.0, half, epsabs=1e-15, epsrel=1e-13, limit=400)
    return 2.0 * v


_CHORD_CACHE: dict = {}


def _chord_coefficients(radius: float) -> np.ndarray:
    if radius in _CHORD_CACHE:
        return _CHORD_CACHE[radius]
    cheb = np.polynomial.chebyshev
    n = CHORD_DEGREE + 1
    u = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        y = np.array([chord_integral(radius, 0.5 * (x + 1.0)) for x in u])
        coef = cheb.chebfit(u, y, CHORD_DEGREE)
        probe = np.linspace(-1.0, 1.0, 97)
        exact = np.array([chord_integral(radius, 0.5 * (x + 1.0)) for x in probe])
    err = np.abs(cheb.chebval(probe, coef) - exact).max()
    if err > CHORD_TOL * max(radius, 1.0):
        raise RuntimeError(f"chord table error {err:.2e} exceeds tolerance")
    _CHORD_CACHE[radius] = coef
    return coef


@dataclass(frozen=True, eq=False)
class IsotropicObservable:
    kind: str  # "constant" | "trig" | "bump" | "region"
    params: dict
    domain: RationalPolygon
    region: Region | None = None
    label: str | None = None

    # -- constructors ----------------------------------------------------

    @classmethod
    def constant(cls, domain, value: float = 1.0, label=None):
        return cls("constant", {"value": float(value)}, domain, label=label or f"constant({value})")

    @classmethod
    def trig(cls, domain, terms, constant: float = 0.0, label=None):
        """a0(x) = constant + sum a*cos(k.x) + b*sin(k.x) over rows (kx, ky, a, b)."""
        t = np.array(terms, dtype=float).reshape(-1, 4)
        return cls("trig", {"terms": t.tolist(), "constant": float(constant)}, domain,
                   label=label)

    @classmethod
    def cos2pix(cls, domain, label="cos2pix"):
        return cls.trig(domain, [[2 * math.pi, 0.0, 1.0, 0.0]], label=label)

    @classmethod
    def bump(cls, domain, center, radius, amplitude=1.0, inner_radius=0.0,
             offset=0.0, label=None):
        c = np.asarray(center, dtype=float)
        radius = float(radius)
        if not 0 <= inner_radius < radius:
            raise RegionError("bump needs 0 <= inner_radius < radius")
        if not domain.contains(c)[0] or domain.distance_to_boundary(c)[0] <= radius:
            raise RegionError("bump support must lie strictly inside the polygon")
        return cls("bump", {"center": c.tolist(), "radius": radius,
                            "inner_radius": float(inner_radius),
                            "amplitude": float(amplitude), "offset": float(offset)},
                   domain, label=label or "bump")

    @classmethod
    def default_bump(cls, domain, fraction: float = 0.9, label="bump"):
        c, r = largest_inner_disk(domain)
        return cls.bump(domain, c, fraction * r, label=label)

    @classmethod
    def indicator(cls, region: Region, label=None):
        return cls("region", {}, region.domain, region=region,
                   label=label or region.label or f"1_{region.shape}")

    # -- evaluation ------------------------------------------------------

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.params
        if self.kind == "constant":
            return np.full(len(pts), p["value"])
        if self.kind == "trig":
            t = np.asarray(p["terms"], dtype=float).reshape(-1, 4)
            phase = pts @ t[:, :2].T
            return p["constant"] + np.cos(phase) @ t[:, 2] + np.sin(phase) @ t[:, 3]
        if self.kind == "bump":
            c = np.asarray(p["center"])
            r = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
            return p["offset"] + p["amplitude"] * bump_profile(r, p["radius"], p["inner_radius"])
        if self.kind == "region":
            return self.region.contains(pts).astype(float)
        raise ValueError(f"unknown observable kind {self.kind!r}")

    @cached_property
    def mean(self) -> float:
        """Configuration-space mean of a0 over D (equal to the Liouville average)."""
        p = self.params
        area = self.domain.area
        if self.kind == "constant":
            return p["value"]
        if self.kind == "region":
            return self.region.area / area
        if self.kind == "bump":
            R, r0 = p["radius"], p["inner_radius"]
            radial, _ = integrate.quad(
                lambda r: float(bump_profile(r, R, r0)) * r, r0, R,
                epsabs=1e-14, epsrel=1e-13, limit=200,
            )
            total = 2 * math.pi * (radial + 0.5 * r0 * r0)
            return p["offset"] + p["amplitude"] * total / area
        # trig: integrate over the ear triangles with a high-order rule
        v = self.domain.vertices
        s = 0.0
        for tri in self.domain.triangles:
            pts, w = triangle_quadrature(v[tri])
            s += float(w @ self(pts))
        return s / area

    @cached_property
    def chord_table(self) -> np.ndarray:
        """Chebyshev coefficients of the full-chord integral of the bump profile.

        A line at distance rho*R from the center crosses the support in a chord
        along which the profile integrates to F(rho); F is smooth on [0, 1]
        and is expanded in u = 2 rho - 1.  Empty when the profile has a
        plateau (F then has a square-root kink at the plateau edge).
        """
        if self.kind != "bump" or self.params["inner_radius"] > 0:
            return np.zeros(0)
        return _chord_coefficients(self.params["radius"])

    @property
    def is_smooth(self) -> bool:
        return self.kind != "region"

    def kernel_spec(self):
        """Encode the observable for the flow kernel: (code, float params, piece offsets)."""
        p = self.params
        empty = np.zeros(1, dtype=np.int64)
        if self.kind == "constant":
            return KIND_CONSTANT, np.array([p["value"]]), empty
        if self.kind == "trig":
            t = np.asarray(p["terms"], dtype=float).reshape(-1, 4)
            return KIND_TRIG, np.concatenate([[p["constant"]], t.ravel()]), empty
        if self.kind == "bump":
            c = p["center"]
            table = self.chord_table
            head = [c[0], c[1], p["radius"], p["inner_radius"], p["amplitude"], p["offset"],
                    float(len(table))]
            return KIND_BUMP, np.concatenate([head, table]), empty
        if self.region.shape == "disk":
            c = self.region.params["center"]
            return KIND_DISK, np.array([c[0], c[1], self.region.params["radius"]]), empty
        pieces = self.region.convex_pieces_planes()
        offsets = np.cumsum([0] + [len(pc) for pc in pieces]).astype(np.int64)
        return KIND_PIECES, np.concatenate([pc.ravel() for pc in pieces]), offsets

    def shifted(self, c: float) -> "IsotropicObservable":
        """a0 + c (only for smooth kinds)."""
        p = dict(self.params)
        if self.kind == "constant":
            p["value"] += c
        elif self.kind == "trig":
            p["constant"] += c
        elif self.kind == "bump":
            p["offset"] += c
        else:
            raise ValueError("cannot shift an indicator observable")
        return IsotropicObservable(self.kind, p, self.domain, None, self.label)

    def describe(self) -> dict:
        d = {"kind": self.kind, "label": self.label, "params": self.params}
        if self.region is not None:
            d["region"] = self.region.describe()
        return d


def observable_from_dict(domain: RationalPolygon, d: dict) -> IsotropicObservable:
    """Build an observable from its JSON description (see README for the schema)."""
    from .geometry import make_region, named_region

    kind = d.get("kind")
    label = d.get("label")
    if kind == "constant":
        return IsotropicObservable.constant(domain, d.get("value", 1.0), label=label)
    if kind == "trig":
        return IsotropicObservable.trig(domain, d["terms"], d.get("constant", 0.0),
                                        label=label or "trig")
    if kind == "cos2pix":
        return IsotropicObservable.cos2pix(domain)
    if kind == "bump":
        if "center" not in d:
            return IsotropicObservable.default_bump(domain, d.get("fraction", 0.9),
                                                    label=label or "bump")
        return IsotropicObservable.bump(domain, d["center"], d["radius"],
                                        d.get("amplitude", 1.0), d.get("inner_radius", 0.0),
                                        d.get("offset", 0.0), label=label)
    if kind == "region":
        r = d["region"]
        if isinstance(r, str):
            region = named_region(domain, r)
        else:
            region = make_region(domain, r["shape"], label=r.get("label"),
                                 **{k: v for k, v in r.items() if k not in ("shape", "label")})
        return IsotropicObservable.indicator(region, label=label)
    raise ValueError(f"unknown observable kind {kind!r}")


def named_observable(domain: RationalPolygon, name: str) -> IsotropicObservable:
    """Shorthand names accepted on the command line."""
    from .geometry import named_region

    if name == "cos2pix":
        return IsotropicObservable.cos2pix(domain)
    if name == "bump":
        return IsotropicObservable.default_bump(domain)
    if name.startswith("constant"):
        _, _, v = name.partition(":")
        return IsotropicObservable.constant(domain, float(v) if v else 1.0)
    if name.startswith("region:"):
        return IsotropicObservable.indicator(named_region(domain, name.split(":", 1)[1]))
    raise ValueError(f"unknown observable name {name!r}")
