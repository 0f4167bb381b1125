"""Billiard flow by specular reflection, directional orbits and time averages.

Positions move at unit speed, so elapsed time equals arc length.  Orbits that
strike a vertex are reported (never continued by an invented reflection law);
Monte Carlo callers discard and redraw them.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    MaxBouncesExceeded,
    StuckAtBoundary,
    TooManyVertexEvents,
    VertexEncounter,
)
from .geometry import GROUP_TOL, RationalPolygon, ReflectionGroup
from .observables import IsotropicObservable

VERTEX_RADIUS = 1e-9
MAX_BOUNCES = 10**7
BLOCK_SIZE = 512
_TRACE_CHUNK = 1 << 16


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, w) of the unit cotangent bundle D x S^1.

    ``side`` is the index of the polygon side the point sits on (-1 when it is
    interior); it keeps a point that has just reflected from re-hitting the
    same side.
    """

    position: tuple
    direction: tuple
    side: int = -1

    def __post_init__(self):
        dx, dy = self.direction
        if abs(math.hypot(dx, dy) - 1.0) > 1e-12:
            raise ValueError(f"direction {self.direction} is not a unit vector")

    @classmethod
    def from_angle(cls, position, phi: float) -> "PhasePoint":
        """Direction w = exp(2 pi i phi), phi in R/Z."""
        a = 2.0 * math.pi * phi
        return cls(tuple(map(float, position)), (math.cos(a), math.sin(a)))

    @classmethod
    def make(cls, position, direction) -> "PhasePoint":
        d = np.asarray(direction, dtype=float)
        d = d / np.hypot(*d)
        return cls(tuple(map(float, position)), (float(d[0]), float(d[1])))

    def reversed(self) -> "PhasePoint":
        return PhasePoint(self.position, (-self.direction[0], -self.direction[1]), self.side)


@dataclass
class Trajectory:
    """Segments of a billiard orbit.

    ``segments`` rows are ``(x0, y0, x1, y1, dx, dy, side_hit, t_start)``;
    ``side_hit`` is -1 for the final segment when the orbit stopped in the
    interior.
    """

    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 8)))
    total_time: float = 0.0

    @property
    def directions(self) -> np.ndarray:
        return self.segments[:, 4:6]

    @property
    def sides(self) -> np.ndarray:
        return self.segments[:, 6].astype(int)

    def __len__(self):
        return len(self.segments)

    def to_csv(self, path) -> None:
        """Dump rows (t, x, y, dx, dy), one per segment start plus the end point."""
        rows = [(s[7], s[0], s[1], s[4], s[5]) for s in self.segments]
        if len(self.segments):
            s = self.segments[-1]
            rows.append((self.total_time, s[2], s[3], s[4], s[5]))
        with open(path, "w") as fh:
            fh.write("t,x,y,dx,dy\n")
            for r in rows:
                fh.write(",".join(repr(float(v)) for v in r) + "\n")


@dataclass(frozen=True)
class Hit:
    point: tuple
    side: int
    time: float


@dataclass(frozen=True)
class VertexEvent:
    vertex: int
    time: float
    point: tuple


def _arrays(poly: RationalPolygon):
    return (np.ascontiguousarray(poly.vertices, dtype=float),
            np.ascontiguousarray(poly.normals, dtype=float))


def reflect(direction, side_normal) -> np.ndarray:
    """Specular reflection d - 2 (d.n) n."""
    d = np.asarray(direction, dtype=float)
    n = np.asarray(side_normal, dtype=float)
    r = d - 2.0 * float(d @ n) * n
    return r / np.hypot(*r)


def next_hit(poly: RationalPolygon, p: PhasePoint, vertex_radius: float = VERTEX_RADIUS):
    """First boundary crossing along the ray from ``p``: a :class:`Hit` or :class:`VertexEvent`."""
    verts, _ = _arrays(poly)
    t, side, hx, hy, st, vidx = kernels.next_hit(
        verts, p.position[0], p.position[1], p.direction[0], p.direction[1],
        p.side, vertex_radius)
    if st == kernels.ST_STUCK:
        raise StuckAtBoundary(f"no boundary crossing found from {p}")
    if st == kernels.ST_VERTEX:
        return VertexEvent(int(vidx), float(t), (float(hx), float(hy)))
    return Hit((float(hx), float(hy)), int(side), float(t))


def evolve(poly: RationalPolygon, p: PhasePoint, t: float,
           vertex_radius: float = VERTEX_RADIUS, max_bounces: int = MAX_BOUNCES,
           record: bool = True):
    """Run the billiard flow for time ``t``.

    Returns ``(PhasePoint, Trajectory)``.  Raises :class:`VertexEncounter`
    (carrying the partial trajectory) when a vertex is struck.
    """
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if t == 0:
        return p, Trajectory()
    verts, normals = _arrays(poly)
    x, y = p.position
    dx, dy = p.direction
    side = p.side
    if not record:
        zero = np.zeros(1)
        off = np.zeros(1, dtype=np.int64)
        x, y, dx, dy, side, _, bounces, elapsed, st, vidx = kernels.flow(
            verts, normals, x, y, dx, dy, t, side, vertex_radius, max_bounces, 0, zero, off)
        if st == kernels.ST_VERTEX:
            raise VertexEncounter(int(vidx), float(elapsed))
        if st == kernels.ST_MAXBOUNCE:
            raise MaxBouncesExceeded(f"more than {max_bounces} bounces")
        if st == kernels.ST_STUCK:
            raise StuckAtBoundary(f"flow stuck at ({x}, {y})")
        return PhasePoint((x, y), (dx, dy), int(side)), Trajectory(total_time=float(t))

    chunks = []
    elapsed = 0.0
    n_total = 0
    while True:
        remaining = t - elapsed
        cap = min(_TRACE_CHUNK, max_bounces + 1 - n_total)
        if cap <= 0:
            raise MaxBouncesExceeded(f"more than {max_bounces} bounces")
        buf = np.empty((cap, 8))
        n, x, y, dx, dy, side, dt, st, vidx = kernels.trace(
            verts, normals, x, y, dx, dy, remaining, side, vertex_radius, buf)
        buf = buf[:n]
        buf[:, 7] += elapsed
        chunks.append(buf)
        n_total += n
        elapsed += dt
        if st == kernels.ST_OK:
            elapsed = t
            break
        if st == kernels.ST_CAPACITY:
            continue
        traj = Trajectory(np.concatenate(chunks), elapsed)
        if st == kernels.ST_VERTEX:
            raise VertexEncounter(int(vidx), elapsed, traj)
        raise StuckAtBoundary(f"flow stuck at ({x}, {y})")
    traj = Trajectory(np.concatenate(chunks), float(t))
    return PhasePoint((float(x), float(y)), (float(dx), float(dy)), int(side)), traj


def evolve_bounces(poly: RationalPolygon, p: PhasePoint, n_bounces: int,
                   vertex_radius: float = VERTEX_RADIUS) -> Trajectory:
    """Trajectory of exactly ``n_bounces`` straight segments (no time limit)."""
    verts, normals = _arrays(poly)
    buf = np.empty((n_bounces, 8))
    n, x, y, dx, dy, side, elapsed, st, vidx = kernels.trace(
        verts, normals, p.position[0], p.position[1], p.direction[0], p.direction[1],
        math.inf, p.side, vertex_radius, buf)
    traj = Trajectory(buf[:n], float(elapsed))
    if st == kernels.ST_VERTEX:
        raise VertexEncounter(int(vidx), float(elapsed), traj)
    if st == kernels.ST_STUCK:
        raise StuckAtBoundary(f"flow stuck at ({x}, {y})")
    return traj


def direction_orbit(group: ReflectionGroup, theta, tol: float = GROUP_TOL) -> np.ndarray:
    """The finite direction set {g theta : g in group}, deduplicated."""
    th = np.asarray(theta, dtype=float)
    imgs = group.elements @ th
    out = []
    for v in imgs:
        if not out or np.min(np.hypot(*(np.array(out) - v).T)) > tol:
            out.append(v)
    return np.array(out)


def orbit_distance(directions: np.ndarray, orbit: np.ndarray) -> np.ndarray:
    """Distance from each direction to the nearest orbit element."""
    d = directions[:, None, :] - orbit[None, :, :]
    return np.sqrt((d**2).sum(axis=2)).min(axis=1)


def _kernel_obs(obs: IsotropicObservable):
    code, params, offsets = obs.kernel_spec()
    return (int(code), np.ascontiguousarray(params, dtype=float),
            np.ascontiguousarray(offsets, dtype=np.int64))


def time_average(poly: RationalPolygon, obs: IsotropicObservable, p: PhasePoint, T: float,
                 vertex_radius: float = VERTEX_RADIUS, max_bounces: int = MAX_BOUNCES) -> float:
    """(1/2T) * integral over [-T, T] of a0 along the orbit of ``p``."""
    if T <= 0:
        raise ValueError("T must be positive")
    if obs.kind == "constant":
        return obs.params["value"]
    verts, normals = _arrays(poly)
    code, params, offsets = _kernel_obs(obs)
    total = 0.0
    for sgn in (1.0, -1.0):
        res = kernels.flow(verts, normals, p.position[0], p.position[1],
                           sgn * p.direction[0], sgn * p.direction[1], T, p.side,
                           vertex_radius, max_bounces, code, params, offsets)
        st = res[8]
        if st == kernels.ST_VERTEX:
            raise VertexEncounter(int(res[9]), float(sgn * res[7]))
        if st == kernels.ST_MAXBOUNCE:
            raise MaxBouncesExceeded(f"more than {max_bounces} bounces")
        if st == kernels.ST_STUCK:
            raise StuckAtBoundary("flow stuck")
        total += res[5]
    return total / (2.0 * T)


class LiouvilleSampler:
    """Draws (x, w) from the normalized Liouville measure dx dphi / area(D).

    Samples are produced in fixed-size blocks, block ``b`` using the stream
    ``SeedSequence(seed, spawn_key=(b,))``; results therefore do not depend on
    how blocks are distributed over threads.
    """

    def __init__(self, poly: RationalPolygon, seed: int = 0):
        self.poly = poly
        self.seed = int(seed)
        self.drawn = 0
        self.rejected = 0

    def rng(self, block: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(block,)))

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` rows (x, y, dx, dy)."""
        x0, y0, x1, y1 = self.poly.bbox
        pts = np.empty((0, 2))
        while len(pts) < n:
            m = max(2 * (n - len(pts)), 16)
            cand = np.column_stack([rng.uniform(x0, x1, m), rng.uniform(y0, y1, m)])
            ok = self.poly.contains(cand)
            self.rejected += int((~ok).sum())
            pts = np.vstack([pts, cand[ok]])
        pts = pts[:n]
        phi = rng.random(n)
        self.drawn += n
        return np.column_stack([pts, np.cos(2 * np.pi * phi), np.sin(2 * np.pi * phi)])


@dataclass
class Lemma1Result:
    T: float
    samples: int
    estimate: float          # MC estimate of integral |a^T|^2 dmu
    stderr: float
    abar: float
    key_bound: float         # MC estimate of integral |a^T - abar|^2 dmu
    key_bound_stderr: float
    mean_time_average: float  # MC estimate of integral a^T dmu (should equal abar)
    mean_stderr: float
    vertex_discards: int
    backend: str

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _default_threads() -> int:
    env = os.environ.get("POLYQ_THREADS")
    if env:
        return max(1, int(env))
    return 1


def sample_time_averages(poly: RationalPolygon, obs: IsotropicObservable, T: float,
                         samples: int, seed: int = 0, threads: int | None = None,
                         vertex_radius: float = VERTEX_RADIUS,
                         max_bounces: int = MAX_BOUNCES):
    """Time averages a^T at ``samples`` Liouville-distributed points.

    Returns ``(values, vertex_discards)``.  Vertex-striking samples are
    redrawn from the same block stream.
    """
    sampler = LiouvilleSampler(poly, seed)
    verts, normals = _arrays(poly)
    code, params, offsets = _kernel_obs(obs)
    nblocks = -(-samples // BLOCK_SIZE)

    def run_block(b):
        rng = sampler.rng(b)
        n = min(BLOCK_SIZE, samples - b * BLOCK_SIZE)
        vals = np.empty(n)
        todo = np.arange(n)
        discards = 0
        for _ in range(100):
            starts = np.ascontiguousarray(sampler.draw(len(todo), rng))
            if obs.kind == "constant":
                vals[todo] = obs.params["value"]
                return vals, discards
            out = np.empty(len(todo))
            st = np.empty(len(todo), dtype=np.int32)
            kernels.batch_time_average(verts, normals, starts, float(T), vertex_radius,
                                       max_bounces, code, params, offsets, out, st)
            if np.any((st != kernels.ST_OK) & (st != kernels.ST_VERTEX)):
                bad = int(st[(st != kernels.ST_OK) & (st != kernels.ST_VERTEX)][0])
                if bad == kernels.ST_MAXBOUNCE:
                    raise MaxBouncesExceeded(f"more than {max_bounces} bounces")
                raise StuckAtBoundary("flow stuck during sampling")
            good = st == kernels.ST_OK
            vals[todo[good]] = out[good]
            discards += int((~good).sum())
            todo = todo[~good]
            if len(todo) == 0:
                return vals, discards
        raise TooManyVertexEvents("vertex events persist after 100 redraws")

    nthreads = threads or _default_threads()
    if nthreads > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            results = list(ex.map(run_block, range(nblocks)))
    else:
        results = [run_block(b) for b in range(nblocks)]
    values = np.concatenate([r[0] for r in results])
    discards = sum(r[1] for r in results)
    return values, discards


def lemma1_functional(poly: RationalPolygon, obs: IsotropicObservable, T: float,
                      samples: int = 10_000, seed: int = 0, threads: int | None = None,
                      vertex_radius: float = VERTEX_RADIUS) -> Lemma1Result:
    """Monte Carlo estimate of the integral of |a^T|^2 over S*D, plus the key-bound quantity.

    The key-bound quantity integral |a^T - abar|^2 dmu is estimated directly
    from the same samples (abar is known exactly), which is unbiased.
    """
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    values, discards = sample_time_averages(poly, obs, T, samples, seed, threads,
                                            vertex_radius)
    if discards > 0.01 * samples:
        raise TooManyVertexEvents(
            f"{discards} vertex events for {samples} samples; suspect a geometry bug")
    abar = obs.mean
    if obs.kind == "constant":
        c = obs.params["value"]
        return Lemma1Result(float(T), int(samples), c * c, 0.0, c, 0.0, 0.0, c, 0.0,
                            int(discards), kernels.BACKEND)
    sq = values * values
    dev = (values - abar) ** 2
    root_n = math.sqrt(samples)
    return Lemma1Result(
        T=float(T),
        samples=int(samples),
        estimate=float(sq.mean()),
        stderr=float(sq.std(ddof=1) / root_n),
        abar=float(abar),
        key_bound=float(dev.mean()),
        key_bound_stderr=float(dev.std(ddof=1) / root_n),
        mean_time_average=float(values.mean()),
        mean_stderr=float(values.std(ddof=1) / root_n),
        vertex_discards=int(discards),
        backend=kernels.BACKEND,
    )
