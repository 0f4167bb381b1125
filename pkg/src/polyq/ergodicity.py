"""Eigenfunction measures, quantum variance and density-one subsequences.

Matrix elements <a0 psi_n, psi_n> are quadratic forms psi^T M_a psi with a
weighted mass matrix M_a[i, j] = integral a0 phi_i phi_j.  Smooth observables
use a degree-4 triangle rule; region indicators use exact integrals over
sub-triangles, refining triangles that straddle the region boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import EmptyWindow, RegionOutsideDomain
from .fem import Spectrum
from .geometry import Region
from .mesh import TriangleMesh
from .observables import IsotropicObservable

# Degree-4 symmetric rule on the reference triangle (barycentric, weight).
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
_RULE_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
_RULE_W = np.array([_W1] * 3 + [_W2] * 3)

REGION_DEPTH = 6
EPSILONS = (0.1, 0.05, 0.02)
# Relative gap below which neighbouring eigenvalues are treated as one cluster.
CLUSTER_RTOL = 1e-6


def _scatter_full(mesh: TriangleMesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()


def _smooth_weighted_mass(mesh: TriangleMesh, obs: IsotropicObservable) -> sp.csr_matrix:
    p = mesh.nodes[mesh.triangles]                       # (m, 3, 2)
    area = mesh.areas()
    pts = np.einsum("qk,mkd->mqd", _RULE_BARY, p)        # (m, 6, 2)
    vals = obs(pts.reshape(-1, 2)).reshape(len(p), -1)   # (m, 6)
    wa = vals * _RULE_W[None, :] * area[:, None]
    local = np.einsum("mq,qi,qj->mij", wa, _RULE_BARY, _RULE_BARY)
    return _scatter_full(mesh, local)


# Red subdivision of a triangle in barycentric coordinates of its parent.
_CHILD = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


def _children(bary: np.ndarray) -> np.ndarray:
    """(k, 3, 3) barycentric triangles -> (4k, 3, 3) children."""
    a, b, c = bary[:, 0], bary[:, 1], bary[:, 2]
    pts = np.stack([a, b, c, 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)], axis=1)
    return pts[:, _CHILD].reshape(-1, 3, 3)


def _sub_mass(bary: np.ndarray) -> np.ndarray:
    """Integral of phi_i phi_j over sub-triangles, per unit parent area."""
    v0, v1, v2 = bary[:, 0], bary[:, 1], bary[:, 2]
    u, w = v1 - v0, v2 - v0
    rel = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])  # area ratio
    s = bary.sum(axis=1)
    return (rel / 12.0)[:, None, None] * (
        np.einsum("kai,kaj->kij", bary, bary) + s[:, :, None] * s[:, None, :])


def _region_weighted_mass(mesh: TriangleMesh, region: Region,
                          depth: int = REGION_DEPTH) -> sp.csr_matrix:
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas()
    m = len(p)
    ref = np.eye(3)
    # classify each triangle by its vertices, edge midpoints and centroid
    probe_bary = np.vstack([ref, 0.5 * (ref + np.roll(ref, -1, axis=0)), [[1 / 3] * 3]])
    probes = np.einsum("qk,mkd->mqd", probe_bary, p).reshape(-1, 2)
    inside = region.contains(probes).reshape(m, -1)
    full = inside.all(axis=1)
    mixed = inside.any(axis=1) & ~full
    local = np.zeros((m, 3, 3))
    full_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local[full] = full_mass[None]
    for ti in np.flatnonzero(mixed):
        local[ti] = _straddling_mass(p[ti], region, depth)
    local *= area[:, None, None]
    return _scatter_full(mesh, local)


def _straddling_mass(tri: np.ndarray, region: Region, depth: int) -> np.ndarray:
    """Mass of phi_i phi_j over tri intersected with the region, per unit area."""
    acc = np.zeros((3, 3))
    todo = np.eye(3)[None]
    probe_bary = np.vstack([np.eye(3), 0.5 * (np.eye(3) + np.roll(np.eye(3), -1, axis=0)),
                            [[1 / 3] * 3]])
    for level in range(depth + 1):
        kids = _children(todo) if level else todo
        if level == depth:
            cent = kids.mean(axis=1) @ tri
            keep = region.contains(cent)
            acc += _sub_mass(kids[keep]).sum(axis=0)
            break
        pts = np.einsum("qa,kab,bd->kqd", probe_bary, kids, tri).reshape(-1, 2)
        inside = region.contains(pts).reshape(len(kids), -1)
        full = inside.all(axis=1)
        mixed = inside.any(axis=1) & ~full
        if full.any():
            acc += _sub_mass(kids[full]).sum(axis=0)
        todo = kids[mixed]
        if len(todo) == 0:
            break
    return acc


def weighted_mass(mesh: TriangleMesh, obs: IsotropicObservable | Region) -> sp.csr_matrix:
    """Full-node matrix of integral a0 phi_i phi_j."""
    if isinstance(obs, Region):
        obs = IsotropicObservable.indicator(obs)
    if obs.kind == "constant":
        from .fem import element_matrices

        _, me, _ = element_matrices(mesh.nodes[mesh.triangles])
        return _scatter_full(mesh, me * obs.params["value"])
    if obs.kind == "region":
        return _region_weighted_mass(mesh, obs.region)
    return _smooth_weighted_mass(mesh, obs)


def _as_observable(spectrum: Spectrum, obs) -> IsotropicObservable:
    if isinstance(obs, Region):
        obs = IsotropicObservable.indicator(obs)
    if obs.kind == "region":
        region = obs.region
        dom = spectrum.mesh
        probes = _region_probes(region)
        if probes is not None and not _inside_mesh_domain(dom, probes):
            raise RegionOutsideDomain(f"region {region.label!r} leaves the meshed domain")
    return obs


def _region_probes(region: Region):
    if region.shape == "disk":
        c = np.asarray(region.params["center"], dtype=float)
        r = float(region.params["radius"])
        ang = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        return c + r * np.column_stack([np.cos(ang), np.sin(ang)]) * (1 - 1e-9)
    if region.shape == "polygon":
        return np.array(region.params["vertices"], dtype=float)
    return None  # half-planes are intersected with D by construction


def _inside_mesh_domain(mesh: TriangleMesh, pts: np.ndarray, tol: float = 1e-12) -> bool:
    """True when every point lies in some (closed) mesh triangle."""
    p = mesh.nodes[mesh.triangles]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    for x, y in np.atleast_2d(pts):
        l1 = ((x - a[:, 0]) * (c[:, 1] - a[:, 1]) - (y - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (y - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x - a[:, 0])) / det
        if not np.any((l1 >= -tol) & (l2 >= -tol) & (l1 + l2 <= 1 + tol)):
            return False
    return True


def observable_block(spectrum: Spectrum, obs, modes=None) -> np.ndarray:
    """Matrix <a0 psi_i, psi_j> over the selected modes (all by default)."""
    obs = _as_observable(spectrum, obs)
    Ma = weighted_mass(spectrum.mesh, obs)
    inner = spectrum.system.interior
    Ma = Ma[inner][:, inner]
    V = spectrum.coefficients if modes is None else spectrum.coefficients[:, modes]
    return V.T @ (Ma @ V)


def matrix_element(spectrum: Spectrum, obs, n: int) -> float:
    """<a0 psi_n, psi_n> (for a region, the mass of |psi_n|^2 on it)."""
    if not 0 <= n < spectrum.k:
        raise IndexError(f"mode {n} outside the computed range 0..{spectrum.k - 1}")
    return float(observable_block(spectrum, obs, [n])[0, 0])


def clusters(eigenvalues: np.ndarray, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
    """Runs of consecutive eigenvalues whose relative gaps are below ``rtol``."""
    E = np.asarray(eigenvalues)
    if len(E) == 0:
        return []
    breaks = np.flatnonzero(np.diff(E) > rtol * np.abs(E[1:])) + 1
    return np.split(np.arange(len(E)), breaks)


@dataclass(frozen=True, eq=False)
class MeasureSeries:
    values: np.ndarray          # mu_n, one per mode
    energies: np.ndarray        # E_n
    target: float               # area(A)/area(D) or the mean of a0
    observable: dict
    quadrature_error: float     # |quadrature mean - exact mean|
    adapted: bool = False       # cluster bases rotated to diagonalize a0
    cluster_sizes: tuple = ()
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("n,E_n,mu_n,target\n")
            for i, (e, m) in enumerate(zip(self.energies, self.values)):
                fh.write(f"{i + 1},{float(e)!r},{float(m)!r},{float(self.target)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "MeasureSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        target = float(data[0, 3]) if len(data) else 0.0
        return cls(data[:, 2].copy(), data[:, 1].copy(), target, {"source": str(path)}, 0.0)


def measure_series(spectrum: Spectrum, obs, adapt_clusters: bool = True,
                   cluster_rtol: float = CLUSTER_RTOL) -> MeasureSeries:
    """mu_n = <a0 psi_n, psi_n> for every computed mode.

    Inside a cluster of numerically degenerate eigenvalues the eigenbasis is
    arbitrary.  With ``adapt_clusters`` the cluster basis is rotated to
    diagonalize a0 restricted to the cluster, which fixes the basis by the
    observable itself; cluster sums of mu_n are unchanged by the rotation.
    """
    obs = _as_observable(spectrum, obs)
    mesh = spectrum.mesh
    Ma_full = weighted_mass(mesh, obs)
    inner = spectrum.system.interior
    Ma = Ma_full[inner][:, inner]
    V = spectrum.coefficients
    MaV = Ma @ V
    mu = np.einsum("ij,ij->j", V, MaV)
    sizes = []
    if adapt_clusters:
        for c in clusters(spectrum.eigenvalues, cluster_rtol):
            sizes.append(len(c))
            if len(c) > 1:
                B = V[:, c].T @ MaV[:, c]
                mu[c] = scipy.linalg.eigvalsh(0.5 * (B + B.T))
    quad_mean = float(Ma_full.sum()) / mesh.areas().sum()
    qerr = abs(quad_mean - obs.mean)
    return MeasureSeries(mu, spectrum.eigenvalues.copy(), float(obs.mean), obs.describe(),
                         qerr, adapt_clusters, tuple(sizes),
                         {"mesh_h": mesh.h, "modes": spectrum.k})


@dataclass(frozen=True, eq=False)
class VarianceCurve:
    energies: np.ndarray       # cutoffs, increasing
    variance: np.ndarray       # V(A, E)
    counts: np.ndarray         # N(E) = #{E_n <= E}
    running_mean: np.ndarray   # local Weyl average at each cutoff

    def to_dict(self) -> dict:
        return {"energies": self.energies.tolist(), "variance": self.variance.tolist(),
                "counts": self.counts.tolist(), "running_mean": self.running_mean.tolist()}


def _counts(series: MeasureSeries, cutoffs) -> tuple[np.ndarray, np.ndarray]:
    E = np.asarray(cutoffs, dtype=float)
    if E.ndim != 1 or len(E) == 0:
        raise EmptyWindow("no cutoffs given")
    if np.any(np.diff(E) <= 0):
        raise ValueError("cutoffs must be strictly increasing")
    if E[-1] > series.energies[-1] * (1 + 1e-12):
        raise EmptyWindow(f"cutoff {E[-1]} beyond the computed spectrum "
                          f"(max {series.energies[-1]})")
    N = np.searchsorted(series.energies, E, side="right")
    if np.any(N == 0):
        raise EmptyWindow(f"cutoff {E[N == 0][0]} below the first eigenvalue")
    return E, N


def quantum_variance(series: MeasureSeries, cutoffs) -> VarianceCurve:
    """V(A, E) = mean over E_n <= E of |mu_n - target|^2, for each cutoff."""
    E, N = _counts(series, cutoffs)
    dev = (series.values - series.target) ** 2
    csum = np.cumsum(dev)
    msum = np.cumsum(series.values)
    return VarianceCurve(E, csum[N - 1] / N, N, msum[N - 1] / N)


def local_weyl_average(series: MeasureSeries, cutoffs) -> np.ndarray:
    """Running means (1/N(E)) * sum_{E_n <= E} mu_n."""
    E, N = _counts(series, cutoffs)
    return np.cumsum(series.values)[N - 1] / N


def auto_cutoffs(energies: np.ndarray, count: int = 8, first: int = 30) -> np.ndarray:
    """Cutoffs at geometrically spaced mode counts from ``first`` to all modes.

    Each cutoff sits in the widest gap near its target count so that no
    cluster of close eigenvalues is split.
    """
    E = np.asarray(energies)
    n = len(E)
    first = min(first, n)
    targets = np.unique(np.round(np.geomspace(first, n, count)).astype(int))
    out = []
    for t in targets:
        if t >= n:
            out.append(float(E[-1]))
            continue
        lo, hi = max(1, t - 2), min(n - 1, t + 2)
        gaps = E[lo:hi + 1] - E[lo - 1:hi]
        j = lo - 1 + int(np.argmax(gaps))
        out.append(float(0.5 * (E[j] + E[j + 1])))
    out = np.unique(out)
    return out


@dataclass(frozen=True, eq=False)
class TypicalSubsequence:
    indices: np.ndarray        # 0-based mode indices, increasing
    epsilon: float
    grid: np.ndarray           # N = 1..len(series)
    density: np.ndarray        # #{n_j < N}/N on the grid

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "indices": self.indices.tolist(),
                "excluded": int(len(self.grid) - len(self.indices)) if len(self.grid) else 0,
                "density_final": float(self.density[-1]) if len(self.density) else 1.0}


def extract_typical(series: MeasureSeries, epsilon: float) -> TypicalSubsequence:
    """Modes with |mu_n - target| <= epsilon and their running density."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    good = np.abs(series.values - series.target) <= epsilon
    grid = np.arange(1, len(series) + 1)
    density = np.cumsum(good) / grid
    return TypicalSubsequence(np.flatnonzero(good), float(epsilon), grid, density)


def prefix_variance(series: MeasureSeries) -> np.ndarray:
    """V over the first N modes, for N = 1..len(series)."""
    dev = (series.values - series.target) ** 2
    return np.cumsum(dev) / np.arange(1, len(series) + 1)


def chebyshev_check(series: MeasureSeries, typical: TypicalSubsequence) -> dict:
    """Check 1 - density(N) <= V_N / eps^2 for every N."""
    V = prefix_variance(series)
    lhs = 1.0 - typical.density
    rhs = V / typical.epsilon**2
    slack = rhs + 1e-12 - lhs
    worst = int(np.argmin(slack)) if len(slack) else 0
    return {"epsilon": typical.epsilon, "holds": bool(np.all(slack >= 0)),
            "min_slack": float(slack[worst]) if len(slack) else 0.0,
            "worst_N": worst + 1}


def pair_invariants(block: np.ndarray, target: float) -> tuple[float, float]:
    """Rotation-invariant statistics of a 2x2 observable block of a mode pair.

    Returns the trace and sum over diagonal of (mu - target)^2 plus twice the
    squared off-diagonal entry.
    """
    B = 0.5 * (block + block.T)
    d = np.diag(B) - target
    return float(np.trace(B)), float(d @ d + 2.0 * B[0, 1] ** 2)


def rotate_pair(V: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return V @ np.array([[c, -s], [s, c]])


def indicator_sandwich(region: Region, delta: float) -> tuple[IsotropicObservable, IsotropicObservable]:
    """Smooth bumps a_lo <= 1_A <= a_hi for a disk region A."""
    if region.shape != "disk":
        raise ValueError("the bump sandwich is defined for disk regions")
    c = region.params["center"]
    r = float(region.params["radius"])
    if not 0 < delta < r:
        raise ValueError("need 0 < delta < radius")
    lo = IsotropicObservable.bump(region.domain, c, r, inner_radius=r - delta, label="lower")
    hi = IsotropicObservable.bump(region.domain, c, r + delta, inner_radius=r, label="upper")
    return lo, hi


def key_bound_check(curve: VarianceCurve, key_bound: float, key_bound_stderr: float,
                    allowance: float) -> dict:
    """Soft comparison of the top-decade quantum variance with the classical bound."""
    top = curve.energies >= curve.energies[-1] / 10.0
    v = float(curve.variance[top].max())
    bound = key_bound + 3.0 * key_bound_stderr + allowance
    return {"top_decade_variance": v, "classical_bound": float(key_bound),
            "classical_stderr": float(key_bound_stderr), "allowance": float(allowance),
            "status": "pass" if v <= bound else "warn"}


def density_report(series: MeasureSeries, epsilons=EPSILONS) -> list[dict]:
    out = []
    for eps in epsilons:
        t = extract_typical(series, eps)
        row = t.to_dict()
        del row["indices"]
        row["chebyshev"] = chebyshev_check(series, t)
        out.append(row)
    return out
