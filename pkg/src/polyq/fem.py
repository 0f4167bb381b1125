"""Linear finite elements for the Dirichlet Laplacian and its lowest eigenpairs.

The generalized problem K psi = E M psi is solved on interior nodes only
(boundary rows and columns eliminated), with the consistent mass matrix so
that discrete L2 inner products are exact for the finite element functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh
from threadpoolctl import threadpool_limits

from .errors import NoConvergence, SingularElement, TooManyModes
from .geometry import RationalPolygon
from .mesh import TriangleMesh, refine, triangulate

RESIDUAL_TOL = 1e-8
ORTHO_TOL = 1e-8


def element_matrices(p: np.ndarray):
    """Stiffness and consistent mass of P1 elements.

    ``p`` has shape (m, 3, 2); returns arrays of shape (m, 3, 3).
    """
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    if np.any(area <= 0):
        bad = int(np.flatnonzero(area <= 0)[0])
        raise SingularElement(f"triangle {bad} has non-positive area {area[bad]!r}")
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]
    me = (np.ones((3, 3)) + np.eye(3))[None] * (area / 12.0)[:, None, None]
    return ke, me, area


def _scatter(mesh: TriangleMesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    a = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    return a.tocsr()


@dataclass(frozen=True, eq=False)
class StiffnessMassSystem:
    stiffness: sp.csr_matrix       # interior-only K
    mass: sp.csr_matrix            # interior-only M
    interior: np.ndarray           # matrix index -> mesh node
    mesh: TriangleMesh
    stiffness_full: sp.csr_matrix
    mass_full: sp.csr_matrix

    @property
    def dim(self) -> int:
        return len(self.interior)


def assemble(mesh: TriangleMesh) -> StiffnessMassSystem:
    ke, me, _ = element_matrices(mesh.nodes[mesh.triangles])
    K = _scatter(mesh, ke)
    M = _scatter(mesh, me)
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    inner = mesh.interior_nodes
    Ki = K[inner][:, inner].tocsr()
    Mi = M[inner][:, inner].tocsr()
    return StiffnessMassSystem(Ki, Mi, inner, mesh, K.tocsr(), M.tocsr())


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray     # ascending
    coefficients: np.ndarray    # (n_interior, k), M-orthonormal columns
    system: StiffnessMassSystem
    residuals: np.ndarray
    orthonormality_error: float
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def mesh(self) -> TriangleMesh:
        return self.system.mesh

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def vectors(self) -> np.ndarray:
        """Nodal vectors over all mesh nodes; boundary entries are exactly zero."""
        out = np.zeros((self.mesh.n_nodes, self.k))
        out[self.system.interior] = self.coefficients
        return out

    def nodal(self, n: int) -> np.ndarray:
        out = np.zeros(self.mesh.n_nodes)
        out[self.system.interior] = self.coefficients[:, n]
        return out

    def truncated(self, k: int) -> "Spectrum":
        return Spectrum(self.eigenvalues[:k], self.coefficients[:, :k], self.system,
                        self.residuals[:k], self.orthonormality_error, self.seed, self.meta)


def _residuals(K, M, V, w):
    MV = M @ V
    R = K @ V - MV * w[None, :]
    return np.linalg.norm(R, axis=0) / (np.abs(w) * np.linalg.norm(MV, axis=0))


def _eigsh_near(K, M, sigma, k, v0, ncv=None):
    n = K.shape[0]
    ncv = min(n, ncv or max(2 * k + 1, k + 32))
    w, V = eigsh(K, k=k, M=M, sigma=sigma, which="LM", v0=v0, ncv=ncv, tol=1e-13,
                 maxiter=max(1000, 20 * n))
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _largest_gap_cut(values, lo, hi):
    """Midpoint of the widest gap between consecutive values inside [lo, hi]."""
    v = np.sort(values[(values >= lo) & (values <= hi)])
    pts = np.concatenate([[lo], v, [hi]])
    i = int(np.argmax(np.diff(pts)))
    return 0.5 * (pts[i] + pts[i + 1])


def _sliced(K, M, k, window, rng):
    """Lowest k eigenpairs from overlapping shift-invert windows.

    A window of ``m`` pairs nearest the shift s is complete on the open
    interval |E - s| < r, r being the largest returned distance.  Successive
    windows overlap, and the hand-over point between two windows is put in the
    widest spectral gap of the overlap so that no cluster is split.
    """
    n = K.shape[0]
    m = min(window, k)
    w, V = _eigsh_near(K, M, 0.0, m, rng.standard_normal(n))
    vals, vecs = [w], [V]
    covered = w[-1]              # all eigenvalues <= covered are in hand
    half = 0.5 * (w[-1] - w[max(0, m // 2 - 1)])
    while sum(len(x) for x in vals) < k:
        for _ in range(20):
            sigma = covered + 0.6 * 2 * half
            w, V = _eigsh_near(K, M, sigma, min(window, n - 1), rng.standard_normal(n))
            r = np.abs(w - sigma).max()
            if sigma - r < covered - 0.1 * r:
                break
            half *= 0.5  # spectrum denser than predicted: move the shift back
        else:
            raise NoConvergence("spectrum slicing could not close a gap")
        cut = _largest_gap_cut(np.concatenate([vals[-1], w]), sigma - r, covered)
        keep = vals[-1] <= cut
        vals[-1], vecs[-1] = vals[-1][keep], vecs[-1][:, keep]
        take = (w > cut) & (np.abs(w - sigma) < r)
        vals.append(w[take])
        vecs.append(V[:, take])
        covered = w[take].max()
        half = 0.5 * r
    w = np.concatenate(vals)
    V = np.concatenate(vecs, axis=1)
    order = np.argsort(w, kind="stable")[:k]
    return w[order], V[:, order]


def solve_lowest(system: StiffnessMassSystem, k: int, seed: int = 0,
                 tol: float = RESIDUAL_TOL, window: int = 160) -> Spectrum:
    """Lowest ``k`` eigenpairs of K psi = E M psi.

    Shift-invert Lanczos (ARPACK).  Up to ``window`` modes come from a single
    run about zero; more are gathered by spectrum slicing.  A Rayleigh-Ritz
    step on the collected basis makes the vectors M-orthonormal to rounding.
    BLAS is pinned to one thread, so results do not depend on the machine's
    thread count.
    """
    n = system.dim
    if k < 1:
        raise TooManyModes("k must be at least 1")
    if 3 * k > n:
        raise TooManyModes(f"k={k} exceeds one third of the discrete dimension {n}")
    K = system.stiffness.tocsc()
    M = system.mass.tocsc()
    rng = np.random.default_rng(seed)
    with threadpool_limits(limits=1):
        try:
            if k <= window:
                w, V = _eigsh_near(K, M, 0.0, k, rng.standard_normal(n))
            else:
                w, V = _sliced(K, M, k, window, rng)
        except NoConvergence:
            raise
        except Exception as exc:  # ARPACK failures
            raise NoConvergence(f"eigensolver failed: {exc}") from exc
        Kr = V.T @ (K @ V)
        Mr = V.T @ (M @ V)
        w, Y = scipy.linalg.eigh(0.5 * (Kr + Kr.T), 0.5 * (Mr + Mr.T))
        V = V @ Y
        order = np.argsort(w, kind="stable")
        w, V = w[order], V[:, order]
        # deterministic sign: largest-magnitude entry positive
        idx = np.argmax(np.abs(V), axis=0)
        V = V * np.sign(V[idx, np.arange(V.shape[1])])[None, :]
        res = _residuals(K, M, V, w)
        G = V.T @ (M @ V)
    if res.max() > tol:
        raise NoConvergence(f"max residual {res.max():.3e} above {tol:.1e}", res)
    ortho = float(np.abs(G - np.eye(k)).max())
    if ortho > ORTHO_TOL:
        raise NoConvergence(f"M-orthonormality error {ortho:.3e}", res)
    if w[0] <= 0:
        raise NoConvergence("non-positive lowest eigenvalue")
    return Spectrum(w, V, system, res, ortho, seed)


def rayleigh_quotients(spectrum: Spectrum) -> np.ndarray:
    K, M = spectrum.system.stiffness, spectrum.system.mass
    V = spectrum.coefficients
    return np.einsum("ij,ij->j", V, K @ V) / np.einsum("ij,ij->j", V, M @ V)


def weyl_predicted(poly: RationalPolygon, E) -> np.ndarray:
    """Two-term Weyl counting function area*E/(4 pi) - perimeter*sqrt(E)/(4 pi)."""
    E = np.asarray(E, dtype=float)
    return poly.area * E / (4 * math.pi) - poly.perimeter * np.sqrt(E) / (4 * math.pi)


def weyl_check(spectrum: Spectrum, poly: RationalPolygon, E: float | None = None) -> dict:
    """Compare the discrete counting function with two-term Weyl at E (default 0.8 * E_max)."""
    if spectrum.k == 0:
        raise ValueError("empty spectrum")
    E_max = float(spectrum.eigenvalues[-1])
    E_eval = 0.8 * E_max if E is None else float(E)
    counted = int(np.searchsorted(spectrum.eigenvalues, E_eval, side="right"))
    predicted = float(weyl_predicted(poly, E_eval))
    return {
        "E_max": E_max,
        "E": E_eval,
        "counted": counted,
        "predicted": predicted,
        "rel_gap": (counted - predicted) / predicted,
    }


def convergence_study(poly: RationalPolygon, k: int, levels: int, h0: float = 0.25,
                      seed: int = 0) -> list[dict]:
    """Eigenvalues on nested red refinements; adds the observed convergence order."""
    if k < 1:
        raise TooManyModes("k must be at least 1")
    if levels < 2:
        raise ValueError("a convergence study needs at least 2 levels")
    mesh = triangulate(poly, h0)
    rows = []
    for lev in range(levels):
        if lev:
            mesh = refine(mesh)
        spec = solve_lowest(assemble(mesh), k, seed=seed)
        rows.append({"level": lev, "h": mesh.h, "eigenvalues": spec.eigenvalues.tolist()})
    for i in range(2, len(rows)):
        e0, e1, e2 = (np.array(rows[j]["eigenvalues"]) for j in (i - 2, i - 1, i))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (e0 - e1) / (e1 - e2)
        rows[i]["ratio"] = ratio.tolist()
        rows[i]["order"] = np.log2(ratio).tolist()
    return rows


def richardson(coarse, fine, order: int = 2) -> np.ndarray:
    """Extrapolate from meshes h and h/2 assuming error ~ h**order."""
    f = 2.0**order
    return (f * np.asarray(fine) - np.asarray(coarse)) / (f - 1.0)
