import math

import numpy as np
import pytest
from scipy import integrate

from polyq.fem import assemble, solve_lowest
from polyq.geometry import l_shape, right_isoceles, unit_square
from polyq.mesh import build_mesh


def lattice_modes(E_max):
    """Closed-form Dirichlet spectrum of the unit square: (E, m, n) with E <= E_max."""
    M = int(math.sqrt(E_max) / math.pi) + 2
    m, n = np.meshgrid(np.arange(1, M), np.arange(1, M), indexing="ij")
    E = math.pi**2 * (m**2 + n**2)
    keep = E <= E_max
    order = np.argsort(E[keep], kind="stable")
    return E[keep][order], m[keep][order], n[keep][order]


def gap_counts(E_fe, targets, rtol=1e-6):
    """Mode counts near ``targets`` where both the lattice and the discrete spectra have a gap.

    A cutoff placed there encloses the same number of modes in both spectra.
    """
    lat, _, _ = lattice_modes(float(E_fe[-1]) * 1.5)
    out = []
    for t in targets:
        for n in sorted(range(max(t - 8, 1), t + 9), key=lambda n: abs(n - t)):
            if n >= len(E_fe) or n >= len(lat):
                continue
            if lat[n] - lat[n - 1] > rtol * lat[n] and E_fe[n] - E_fe[n - 1] > rtol * E_fe[n]:
                out.append(n)
                break
    return out


def square_functional_oracle(T):
    """Integral of |a^T|^2 for cos(2 pi x) on the unit square, from torus unfolding.

    The two-sided average along direction angle 2 pi phi is
    cos(2 pi x0) sinc(2 pi T cos 2 pi phi); averaging cos^2 over x0 gives 1/2.
    """
    def f(phi):
        w = 2 * math.pi * T * math.cos(2 * math.pi * phi)
        return (math.sin(w) / w) ** 2 if w else 1.0
    v, _ = integrate.quad(f, 0, 1, limit=20000, epsabs=1e-13)
    return 0.5 * v


_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    """Criterion number -> one summary line, printed at the end of the run."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])


@pytest.fixture(scope="session")
def square():
    return unit_square()


@pytest.fixture(scope="session")
def lshape():
    return l_shape()


@pytest.fixture(scope="session")
def rtri():
    return right_isoceles()


@pytest.fixture(scope="session")
def square_spectrum_64(square):
    """400 modes on the h = 1/64 structured square mesh."""
    return solve_lowest(assemble(build_mesh(square, 1 / 64)), 400, seed=0)


@pytest.fixture(scope="session")
def square_spectrum_16(square):
    return solve_lowest(assemble(build_mesh(square, 1 / 16)), 60, seed=0)


@pytest.fixture(scope="session")
def lshape_spectrum(lshape):
    """300 modes on the h = 1/64 L-shape mesh."""
    return solve_lowest(assemble(build_mesh(lshape, 1 / 64)), 300, seed=0)
