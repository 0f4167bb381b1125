"""Acceptance criteria 1-11, one test each.

Every test records a one-line PASS/FAIL summary (WARN for the soft key-bound
comparison) that is printed at the end of the pytest run.
"""
import math
import os
import time

import numpy as np
import pytest

from conftest import gap_counts, lattice_modes, square_functional_oracle
from polyq.billiard import (LiouvilleSampler, PhasePoint, direction_orbit, evolve_bounces,
                            lemma1_functional, orbit_distance)
from polyq.ergodicity import (EPSILONS, auto_cutoffs, chebyshev_check, extract_typical,
                              key_bound_check, measure_series, quantum_variance)
from polyq.experiment import ExperimentConfig, run
from polyq.fem import assemble, richardson, solve_lowest
from polyq.geometry import builtin, left_half, reflection_group, right_isoceles
from polyq.mesh import build_mesh
from polyq.observables import IsotropicObservable, named_observable

TEST_OBSERVABLES = ("region:left-half", "cos2pix", "bump", "region:disk")
T_GRID = (10.0, 100.0, 1000.0)


def record(acceptance, n, ok, detail, status=None):
    acceptance[n] = f"criterion {n:>2}: {status or ('PASS' if ok else 'FAIL')}  {detail}"
    return ok


@pytest.fixture(scope="module")
def square_1000(square):
    """1000 modes on the h = 1/64 square mesh."""
    return solve_lowest(assemble(build_mesh(square, 1 / 64)), 1000)


@pytest.fixture(scope="module")
def lshape_1300(lshape):
    """1300 modes on the h = 1/64 L-shape mesh, enough to reach E ~ 6000."""
    return solve_lowest(assemble(build_mesh(lshape, 1 / 64)), 1300)


@pytest.fixture(scope="module")
def series_bank():
    """Every series computed by the criteria, for the Chebyshev check."""
    return {}


def test_criterion_01_square_spectrum(acceptance, square):
    t0 = time.perf_counter()
    coarse = build_mesh(square, 1 / 32)
    e_c = solve_lowest(assemble(coarse), 20).eigenvalues
    e_f = solve_lowest(assemble(build_mesh(square, 1 / 32, 1)), 20).eigenvalues
    exact, _, _ = lattice_modes(60 * math.pi**2)
    exact = exact[:20]
    rel = np.abs(richardson(e_c, e_f) - exact) / exact
    elapsed = time.perf_counter() - t0
    ok = rel.max() <= 1e-3 and elapsed <= 120
    record(acceptance, 1, ok, f"max rel err {rel.max():.2e} (<= 1e-3) over 20 modes, "
                              f"E_1 {richardson(e_c, e_f)[0]:.5f}, {elapsed:.1f} s")
    assert ok


def test_criterion_02_triangle(acceptance):
    tri = right_isoceles(math.pi)
    e = [solve_lowest(assemble(build_mesh(tri, h)), 1).eigenvalues[0]
         for h in (math.pi / 32, math.pi / 64)]
    ext = richardson(*e)
    rel = abs(ext - 5.0) / 5.0
    ok = rel <= 5e-3
    record(acceptance, 2, ok, f"extrapolated E_1 {ext:.5f}, rel err {rel:.2e} (<= 5e-3)")
    assert ok


def test_criterion_03_left_half(acceptance, square, square_spectrum_64, series_bank):
    s = measure_series(square_spectrum_64.truncated(200), left_half(square))
    series_bank["square/left-half/200"] = s
    dev = np.abs(s.values - 0.5).max()
    dens = extract_typical(s, 0.05).density[-1]
    ok = dev <= 2e-3 and dens == 1.0
    record(acceptance, 3, ok, f"max |mu_n - 1/2| {dev:.1e} over n <= 200, "
                              f"density(eps=0.05) {dens}")
    assert ok


def test_criterion_04_variance_brute_force(acceptance, square, square_1000, series_bank):
    E = square_1000.eigenvalues
    s = measure_series(square_1000, IsotropicObservable.cos2pix(square))
    series_bank["square/cos2pix/1000"] = s
    lat, m, _ = lattice_modes(E[-1] * 1.5)
    n_1000 = int((lat <= 1000 * math.pi**2).sum())
    counts = gap_counts(E, (60, 150, 300, 500, n_1000))
    errs = []
    for n in counts:
        v = quantum_variance(s, [0.5 * (E[n - 1] + E[n])])
        lat_cut = 0.5 * (lat[n - 1] + lat[n])
        assert (lat <= lat_cut).sum() == n == v.counts[0]
        brute = 0.25 * (m[:n] == 1).sum() / n
        errs.append(abs(v.variance[0] - brute) / brute)
    ok = len(counts) == 5 and max(errs) <= 0.1
    record(acceptance, 4, ok, f"5 cutoffs at N={counts}, max rel diff {max(errs):.1e} (<= 0.1)")
    assert ok


def test_criterion_05_variance_decay(acceptance, lshape, series_bank):
    t0 = time.perf_counter()
    spec = solve_lowest(assemble(build_mesh(lshape, 1 / 64)), 300)
    s = measure_series(spec, IsotropicObservable.default_bump(lshape))
    series_bank["L-shape/bump/300"] = s
    E = spec.eigenvalues
    curve = quantum_variance(s, [0.5 * (E[29] + E[30]), E[-1]])
    assert curve.counts.tolist() == [30, 300]
    ratio = curve.variance[1] / curve.variance[0]
    elapsed = time.perf_counter() - t0
    ok = ratio <= 0.5 and elapsed <= 600
    record(acceptance, 5, ok, f"V(300 modes)/V(30 modes) = {curve.variance[1]:.2e}/"
                              f"{curve.variance[0]:.2e} = {ratio:.2f} (<= 0.5), {elapsed:.1f} s")
    assert ok


def test_criterion_06_local_weyl(acceptance, square, lshape, square_1000, lshape_1300,
                                 series_bank):
    rows, ok = [], True
    for poly, spec in ((square, square_1000), (lshape, lshape_1300)):
        for name in TEST_OBSERVABLES:
            s = measure_series(spec, named_observable(poly, name))
            series_bank[f"{poly.name}/{name}/{spec.k}"] = s
            curve = quantum_variance(s, auto_cutoffs(s.energies))
            dev = abs(curve.running_mean[-1] - s.target)
            bound = max(0.02, 3 * s.quadrature_error)
            ok &= dev <= bound
            rows.append(f"{poly.name}/{name} {dev:.4f}")
    record(acceptance, 6, ok, "|running mean - abar| at top cutoff (<= 0.02): " + ", ".join(rows))
    assert ok


def test_criterion_07_lemma1_decay(acceptance, square, rtri):
    t0 = time.perf_counter()
    ok, rows = True, []
    for poly in (square, rtri):
        obs = IsotropicObservable.cos2pix(poly)
        assert abs(obs.mean) <= 1e-12
        res = [lemma1_functional(poly, obs, T, 10_000, seed=0) for T in T_GRID]
        est = [r.estimate for r in res]
        ok &= all(b < a for a, b in zip(est, est[1:])) and est[-1] <= 0.02
        if poly is square:
            # torus-unfolding oracle for the square
            for r in res:
                ok &= abs(r.estimate - square_functional_oracle(r.T)) <= 4 * r.stderr
        rows.append(f"{poly.name} " + "/".join(f"{e:.2e}" for e in est))
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 300
    record(acceptance, 7, ok, f"int |a^T|^2 at T=10/100/1000: {'; '.join(rows)}, "
                              f"{elapsed:.1f} s")
    assert ok


def test_criterion_08_orbit_invariance(acceptance):
    worst, violations, ok = 0.0, 0, True
    for name in ("square", "L-shape", "pi8-triangle"):
        poly = builtin(name)
        group = reflection_group(poly)
        sampler = LiouvilleSampler(poly, 8)
        row = sampler.draw(1, sampler.rng(0))[0]
        p = PhasePoint.make(row[:2], row[2:])
        traj = evolve_bounces(poly, p, 10**6)
        d = orbit_distance(traj.directions, direction_orbit(group, p.direction))
        violations += int((d > 1e-9).sum())
        ok &= len(traj) == 10**6
        worst = max(worst, float(d.max()))
    ok &= violations == 0
    record(acceptance, 8, ok, f"10^6 bounces x 3 polygons, max orbit distance {worst:.1e}, "
                              f"{violations} violations")
    assert ok


def test_criterion_09_key_bound(acceptance, square, lshape, square_1000, lshape_1300):
    rows, statuses = [], []
    for poly, spec in ((square, square_1000), (lshape, lshape_1300)):
        for name in TEST_OBSERVABLES:
            obs = named_observable(poly, name)
            s = measure_series(spec, obs)
            curve = quantum_variance(s, auto_cutoffs(s.energies))
            cl = lemma1_functional(poly, obs, 1000.0, 10_000, seed=0)
            allowance = 3 * s.quadrature_error + 1e-8
            chk = key_bound_check(curve, cl.key_bound, cl.key_bound_stderr, allowance)
            statuses.append(chk["status"])
            rows.append(f"{poly.name}/{name} {chk['status']} "
                        f"(V {chk['top_decade_variance']:.1e} vs {cl.key_bound:.1e})")
    ok = all(st in ("pass", "warn") for st in statuses)
    status = "PASS" if all(st == "pass" for st in statuses) else "WARN"
    record(acceptance, 9, ok, "; ".join(rows), status=status)
    assert ok


@pytest.fixture(scope="module")
def determinism_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("determinism")
    cfg = {"name": "determinism", "polygon": "L-shape", "mesh": {"h": 1 / 32},
           "solver": {"modes": 120}, "observables": ["bump", "region:left-half", "cos2pix"],
           "classical": {"T": [10.0, 100.0], "samples": 2000}}
    out = {}
    old = os.environ.get("POLYQ_THREADS")
    try:
        for label, threads in (("a", "1"), ("b", "1"), ("c", "4")):
            os.environ["POLYQ_THREADS"] = threads
            d = dict(cfg, output_dir=str(base / label))
            out[label] = run(ExperimentConfig.from_dict(d), use_cache=False)
    finally:
        if old is None:
            os.environ.pop("POLYQ_THREADS", None)
        else:
            os.environ["POLYQ_THREADS"] = old
    return base, out


def test_criterion_10_chebyshev(acceptance, series_bank, square_spectrum_64, lshape_spectrum,
                                square, lshape, determinism_runs):
    bank = dict(series_bank)
    bank.setdefault("square/cos2pix/400", measure_series(square_spectrum_64,
                                                         IsotropicObservable.cos2pix(square)))
    bank.setdefault("L-shape/region:disk/300",
                    measure_series(lshape_spectrum, named_observable(lshape, "region:disk")))
    checks = [chebyshev_check(s, extract_typical(s, eps)) for s in bank.values()
              for eps in EPSILONS]
    _, runs = determinism_runs
    report_flags = [row["chebyshev_holds"] for r in runs.values()
                    for row in r.summary["observables"]]
    ok = all(c["holds"] for c in checks) and all(report_flags)
    slack = min(c["min_slack"] for c in checks)
    record(acceptance, 10, ok, f"{len(checks)} series/epsilon pairs and {len(report_flags)} "
                               f"run summaries, min slack {slack:.2e}")
    assert ok


def test_criterion_11_determinism(acceptance, determinism_runs):
    base, runs = determinism_runs
    ref = runs["a"]
    mismatches = []
    for label in ("b", "c"):
        for name, rel in ref.data["paths"].items():
            if name == "timings":
                continue
            a = (base / "a" / rel).read_bytes()
            if (base / label / rel).read_bytes() != a:
                mismatches.append(f"{label}:{name}")
    n_files = len(ref.data["paths"]) - 1
    ok = not mismatches
    record(acceptance, 11, ok, f"{n_files} output files byte-identical across 2 runs and "
                               f"POLYQ_THREADS=1 vs 4" + (f"; differ: {mismatches}"
                                                           if mismatches else ""))
    assert ok
