"""Compare the compiled and pure-Python billiard kernels.

    python benchmarks/bench_kernels.py [--samples N] [--T T]

Times the batched two-sided time average (the Monte Carlo hot loop) on a few
polygons and checks that both backends return the same numbers.
"""
import argparse
import time

import numpy as np

from polyq import _kernels_py
from polyq.billiard import LiouvilleSampler, _arrays, _kernel_obs
from polyq.geometry import builtin
from polyq.observables import named_observable

try:
    from polyq import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def run_backend(mod, verts, normals, starts, T, spec):
    code, params, offsets = spec
    out = np.empty(len(starts))
    st = np.empty(len(starts), dtype=np.int32)
    t0 = time.perf_counter()
    mod.batch_time_average(verts, normals, starts, T, 1e-9, 10**7, code, params, offsets,
                           out, st)
    return time.perf_counter() - t0, out, st


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--T", type=float, default=100.0)
    args = ap.parse_args()

    cases = [("square", "cos2pix"), ("L-shape", "bump"), ("pi8-triangle", "region:disk")]
    print(f"{'polygon':<14}{'observable':<13}{'python s':>10}{'cython s':>10}{'speedup':>9}"
          f"{'max |diff|':>12}")
    for poly_name, obs_name in cases:
        poly = builtin(poly_name)
        obs = named_observable(poly, obs_name)
        verts, normals = _arrays(poly)
        sampler = LiouvilleSampler(poly, seed=1)
        starts = np.ascontiguousarray(sampler.draw(args.samples, sampler.rng(0)))
        spec = _kernel_obs(obs)
        tp, outp, stp = run_backend(_kernels_py, verts, normals, starts, args.T, spec)
        if _kernels_c is None:
            print(f"{poly_name:<14}{obs_name:<13}{tp:>10.3f}{'n/a':>10}")
            continue
        tc, outc, stc = run_backend(_kernels_c, verts, normals, starts, args.T, spec)
        ok = (stp == 0) & (stc == 0)
        diff = np.abs(outp[ok] - outc[ok]).max() if ok.any() else float("nan")
        print(f"{poly_name:<14}{obs_name:<13}{tp:>10.3f}{tc:>10.4f}{tp / tc:>9.0f}"
              f"{diff:>12.2e}")


if __name__ == "__main__":
    main()
