"""Command line entry point: ``polyq run|mesh|solve|measure|variance|classical``.

Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

from .errors import ConfigInvalid, PolyqError, StageFailed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


class _ConfigError(Exception):
    pass


def _polygon(spec):
    from .geometry import load_polygon

    try:
        return load_polygon(spec)
    except PolyqError as exc:
        raise _ConfigError(f"--polygon: {exc}") from None


def _observable(poly, spec):
    from .observables import named_observable, observable_from_dict

    try:
        if spec.lstrip().startswith("{"):
            return observable_from_dict(poly, json.loads(spec))
        return named_observable(poly, spec)
    except (PolyqError, ValueError, KeyError) as exc:
        raise _ConfigError(f"--observable: {exc}") from None


def _emit(obj, out):
    from .store import canonical_json

    text = canonical_json(obj)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args):
    from .experiment import ExperimentConfig, run

    cfg = ExperimentConfig.load(args.config)
    if args.output_dir:
        data = cfg.to_dict()
        data["output_dir"] = args.output_dir
        cfg = ExperimentConfig.from_dict(data)
    report = run(cfg, use_cache=not args.no_cache)
    print(report.path)


def cmd_mesh(args):
    from .mesh import build_mesh, mesh_quality

    poly = _polygon(args.polygon)
    mesh = build_mesh(poly, args.h, args.refine)
    mesh.save(args.out)
    _emit(mesh_quality(mesh).to_dict(), None)


def cmd_solve(args):
    from .fem import assemble, solve_lowest
    from .mesh import TriangleMesh, build_mesh
    from .store import save_spectrum

    poly = _polygon(args.polygon)
    mesh = TriangleMesh.load(args.mesh) if args.mesh else build_mesh(poly, args.h, args.refine)
    spec = solve_lowest(assemble(mesh), args.modes, seed=args.seed, tol=args.tol)
    save_spectrum(args.out, spec, poly)
    _emit({"modes": spec.k, "E_min": float(spec.eigenvalues[0]),
           "E_max": float(spec.eigenvalues[-1]),
           "max_residual": float(spec.residuals.max()),
           "orthonormality_error": spec.orthonormality_error}, None)


def cmd_measure(args):
    from .ergodicity import measure_series
    from .geometry import named_region
    from .observables import IsotropicObservable
    from .store import load_spectrum

    spec, poly = load_spectrum(args.spectrum)
    if poly is None:
        raise _ConfigError("--spectrum: file carries no polygon")
    if args.region:
        try:
            obs = IsotropicObservable.indicator(named_region(poly, args.region))
        except PolyqError as exc:
            raise _ConfigError(f"--region: {exc}") from None
    else:
        obs = _observable(poly, args.observable)
    series = measure_series(spec, obs, adapt_clusters=not args.raw_basis)
    series.to_csv(args.out)


def _floats(text, flag):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise _ConfigError(f"{flag}: expected comma separated numbers") from None


def cmd_variance(args):
    from .ergodicity import (MeasureSeries, auto_cutoffs, density_report, extract_typical,
                             quantum_variance)

    series = MeasureSeries.from_csv(args.series)
    if len(series) == 0:
        raise _ConfigError("--series: empty file")
    cutoffs = auto_cutoffs(series.energies) if args.cutoffs == "auto" \
        else _floats(args.cutoffs, "--cutoffs")
    eps = _floats(args.epsilons, "--epsilons")
    if not eps or min(eps) <= 0:
        raise _ConfigError("--epsilons: must be positive")
    curve = quantum_variance(series, cutoffs)
    typical = {str(e): extract_typical(series, e).to_dict() for e in eps}
    _emit({"curve": curve.to_dict(), "typical": typical,
           "density": density_report(series, eps), "target": series.target}, args.out)


def cmd_classical(args):
    from .billiard import LiouvilleSampler, PhasePoint, evolve, lemma1_functional

    poly = _polygon(args.polygon)
    obs = _observable(poly, args.observable)
    res = lemma1_functional(poly, obs, args.T, args.samples, args.seed,
                            threads=args.threads)
    out = {"estimate": res.estimate, "stderr": res.stderr, "abar": res.abar,
           "key_bound": res.key_bound, "key_bound_stderr": res.key_bound_stderr,
           "vertex_discards": res.vertex_discards, "T": res.T, "samples": res.samples}
    if args.dump_trajectory:
        if args.start:
            start = _floats(args.start, "--start")
            if len(start) != 3:
                raise _ConfigError("--start: expected x,y,angle")
            p = PhasePoint.from_angle(start[:2], start[2] / (2 * math.pi))
        else:
            sampler = LiouvilleSampler(poly, args.seed)
            s = sampler.draw(1, sampler.rng(0))[0]
            p = PhasePoint.make(s[:2], s[2:])
        _, traj = evolve(poly, p, args.T)
        traj.to_csv(args.dump_trajectory)
        out["trajectory"] = args.dump_trajectory
    _emit(out, args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polyq", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mesh", help="triangulate a polygon")
    p.add_argument("--polygon", required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--refine", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("solve", help="lowest Dirichlet eigenpairs")
    p.add_argument("--polygon", required=True)
    p.add_argument("--h", type=float, default=1 / 32)
    p.add_argument("--refine", type=int, default=0)
    p.add_argument("--mesh", help="use a mesh JSON instead of --h/--refine")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("measure", help="per-mode matrix elements as CSV")
    p.add_argument("--spectrum", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--region")
    g.add_argument("--observable")
    p.add_argument("--raw-basis", action="store_true",
                   help="keep the solver basis inside degenerate clusters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("variance", help="quantum variance and typical subsequences")
    p.add_argument("--series", required=True)
    p.add_argument("--cutoffs", default="auto")
    p.add_argument("--epsilons", default="0.1,0.05,0.02")
    p.add_argument("--out")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("classical", help="Monte Carlo time-average statistics")
    p.add_argument("--polygon", required=True)
    p.add_argument("--observable", required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--dump-trajectory", metavar="CSV")
    p.add_argument("--start", help="x,y,angle_radians for the dumped trajectory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classical)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigInvalid, _ConfigError) as exc:
        print(f"polyq: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailed as exc:
        print(f"polyq: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except PolyqError as exc:
        print(f"polyq: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError) as exc:
        print(f"polyq: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
