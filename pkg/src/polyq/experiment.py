"""Declarative experiments: mesh -> solve -> measure -> analyse -> classical.

Every stage writes its output under ``<output_dir>/stages`` with a file name
carrying the hash of the stage inputs (including upstream hashes).  A stage
whose output already exists is loaded instead of recomputed, so editing one
config field only re-runs the stages that depend on it.
"""
from __future__ import annotations

import copy
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__, kernels
from .billiard import lemma1_functional
from .errors import ConfigInvalid, PolyqError, StageFailed
from .ergodicity import (EPSILONS, MeasureSeries, auto_cutoffs, density_report,
                         extract_typical, key_bound_check, measure_series, quantum_variance)
from .fem import assemble, solve_lowest
from .geometry import BUILTINS, RationalPolygon, builtin, polygon_from_dict
from .mesh import TriangleMesh, build_mesh, mesh_quality
from .observables import IsotropicObservable, named_observable, observable_from_dict
from .store import digest, load_spectrum, save_spectrum, write_json

DEFAULTS = {
    "name": "experiment",
    "polygon": "square",
    "mesh": {"h": 1 / 32, "refine": 0},
    "solver": {"modes": 100, "seed": 0, "tol": 1e-8, "window": 160},
    "observables": ["region:left-half"],
    "analysis": {"cutoffs": "auto", "n_cutoffs": 8, "first": 30,
                 "epsilons": list(EPSILONS), "adapt_clusters": True},
    "classical": {"enabled": True, "T": [10.0, 100.0, 1000.0], "samples": 10000, "seed": 0},
    "output_dir": "polyq-run",
}

_SECTIONS = {"mesh", "solver", "analysis", "classical"}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigInvalid(where, "unknown field")
        if k in _SECTIONS and not path:
            if not isinstance(v, dict):
                raise ConfigInvalid(where, "must be an object")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _number(d: dict, key: str, path: str, lo=None, hi=None, integer=False,
            lo_open=False):
    v = d[key]
    where = f"{path}.{key}"
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(where, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigInvalid(where, f"expected an integer, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigInvalid(where, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigInvalid(where, f"must be <= {hi}")
    return int(v) if integer else float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigInvalid("", "config must be a JSON object")
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("", f"not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def __getitem__(self, key):
        return self.data[key]

    def polygon(self) -> RationalPolygon:
        p = self.data["polygon"]
        try:
            return builtin(p) if isinstance(p, str) else polygon_from_dict(p)
        except PolyqError as exc:
            raise ConfigInvalid("polygon", str(exc)) from None

    def observables(self, poly: RationalPolygon) -> list[IsotropicObservable]:
        out = []
        for i, o in enumerate(self.data["observables"]):
            try:
                out.append(named_observable(poly, o) if isinstance(o, str)
                           else observable_from_dict(poly, o))
            except (PolyqError, ValueError, KeyError, TypeError) as exc:
                raise ConfigInvalid(f"observables[{i}]", str(exc)) from None
        return out

    def validate(self) -> None:
        d = self.data
        if not isinstance(d["name"], str) or not d["name"]:
            raise ConfigInvalid("name", "must be a non-empty string")
        p = d["polygon"]
        if isinstance(p, str):
            if p.partition(":")[0] not in BUILTINS:
                raise ConfigInvalid("polygon", f"unknown builtin {p!r}; choose from {sorted(BUILTINS)}")
        elif not isinstance(p, dict):
            raise ConfigInvalid("polygon", "must be a builtin name or a polygon object")
        poly = self.polygon()
        m = d["mesh"]
        h = _number(m, "h", "mesh", lo=0, lo_open=True)
        if h >= poly.diameter:
            raise ConfigInvalid("mesh.h", f"must be below the polygon diameter {poly.diameter}")
        _number(m, "refine", "mesh", lo=0, hi=6, integer=True)
        s = d["solver"]
        _number(s, "modes", "solver", lo=1, hi=20000, integer=True)
        _number(s, "seed", "solver", lo=0, integer=True)
        _number(s, "tol", "solver", lo=0, hi=1e-4, lo_open=True)
        _number(s, "window", "solver", lo=10, integer=True)
        if not isinstance(d["observables"], list) or not d["observables"]:
            raise ConfigInvalid("observables", "must be a non-empty list")
        self.observables(poly)
        a = d["analysis"]
        cut = a["cutoffs"]
        if cut != "auto":
            if (not isinstance(cut, list) or not cut
                    or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in cut)):
                raise ConfigInvalid("analysis.cutoffs", "must be 'auto' or a list of numbers")
            if any(b <= a_ for a_, b in zip(cut, cut[1:])) or cut[0] <= 0:
                raise ConfigInvalid("analysis.cutoffs", "must be positive and increasing")
        _number(a, "n_cutoffs", "analysis", lo=2, hi=1000, integer=True)
        _number(a, "first", "analysis", lo=1, integer=True)
        eps = a["epsilons"]
        if (not isinstance(eps, list) or not eps
                or any(isinstance(e, bool) or not isinstance(e, (int, float)) or e <= 0
                       for e in eps)):
            raise ConfigInvalid("analysis.epsilons", "must be a list of positive numbers")
        if not isinstance(a["adapt_clusters"], bool):
            raise ConfigInvalid("analysis.adapt_clusters", "must be true or false")
        c = d["classical"]
        if not isinstance(c["enabled"], bool):
            raise ConfigInvalid("classical.enabled", "must be true or false")
        T = c["T"]
        if (not isinstance(T, list) or not T
                or any(isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0 for t in T)):
            raise ConfigInvalid("classical.T", "must be a list of positive durations")
        _number(c, "samples", "classical", lo=100, integer=True)
        _number(c, "seed", "classical", lo=0, integer=True)
        if not isinstance(d["output_dir"], str) or not d["output_dir"]:
            raise ConfigInvalid("output_dir", "must be a non-empty path")

    # -- stage keys ----------------------------------------------------------

    def stage_hashes(self) -> dict:
        d = self.data
        poly = self.polygon().to_dict()
        h = {}
        h["mesh"] = digest({"polygon": poly, "mesh": d["mesh"]})
        h["solve"] = digest({"up": h["mesh"], "solver": d["solver"]})
        for i, o in enumerate(d["observables"]):
            h[f"measure[{i}]"] = digest({"up": h["solve"], "obs": o,
                                         "adapt": d["analysis"]["adapt_clusters"]})
            an = {k: v for k, v in d["analysis"].items() if k != "adapt_clusters"}
            h[f"analysis[{i}]"] = digest({"up": h[f"measure[{i}]"], "analysis": an})
            if d["classical"]["enabled"]:
                h[f"classical[{i}]"] = digest({"polygon": poly, "obs": o,
                                               "classical": d["classical"]})
        return h


@dataclass
class RunReport:
    data: dict
    timings: dict
    path: str
    cached: list

    @property
    def summary(self) -> dict:
        return self.data["summary"]


def _versions() -> dict:
    return {"polyq": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "kernel_backend": kernels.BACKEND}


def _slug(obs: IsotropicObservable, i: int) -> str:
    label = (obs.label or obs.kind).replace(":", "-").replace("/", "-").replace(" ", "")
    return f"{i}-{label}"


def _series_from(path, target, qerr, adapted) -> MeasureSeries:
    s = MeasureSeries.from_csv(path)
    return MeasureSeries(s.values, s.energies, target, {}, qerr, adapted)


def run(config: ExperimentConfig, use_cache: bool = True) -> RunReport:
    """Execute all stages; returns the report (also written to report.json)."""
    d = config.data
    out = d["output_dir"]
    stages_dir = os.path.join(out, "stages")
    os.makedirs(stages_dir, exist_ok=True)
    hashes = config.stage_hashes()
    poly = config.polygon()
    observables = config.observables(poly)
    paths: dict[str, str] = {}
    timings: dict[str, float] = {}
    cached: list[str] = []
    summary: dict = {"observables": []}
    # output_dir is left out so that runs in different directories compare equal
    settings = {k: v for k, v in config.to_dict().items() if k != "output_dir"}
    report = {"name": d["name"], "config": settings, "versions": _versions(),
              "input_hashes": hashes, "paths": paths, "summary": summary, "status": "ok"}

    def stage(name, fname, compute):
        rel = os.path.join("stages", fname)
        full = os.path.join(out, rel)
        t0 = time.perf_counter()
        if use_cache and os.path.exists(full):
            cached.append(name)
        else:
            try:
                compute(full)
            except PolyqError as exc:
                report["status"] = "failed"
                report["failed_stage"] = name
                report["error"] = f"{type(exc).__name__}: {exc}"
                _write_report(out, report, timings, cached)
                raise StageFailed(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        paths[name] = rel
        return full

    # mesh
    mesh_holder = {}

    def do_mesh(path):
        mesh = build_mesh(poly, d["mesh"]["h"], d["mesh"]["refine"])
        mesh.save(path)

    mesh_path = stage("mesh", f"mesh-{hashes['mesh']}.json", do_mesh)
    mesh = TriangleMesh.load(mesh_path)
    mesh_holder["quality"] = mesh_quality(mesh).to_dict()

    def do_solve(path):
        s = d["solver"]
        spec = solve_lowest(assemble(mesh), s["modes"], seed=s["seed"], tol=s["tol"],
                            window=s["window"])
        save_spectrum(path, spec, poly)

    spec_path = stage("solve", f"spectrum-{hashes['solve']}.npz", do_solve)
    spectrum, _ = load_spectrum(spec_path)
    E = spectrum.eigenvalues
    summary["mesh"] = mesh_holder["quality"]
    summary["modes"] = int(spectrum.k)
    summary["E_max"] = float(E[-1])
    summary["max_residual"] = float(spectrum.residuals.max())

    a = d["analysis"]
    cutoffs = auto_cutoffs(E, a["n_cutoffs"], a["first"]) if a["cutoffs"] == "auto" \
        else np.array(a["cutoffs"], dtype=float)
    for i, obs in enumerate(observables):
        slug = _slug(obs, i)
        meta_holder = {}

        def do_measure(path, obs=obs):
            s = measure_series(spectrum, obs, adapt_clusters=a["adapt_clusters"])
            s.to_csv(path)
            write_json(path[:-4] + ".meta.json",
                       {"target": s.target, "quadrature_error": s.quadrature_error,
                        "adapted": s.adapted, "observable": s.observable})

        series_path = stage(f"measure[{i}]", f"series-{slug}-{hashes[f'measure[{i}]']}.csv",
                            do_measure)
        with open(series_path[:-4] + ".meta.json") as fh:
            meta_holder.update(json.load(fh))
        series = _series_from(series_path, meta_holder["target"],
                              meta_holder["quadrature_error"], meta_holder["adapted"])

        def do_analysis(path, series=series):
            curve = quantum_variance(series, cutoffs)
            typ = {str(eps): extract_typical(series, eps).to_dict() for eps in a["epsilons"]}
            write_json(path, {"curve": curve.to_dict(),
                              "density": density_report(series, a["epsilons"]),
                              "typical": typ})
            with open(path[:-5] + ".csv", "w") as fh:
                fh.write("E,N,V,running_mean\n")
                for e, n, v, m in zip(curve.energies, curve.counts, curve.variance,
                                      curve.running_mean):
                    fh.write(f"{float(e)!r},{int(n)},{float(v)!r},{float(m)!r}\n")

        an_path = stage(f"analysis[{i}]", f"analysis-{slug}-{hashes[f'analysis[{i}]']}.json",
                        do_analysis)
        with open(an_path) as fh:
            analysis = json.load(fh)
        curve = analysis["curve"]
        row = {
            "observable": obs.describe(),
            "target": series.target,
            "quadrature_error": series.quadrature_error,
            "V_top": curve["variance"][-1],
            "V_bottom": curve["variance"][0],
            "running_mean_top": curve["running_mean"][-1],
            "cutoff_top": curve["energies"][-1],
            "density": {str(r["epsilon"]): r["density_final"] for r in analysis["density"]},
            "chebyshev_holds": all(r["chebyshev"]["holds"] for r in analysis["density"]),
        }
        if d["classical"]["enabled"]:
            c = d["classical"]

            def do_classical(path, obs=obs):
                rows = [lemma1_functional(poly, obs, T, c["samples"], c["seed"]).to_dict()
                        for T in c["T"]]
                write_json(path, {"lemma1": rows})

            cl_path = stage(f"classical[{i}]",
                            f"classical-{slug}-{hashes[f'classical[{i}]']}.json", do_classical)
            with open(cl_path) as fh:
                lemma = json.load(fh)["lemma1"]
            row["lemma1"] = {repr(r["T"]): {"estimate": r["estimate"], "stderr": r["stderr"]}
                             for r in lemma}
            last = max(lemma, key=lambda r: r["T"])
            from .ergodicity import VarianceCurve

            vc = VarianceCurve(np.array(curve["energies"]), np.array(curve["variance"]),
                               np.array(curve["counts"]), np.array(curve["running_mean"]))
            allowance = 3.0 * series.quadrature_error + d["solver"]["tol"]
            row["key_bound"] = dict(key_bound_check(vc, last["key_bound"],
                                                    last["key_bound_stderr"], allowance),
                                    T=last["T"])
        summary["observables"].append(row)

    _write_report(out, report, timings, cached)
    return RunReport(report, timings, os.path.join(out, "report.json"), cached)


def _write_report(out, report, timings, cached) -> None:
    # Wall-clock data lives in a sidecar so that report.json is reproducible.
    report["paths"]["report"] = "report.json"
    report["paths"]["timings"] = "timings.json"
    write_json(os.path.join(out, "report.json"), report)
    write_json(os.path.join(out, "timings.json"),
               {"seconds": {k: round(v, 6) for k, v in timings.items()},
                "cached": cached})
