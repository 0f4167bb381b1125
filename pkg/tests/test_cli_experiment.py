import csv
import json
import os

import pytest

from polyq.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from polyq.errors import ConfigInvalid, StageFailed
from polyq.experiment import DEFAULTS, ExperimentConfig, run

SMALL = {
    "name": "small",
    "polygon": "square",
    "mesh": {"h": 1 / 16},
    "solver": {"modes": 60},
    "observables": ["region:left-half", "cos2pix"],
    "analysis": {"n_cutoffs": 4, "first": 10},
    "classical": {"T": [5.0, 20.0], "samples": 200},
}


def small(tmp_path, **over):
    d = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k].update(v)
        else:
            d[k] = v
    d["output_dir"] = str(tmp_path)
    return ExperimentConfig.from_dict(d)


# -- config ---------------------------------------------------------------------------

def test_defaults_valid_and_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict({})
    assert cfg.to_dict() == DEFAULTS
    again = ExperimentConfig.from_dict(json.loads(cfg.dumps()))
    assert again.dumps() == cfg.dumps()
    p = tmp_path / "c.json"
    p.write_text(small(tmp_path).dumps())
    assert ExperimentConfig.load(p).to_dict() == small(tmp_path).to_dict()


@pytest.mark.parametrize("patch,field", [
    ({"polygon": "heptagon"}, "polygon"),
    ({"mesh": {"h": -1}}, "mesh.h"),
    ({"mesh": {"h": 5.0}}, "mesh.h"),
    ({"mesh": {"hh": 0.1}}, "mesh.hh"),
    ({"mesh": {"refine": 1.5}}, "mesh.refine"),
    ({"solver": {"modes": 0}}, "solver.modes"),
    ({"solver": {"tol": "tight"}}, "solver.tol"),
    ({"observables": ["cos2pix", "no-such-thing"]}, "observables[1]"),
    ({"observables": []}, "observables"),
    ({"analysis": {"cutoffs": [3, 2]}}, "analysis.cutoffs"),
    ({"analysis": {"epsilons": [0.1, -1]}}, "analysis.epsilons"),
    ({"classical": {"samples": 50}}, "classical.samples"),
    ({"classical": {"T": []}}, "classical.T"),
    ({"bogus": 1}, "bogus"),
    ({"mesh": 3}, "mesh"),
])
def test_config_errors_name_field(patch, field):
    d = json.loads(json.dumps(SMALL))
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k].update(v)
        else:
            d[k] = v
    with pytest.raises(ConfigInvalid) as info:
        ExperimentConfig.from_dict(d)
    assert info.value.field == field


def test_polygon_object_config():
    poly = {"vertices": [[0, 0], [2, 0], [0, 2]], "angles": ["1/2", "1/4", "1/4"]}
    cfg = ExperimentConfig.from_dict({"polygon": poly, "mesh": {"h": 0.1}})
    assert cfg.polygon().area == pytest.approx(2.0)


def changed(a, b):
    ha, hb = a.stage_hashes(), b.stage_hashes()
    assert ha.keys() == hb.keys()
    return {k for k in ha if ha[k] != hb[k]}


def test_stage_hash_locality(tmp_path):
    base = small(tmp_path)
    all_measure = {"measure[0]", "measure[1]", "analysis[0]", "analysis[1]"}
    assert changed(base, small(tmp_path, solver={"seed": 3})) == {"solve"} | all_measure
    assert changed(base, small(tmp_path, mesh={"h": 1 / 20})) == {"mesh", "solve"} | all_measure
    assert changed(base, small(tmp_path, classical={"T": [5.0]})) == {"classical[0]",
                                                                     "classical[1]"}
    assert changed(base, small(tmp_path, observables=["region:left-half", "bump"])) == {
        "measure[1]", "analysis[1]", "classical[1]"}
    assert changed(base, small(tmp_path, analysis={"epsilons": [0.2]})) == {"analysis[0]",
                                                                          "analysis[1]"}
    assert changed(base, small(tmp_path, analysis={"adapt_clusters": False})) == all_measure
    assert changed(base, small(tmp_path / "elsewhere")) == set()
    assert changed(base, small(tmp_path, polygon="rectangle")) == set(base.stage_hashes())


# -- run ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small(out)
    return cfg, run(cfg)


def test_report_contents(small_run):
    cfg, rep = small_run
    out = cfg["output_dir"]
    for rel in rep.data["paths"].values():
        assert os.path.exists(os.path.join(out, rel))
    assert rep.data["status"] == "ok"
    assert rep.data["input_hashes"] == cfg.stage_hashes()
    s = rep.summary
    lh, cos = s["observables"]
    assert lh["density"]["0.05"] == 1.0
    assert lh["V_top"] < 1e-20
    assert all(r["chebyshev_holds"] for r in s["observables"])
    assert set(cos["lemma1"]) == {"5.0", "20.0"}
    assert cos["key_bound"]["status"] in ("pass", "warn")
    assert "seconds" in json.load(open(os.path.join(out, "timings.json")))


def test_plot_data_is_tidy_csv(small_run):
    cfg, rep = small_run
    out = cfg["output_dir"]
    series = os.path.join(out, rep.data["paths"]["measure[1]"])
    rows = list(csv.reader(open(series)))
    assert rows[0] == ["n", "E_n", "mu_n", "target"]
    assert len(rows) == 61
    curve = os.path.join(out, rep.data["paths"]["analysis[1]"])[:-5] + ".csv"
    rows = list(csv.reader(open(curve)))
    assert rows[0] == ["E", "N", "V", "running_mean"]
    assert len(rows) == 5


def test_rerun_is_cached_and_identical(small_run):
    cfg, rep = small_run
    path = rep.path
    before = open(path, "rb").read()
    again = run(cfg)
    assert set(again.cached) == set(cfg.stage_hashes())
    assert open(path, "rb").read() == before


def test_edit_reruns_only_affected_stages(small_run):
    cfg, _ = small_run
    d = cfg.to_dict()
    d["classical"]["T"] = [5.0, 20.0, 40.0]
    rep = run(ExperimentConfig.from_dict(d))
    recomputed = set(cfg.stage_hashes()) - set(rep.cached)
    assert recomputed == {"classical[0]", "classical[1]"}


def test_uncached_runs_in_two_places_are_byte_identical(small_run, tmp_path):
    cfg, _ = small_run
    reps = []
    for sub in ("a", "b"):
        d = cfg.to_dict()
        d["output_dir"] = str(tmp_path / sub)
        reps.append(run(ExperimentConfig.from_dict(d), use_cache=False))
    a, b = reps
    assert a.cached == b.cached == []
    assert open(a.path, "rb").read() == open(b.path, "rb").read()
    for name, rel in a.data["paths"].items():
        if name == "timings":
            continue
        x = open(os.path.join(tmp_path, "a", rel), "rb").read()
        assert x == open(os.path.join(tmp_path, "b", rel), "rb").read(), name


def test_stage_failure_reported(tmp_path):
    cfg = small(tmp_path, solver={"modes": 5000})
    with pytest.raises(StageFailed) as info:
        run(cfg)
    assert info.value.stage == "solve"
    rep = json.load(open(tmp_path / "report.json"))
    assert rep["status"] == "failed"
    assert rep["failed_stage"] == "solve"
    assert "measure[0]" not in rep["paths"]


def test_square_left_half_full_density(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "polygon": "square", "mesh": {"h": 1 / 64}, "solver": {"modes": 200},
        "observables": ["region:left-half"], "classical": {"enabled": False},
        "output_dir": str(tmp_path)})
    rep = run(cfg)
    assert rep.summary["observables"][0]["density"]["0.05"] == 1.0


# -- command line ----------------------------------------------------------------------

def write_cfg(tmp_path, d):
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_cli_run_and_exit_codes(tmp_path, capsys):
    d = dict(SMALL, output_dir=str(tmp_path / "out"))
    d["classical"] = {"enabled": False}
    assert main(["run", "--config", write_cfg(tmp_path, d)]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("report.json")
    bad = dict(d, polygon="heptagon")
    assert main(["run", "--config", write_cfg(tmp_path, bad)]) == EXIT_CONFIG
    assert "polygon" in capsys.readouterr().err
    big = dict(d, solver={"modes": 5000})
    assert main(["run", "--config", write_cfg(tmp_path, big), "--no-cache"]) == EXIT_STAGE
    assert main(["run"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_cli_single_stages(tmp_path, capsys):
    mesh = tmp_path / "m.json"
    assert main(["mesh", "--polygon", "L-shape", "--h", "0.25", "--refine", "1",
                 "--out", str(mesh)]) == EXIT_OK
    q = json.loads(capsys.readouterr().out)
    assert q["min_angle"] >= 15.0
    assert set(json.load(open(mesh))) >= {"nodes", "triangles", "boundary_nodes"}

    spec = tmp_path / "s.npz"
    assert main(["solve", "--polygon", "L-shape", "--mesh", str(mesh), "--modes", "30",
                 "--out", str(spec)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["modes"] == 30 and info["max_residual"] <= 1e-8

    series = tmp_path / "mu.csv"
    assert main(["measure", "--spectrum", str(spec), "--region", "left-half",
                 "--out", str(series)]) == EXIT_OK
    assert main(["measure", "--spectrum", str(spec), "--region", "nowhere",
                 "--out", str(series)]) == EXIT_CONFIG
    assert main(["measure", "--spectrum", str(spec), "--observable", "bump",
                 "--out", str(series)]) == EXIT_OK
    assert series.read_text().startswith("n,E_n,mu_n,target\n")

    var = tmp_path / "v.json"
    assert main(["variance", "--series", str(series), "--out", str(var)]) == EXIT_OK
    v = json.load(open(var))
    assert set(v) == {"curve", "typical", "density", "target"}
    assert all(r["chebyshev"]["holds"] for r in v["density"])
    assert main(["variance", "--series", str(series), "--epsilons", "0,1"]) == EXIT_CONFIG

    traj = tmp_path / "t.csv"
    cl = tmp_path / "c.json"
    assert main(["classical", "--polygon", "square", "--observable", "cos2pix", "--T", "10",
                 "--samples", "200", "--dump-trajectory", str(traj), "--start",
                 "0.3,0.4,0.7", "--out", str(cl)]) == EXIT_OK
    c = json.load(open(cl))
    assert c["samples"] == 200 and c["trajectory"] == str(traj)
    assert traj.read_text().count("\n") > 2
    assert main(["classical", "--polygon", "square", "--observable", "cos2pix", "--T", "10",
                 "--samples", "10"]) == EXIT_CONFIG
    assert main(["solve", "--polygon", "square", "--h", "0.25", "--modes", "50",
                 "--out", str(spec)]) == EXIT_STAGE
