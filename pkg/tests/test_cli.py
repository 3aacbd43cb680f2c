import csv
import json

import pytest

from mmharnack import experiments
from mmharnack.cli import main
from mmharnack.errors import ConfigInvalid
from mmharnack.graph import load_graph

SMALL = {
    "seed": 7,
    "suite": [
        {"name": "geo", "space": {"family": "torus", "params": {"a": 16, "b": 16}},
         "scenario": "geometry"},
        {"name": "poin", "space": [{"family": "path", "params": {"n": 5}}],
         "scenario": "poincare", "params": {"centers": [2], "radii": [2.0, 0.5], "zero_bv": True}},
        {"name": "flow", "space": {"family": "torus", "params": {"a": 8, "b": 8}},
         "scenario": "cauchy", "p": [1.5, 2],
         "params": {"T": 2.0, "steps": 4, "u0": {"center": "middle", "random": True}}},
        {"name": "phi", "space": {"family": "torus", "params": {"a": 24, "b": 24}},
         "scenario": "harnack", "p": [2],
         "params": {"x0": "middle", "radii": [2], "elliptic": True}},
        {"name": "holder", "space": {"family": "grid", "params": {"a": 33, "b": 33}},
         "scenario": "dirichlet", "params": {"R": 32, "x0": "middle"}},
        {"name": "dirac", "space": {"family": "torus", "params": {"a": 16, "b": 16}},
         "scenario": "dirac", "params": {"radii": [2], "forward": False}},
        {"name": "dg", "space": {"family": "path", "params": {"n": 2}},
         "scenario": "degiorgi", "params": {"count": 3}},
    ],
}


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    code = main(["run", "--config", str(cfg), "--out", str(root / "out")])
    return code, root


def test_small_suite_runs_clean(small_run):
    code, root = small_run
    report = json.loads((root / "out" / "report.json").read_text())
    assert code == 0 and report["errors"] == []
    assert {r["scenario"] for r in report["results"]} == set(experiments.SCENARIOS)
    assert report["config"]["seed"] == 7


def test_geometry_rows(small_run):
    rows = read_csv(small_run[1] / "out" / "constants.csv")
    kinds = {r["kind"] for r in rows if r["family"] == "torus"}
    assert {"doubling", "Q", "alpha", "beta"} <= kinds
    poin = [r for r in rows if r["kind"] == "poincare"]
    assert len(poin) == 1 and float(poin[0]["oracle_gap"]) <= 0.05


def test_skips_are_warned(small_run):
    report = json.loads((small_run[1] / "out" / "report.json").read_text())
    assert any("singleton ball" in w for w in report["warnings"])
    assert not any("Insufficient" in w for w in report["warnings"])


def test_sweep_and_diagnostics(small_run):
    out = small_run[1] / "out"
    header = (out / "harnack_sweep.csv").read_text().splitlines()[0]
    assert header == "family,params,p,x0,r,t0,h,slices_minus,slices_plus,H,He,kappa"
    rows = read_csv(out / "harnack_sweep.csv")
    assert len(rows) == 1 and float(rows[0]["H"]) >= 1 and rows[0]["He"]
    diag = sorted(out.glob("diagnostics_*.csv"))
    assert len(diag) == 2
    assert diag[0].read_text().startswith("step,t,mass,energy,dissipation,iterations,residual\n")


def test_plotdata(small_run, tmp_path):
    paths = experiments.emit_plotdata(str(small_run[1] / "out" / "report.json"), tmp_path)
    names = {p.rsplit("/", 1)[-1] for p in paths}
    assert names == set(experiments.PLOT_TABLES)
    assert len(read_csv(tmp_path / "mass_energy.csv")) == 10
    assert len(read_csv(tmp_path / "degiorgi.csv")) == 3
    assert len(read_csv(tmp_path / "holder_decay.csv")) == 3


def test_empty_report_gives_headers(tmp_path):
    experiments.emit_plotdata({"results": []}, tmp_path)
    for name, (_, cols) in experiments.PLOT_TABLES.items():
        assert (tmp_path / name).read_text() == ",".join(cols) + "\n"


def test_repeatable_and_thread_safe(tmp_path):
    cfg = {"seed": 3, "suite": SMALL["suite"][1:3]}
    experiments.run(cfg, tmp_path / "a")
    experiments.run(cfg, tmp_path / "b")
    experiments.run(cfg, tmp_path / "c", threads=3)
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    assert json.loads(a)["results"] == json.loads((tmp_path / "c" / "report.json").read_bytes())["results"]


def test_seed_override_changes_random_items(tmp_path):
    cfg = {"seed": 1, "suite": [SMALL["suite"][-1]]}
    a = experiments.run(cfg, tmp_path / "a")
    b = experiments.run(cfg, tmp_path / "b", seed=2)
    assert a["results"][0]["records"] != b["results"][0]["records"]
    assert b["config"]["seed"] == 2


def test_overrides_are_echoed(tmp_path):
    rep = experiments.run({"seed": 0, "suite": [SMALL["suite"][2]]}, tmp_path,
                          tolerance=1e-9, max_iterations=500)
    assert rep["overrides"] == {"gradient_tolerance": 1e-9, "max_iterations": 500}


@pytest.mark.parametrize("cfg", [
    {"scenario": "nope", "space": {"family": "path", "params": {"n": 3}}},
    {"scenario": "geometry", "space": {"family": "moebius"}},
    {"scenario": "geometry", "space": {"family": "path", "file": "x.json"}},
    {"scenario": "geometry", "space": {"family": "path", "params": {"n": 3}}, "p": [1]},
    {"scenario": "harnack", "space": {"family": "path", "params": {"n": 3}}},
    {"scenario": "geometry", "space": {"family": "path", "params": {"n": 3}},
     "solver": {"shrink": 2}},
    {"suite": []},
    {"seed": -1, "scenario": "geometry", "space": {"family": "path", "params": {"n": 3}}},
])
def test_bad_configs(cfg):
    with pytest.raises(ConfigInvalid):
        experiments.load_config(cfg)


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert "config error" in capsys.readouterr().err


def test_hard_error_exit_code(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "harnack",
                               "space": {"family": "path", "params": {"n": 6}},
                               "params": {"x0": "nowhere", "radii": [1]}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert "nowhere" in report["errors"][0]


def test_under_resolution_is_a_warning(tmp_path):
    rep = experiments.run({"scenario": "harnack",
                           "space": {"family": "torus", "params": {"a": 8, "b": 8}},
                           "params": {"radii": [1], "slices": 1}}, tmp_path)
    assert rep["errors"] == [] and any("UnderResolved" in w for w in rep["warnings"])


def test_graph_file_space(tmp_path):
    path = tmp_path / "g.json"
    assert main(["generate", "star", "k=3", "n=4", "--out", str(path)]) == 0
    assert load_graph(path).n == 13
    rep = experiments.run({"scenario": "poincare", "space": {"file": str(path)},
                           "params": {"radii": [2.0]}}, tmp_path / "o")
    assert rep["errors"] == [] and rep["results"][0]["family"] == "file"


def test_generate_to_stdout(capsys):
    assert main(["generate", "torus", "a=4", "b=4"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["vertices"]) == 16 and len(data["edges"]) == 32


def test_generate_bad_params(capsys):
    assert main(["generate", "path", "n=1"]) == 1
    assert main(["generate", "path", "n"]) == 1


def test_emit_cli(small_run, tmp_path, capsys):
    assert main(["emit-plotdata", str(small_run[1] / "out" / "report.json"),
                 "--out", str(tmp_path)]) == 0
    assert "H_vs_r.csv" in capsys.readouterr().out


def test_presets_are_valid():
    for name in experiments.PRESETS:
        suite = experiments.load_config(name)
        assert suite["suite"] and isinstance(suite["seed"], int)
