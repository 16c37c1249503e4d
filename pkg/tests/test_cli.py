import json

import numpy as np
import pytest

from sidmp.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from sidmp.errors import ConfigError
from sidmp.scenario import bundled_scenarios, load_scenario
from sidmp.simulate import read_trajectory_csv

SMALL = {
    "name": "small",
    "seed": 3,
    "systems": {"canonical": {"kind": "hopf"}},
    "graph": {"nodes": 3, "topology": "all_to_all", "gain": 1.0},
    "integrator": {"step": 0.01, "duration": 4.0,
                   "initial": {"canonical": {"kind": "uniform", "low": -1.0, "high": 1.0}}},
    "pipeline": [
        {"op": "simulate", "label": "run"},
        {"op": "sync_error", "label": "sync", "trajectory": "run", "window": 1.0,
         "expect": {"max": 1e-3}},
    ],
    "outputs": {"csv": True, "svg": True, "json": True, "summary": True},
}


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return str(path)


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    for name in ("vdp_hetero", "si_rdmp_amble", "hopf_certificates", "learn_demo"):
        assert name in names
        assert load_scenario(name).name == name


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", _write(tmp_path, SMALL), "--out-dir", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "PASS" in text and "wrote" in text
    files = {p.name for p in out.iterdir()}
    assert {"run.csv", "run_timeseries.svg", "run_phase.svg", "summary.json"} <= files
    traj = read_trajectory_csv(out / "run.csv")
    assert traj.x.shape == (401, 6) and traj.t[-1] == pytest.approx(4.0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 3 and [s["label"] for s in summary["steps"]] == ["run", "sync"]


def test_runs_are_byte_reproducible(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", cfg, "--out-dir", str(a)]) == EXIT_OK
    assert main(["simulate", cfg, "--out-dir", str(b)]) == EXIT_OK
    for path in a.iterdir():
        assert path.read_bytes() == (b / path.name).read_bytes(), path.name


def test_seed_override_changes_start(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "b"), "--seed", "11"]) == EXIT_OK
    x_a = read_trajectory_csv(tmp_path / "a" / "run.csv").x[0]
    x_b = read_trajectory_csv(tmp_path / "b" / "run.csv").x[0]
    assert not np.array_equal(x_a, x_b)


def test_certify_prints_table(tmp_path, capsys):
    code = main(["certify", "hopf_certificates", "--out-dir", str(tmp_path), "--samples", "256"])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert any(ln.startswith("hopf_transverse: PASS") and "(as expected)" in ln for ln in lines)
    assert any(ln.startswith("sync_weak: FAIL") and "(as expected)" in ln for ln in lines)
    assert any(ln.startswith("sync_strong: PASS") for ln in lines)
    cert = json.loads((tmp_path / "hopf_transverse.json").read_text())
    assert cert["n_samples"] == 256 + 128 and "sample-based" in cert["note"]


def test_learn_command(tmp_path, capsys):
    assert main(["learn", "learn_demo", "--out-dir", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "gaussian_fit_weights.json").read_text())
    assert len(doc["forcing"]["weights"]) == 10 and doc["fit"]["rank"] == 10
    assert "gaussian_fit" in capsys.readouterr().out


def test_empty_pipeline_warns_and_writes_nothing(tmp_path, caplog):
    out = tmp_path / "nothing"
    with caplog.at_level("WARNING"):
        assert main(["simulate", "empty_pipeline", "--out-dir", str(out)]) == EXIT_OK
    assert not out.exists()
    assert any("nothing to do" in r.message or "no steps" in r.message for r in caplog.records)


# errors ----------------------------------------------------------------------


def test_bad_json_reports_line_and_column(tmp_path, capsys):
    cfg = _write(tmp_path, '{\n  "name": "x",\n  "seed": ,\n}\n')
    assert main(["simulate", cfg]) == EXIT_CONFIG
    err = _error(capsys)
    assert err["error"] == "ConfigError" and err["where"].endswith("cfg.json:3:11")


def test_unknown_field_is_located(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL))
    doc["systems"]["canonical"]["omgea"] = 3.0
    assert main(["simulate", _write(tmp_path, doc)]) == EXIT_CONFIG
    assert _error(capsys)["where"] == "systems.canonical.omgea"


@pytest.mark.parametrize("path,value,where", [
    (("systems", "canonical", "rho"), -1.0, "systems.canonical"),
    (("integrator", "step"), 0.0, "integrator.step"),
    (("graph", "nodes"), 0, "graph.nodes"),
])
def test_invalid_values_are_located(tmp_path, capsys, path, value, where):
    doc = json.loads(json.dumps(SMALL))
    node = doc
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    assert main(["simulate", _write(tmp_path, doc)]) == EXIT_CONFIG
    assert _error(capsys)["where"].startswith(where)


def test_unknown_op_and_duplicate_labels(tmp_path):
    doc = json.loads(json.dumps(SMALL))
    doc["pipeline"].append({"op": "dance", "label": "x"})
    with pytest.raises(ConfigError) as info:
        load_scenario(_write(tmp_path, doc))
    assert info.value.where.startswith("pipeline")
    doc = json.loads(json.dumps(SMALL))
    doc["pipeline"].append({"op": "simulate", "label": "run"})
    with pytest.raises(ConfigError):
        load_scenario(_write(tmp_path, doc, "dup.json"))


def test_missing_file_lists_bundled_scenarios(capsys):
    assert main(["simulate", "no_such_scenario"]) == EXIT_CONFIG
    assert "vdp_hetero" in _error(capsys)["message"]


def test_gait_needs_transformations(tmp_path, capsys):
    assert main(["gait", _write(tmp_path, SMALL), "--out-dir", str(tmp_path / "g")]) == EXIT_CONFIG
    assert _error(capsys)["error"] == "ConfigError"


def test_negative_samples_rejected(capsys):
    assert main(["certify", "hopf_certificates", "--samples", "0"]) == EXIT_CONFIG
    assert _error(capsys)["where"] == "--samples"


def test_divergence_exit_code(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL))
    doc["systems"]["canonical"] = {"kind": "vanderpol", "omega": 6.0, "mu": 2.0}
    doc["integrator"]["initial"] = {"canonical": [3.0, 3.0, 3.0, 3.0, 3.0, 3.0]}
    doc["pipeline"] = [{"op": "simulate", "label": "run"}]
    assert main(["simulate", _write(tmp_path, doc), "--out-dir", str(tmp_path / "d")]) == EXIT_DIVERGED
    err = _error(capsys)
    assert err["error"] == "DivergenceError" and err["last_time"] > 0
