import json
from pathlib import Path

import pytest

SMALL = {
    "seed": 11,
    "model": {"kind": "compact_bump"},
    "grid": {"radius": 16.0, "spacing": 0.25},
    "simulation": {"n_reps": 2},
    "diagnostics": {"n_reps": 120, "dyadic_max_exponent": 4, "generic_lags": [3.0, 5.0, 11.0], "paddings": [1.0, 2.0]},
}


@pytest.fixture
def config_file(write_config):
    return write_config(SMALL)


def _simulate(runner, config_file, out):
    result = runner.invoke(args=["simulate", "--config", config_file, "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def test_simulate_writes_fields_and_manifest(runner, config_file, tmp_path):
    run = _simulate(runner, config_file, tmp_path / "run")
    assert (run / "fields" / "field_0000.csv").is_file()
    assert (run / "fields" / "field_0001.json").is_file()
    assert (run / "simulate" / "summary.json").is_file()
    manifest = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
    assert "fields/field_0001.csv" in manifest["outputs"]
    assert manifest["stages"]["simulate"]["flags"]["exact"] is True
    resolved = json.loads((run / "config.resolved.json").read_text(encoding="utf-8"))
    assert resolved["seed"] == 11
    assert "output_dir" not in resolved


def test_same_config_gives_identical_fields(runner, config_file, tmp_path):
    first = _simulate(runner, config_file, tmp_path / "a")
    second = _simulate(runner, config_file, tmp_path / "b")
    for name in ("field_0000.csv", "field_0001.json"):
        assert (first / "fields" / name).read_bytes() == (second / "fields" / name).read_bytes()
    a = json.loads((first / "manifest.json").read_text(encoding="utf-8"))
    b = json.loads((second / "manifest.json").read_text(encoding="utf-8"))
    assert a["config_digest"] == b["config_digest"]
    assert a["outputs"] == b["outputs"]


def test_default_run_dir_uses_digest(runner, app, config_file):
    result = runner.invoke(args=["simulate", "--config", config_file])
    assert result.exit_code == 0, result.output
    runs = list(Path(app.config["RUNS_ROOT"]).iterdir())
    assert len(runs) == 1
    assert len(runs[0].name) == 12


def test_zero_reps_is_an_empty_run(runner, config_file, tmp_path):
    result = runner.invoke(args=["simulate", "--config", config_file, "--reps", "0", "--out", str(tmp_path / "r")])
    assert result.exit_code == 3
    assert "empty run" in result.output


def test_invalid_config_exits_with_two(runner, write_config, tmp_path):
    path = write_config({"grid": {"spacing": -1}}, name="bad.json")
    result = runner.invoke(args=["simulate", "--config", path, "--out", str(tmp_path / "r")])
    assert result.exit_code == 2
    assert "grid.spacing" in result.output


def test_bad_thread_count_rejected(runner, config_file, tmp_path):
    result = runner.invoke(args=["simulate", "--config", config_file, "--threads", "0", "--out", str(tmp_path / "r")])
    assert result.exit_code == 2


def test_failures_are_logged_to_error_file(runner, app, tmp_path):
    runner.invoke(args=["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "r")])
    log = Path(app.config["DATA_ROOT"]) / "logs" / "maxstab_errors.log"
    assert "simulate" in log.read_text(encoding="utf-8")


def test_classify_from_run(runner, config_file, tmp_path):
    run = _simulate(runner, config_file, tmp_path / "run")
    result = runner.invoke(args=["classify", "--run", str(run)])
    assert result.exit_code == 0, result.output
    payload = json.loads((run / "classify" / "verdicts.json").read_text(encoding="utf-8"))
    assert payload["source"] == "run"
    assert payload["count"] > 0
    assert {p["labels"]["integral"] for p in payload["paths"]} == {"dissipative"}


def test_classify_from_model_keeps_sampled_paths(runner, config_file, tmp_path):
    run = tmp_path / "sampled"
    result = runner.invoke(args=["classify", "--config", config_file, "--reps", "5", "--out", str(run)])
    assert result.exit_code == 0, result.output
    sampled = run / "classify" / "paths.json"
    assert sampled.is_file()
    again = runner.invoke(args=["classify", "--config", config_file, "--paths", str(sampled), "--out", str(tmp_path / "p")])
    assert again.exit_code == 0, again.output
    payload = json.loads((tmp_path / "p" / "classify" / "verdicts.json").read_text(encoding="utf-8"))
    assert payload["source"] == "paths"
    assert payload["total"] == 5


def test_paths_and_run_conflict(runner, config_file, tmp_path):
    run = _simulate(runner, config_file, tmp_path / "run")
    result = runner.invoke(args=["classify", "--run", str(run), "--paths", str(tmp_path / "x.json")])
    assert result.exit_code == 2
    result = runner.invoke(args=["classify", "--run", str(run), "--seed", "3"])
    assert result.exit_code == 2


def test_classify_run_without_fields(runner, tmp_path, config_file):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(args=["classify", "--run", str(empty), "--config", config_file])
    assert result.exit_code == 3


def test_decompose_run(runner, config_file, tmp_path):
    run = _simulate(runner, config_file, tmp_path / "run")
    result = runner.invoke(args=["decompose", "--run", str(run), "--axis", "hopf"])
    assert result.exit_code == 0, result.output
    folder = run / "decompose" / "hopf"
    assert (folder / "rep_0000_part1.csv").is_file()
    assert (folder / "rep_0001_part2.csv").is_file()
    summary = json.loads((folder / "summary.json").read_text(encoding="utf-8"))
    assert summary["reps"][0]["counts"]["part1"] == 0
    assert summary["reps"][0]["m3_identity_gap"] < 1e-15
    assert summary["independence"]["n_reps"] == 2
    assert summary["m3_round_trip"] is None


def test_decompose_resimulates_from_extracted_atoms(runner, write_config, tmp_path):
    config = write_config({**SMALL, "classifier": {"resimulate": 3}}, name="resim.json")
    run = tmp_path / "resim"
    result = runner.invoke(args=["decompose", "--config", config, "--out", str(run)])
    assert result.exit_code == 0, result.output
    summary = json.loads((run / "decompose" / "hopf" / "summary.json").read_text(encoding="utf-8"))
    trip = summary["m3_round_trip"]
    assert trip["n_source"] == 2
    assert trip["n_resimulated"] == 3
    assert trip["lag"] == 1.0
    assert 0.0 <= trip["ks"] <= 1.0


def test_decompose_from_config_matches_simulate(runner, config_file, tmp_path):
    simulated = _simulate(runner, config_file, tmp_path / "sim")
    result = runner.invoke(args=["decompose", "--config", config_file, "--out", str(tmp_path / "dec")])
    assert result.exit_code == 0, result.output
    name = "field_0000.csv"
    assert (simulated / "fields" / name).read_bytes() == (tmp_path / "dec" / "fields" / name).read_bytes()


def test_diagnose_writes_report_and_curves(runner, config_file, tmp_path):
    run = tmp_path / "diag"
    result = runner.invoke(args=["diagnose", "--config", config_file, "--out", str(run)])
    assert result.exit_code == 0, result.output
    assert "ergodic: supported" in result.output
    report = json.loads((run / "diagnostics" / "report.json").read_text(encoding="utf-8"))
    assert set(report["verdicts"]) == {"ergodic", "mixing", "m3"}
    assert (run / "diagnostics" / "curves" / "min_expectation.csv").is_file()


def test_report_verifies_digests(runner, config_file, tmp_path):
    run = _simulate(runner, config_file, tmp_path / "run")
    assert runner.invoke(args=["classify", "--run", str(run)]).exit_code == 0
    assert runner.invoke(args=["decompose", "--run", str(run)]).exit_code == 0
    result = runner.invoke(args=["report", "--run", str(run)])
    assert result.exit_code == 0, result.output
    text = (run / "report" / "report.txt").read_text(encoding="utf-8")
    assert "Simulation" in text
    assert "Path classification" in text
    assert "Decomposition (hopf)" in text
    assert json.loads((run / "report" / "plots.json").read_text(encoding="utf-8")) == {"plots": []}


def test_report_detects_tampering(runner, config_file, tmp_path):
    run = _simulate(runner, config_file, tmp_path / "run")
    target = run / "fields" / "field_0000.csv"
    target.write_text(target.read_text(encoding="utf-8") + "0,0\n", encoding="utf-8")
    result = runner.invoke(args=["report", "--run", str(run)])
    assert result.exit_code == 5
    assert "field_0000.csv" in result.output


def test_report_needs_manifest(runner, tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    result = runner.invoke(args=["report", "--run", str(empty)])
    assert result.exit_code == 3
