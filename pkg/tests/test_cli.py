import json
import logging
import re
import subprocess
import sys

import pytest

from sensorplace.cli import build_parser, run_cli

from test_dataset import write_bundle

FAST = ["--n-trees", "15", "--max-depth", "3"]


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "city"
    assert run_cli(["synth", "--width", "6", "--height", "6", "--days", "21", "--seed", "4", "--out", str(out)]) == 0
    return out


def bench_config(path, **extra):
    cfg = {"synthetic": {"width": 6, "height": 6, "n_days": 21, "seed": 2}, "seeds": [0], "budgets": [4],
           "repetitions": 5, "greedy_cells": 40, "jobs": 1,
           "regressor": {"n_trees": 15, "max_depth": 3},
           "active_learning": {"members": 2, "time_subsample": 3, "regressor": {"n_trees": 5, "max_depth": 2}}}
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return path


def test_validate_minimal_bundle(tmp_path, capsys):
    assert run_cli(["validate", str(write_bundle(tmp_path / "b"))]) == 0
    assert json.loads(capsys.readouterr().out)["segments"] == 2


def test_validation_error_exit_code(tmp_path, capsys):
    assert run_cli(["validate", str(tmp_path / "missing")]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_flag_exit_code(bundle, capsys):
    assert run_cli(["validate", str(bundle), "--frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_seed_is_mandatory(bundle):
    assert run_cli(["place", "--bundle", str(bundle), "--strategy", "dispersion", "--budget", "3",
                    "--out", "x.json"]) == 2
    assert run_cli(["synth", "--out", "x"]) == 2


def test_place_is_deterministic(bundle, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"p{k}.json"
        assert run_cli(["place", "--bundle", str(bundle), "--strategy", "dispersion", "--budget", "3",
                        "--seed", "7", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert (tmp_path / "p0.json.config.json").exists()


def test_place_with_initial_and_plan_then_evaluate(bundle, tmp_path, capsys):
    first = tmp_path / "first.json"
    assert run_cli(["place", "--bundle", str(bundle), "--strategy", "closeness", "--budget", "2",
                    "--seed", "3", "--out", str(first)]) == 0
    ext = tmp_path / "ext.json"
    plan = tmp_path / "plan.csv"
    assert run_cli(["place", "--bundle", str(bundle), "--strategy", "feature_diversity[all_static]",
                    "--budget", "6", "--seed", "3", "--initial", str(first), "--scheme", "rotating_2",
                    "--days", "10", "--plan-out", str(plan), "--out", str(ext)]) == 0
    doc = json.loads(ext.read_text())
    assert doc["selected"][:2] == json.loads(first.read_text())["selected"]
    capsys.readouterr()
    assert run_cli(["evaluate", "--bundle", str(bundle), "--placement", str(ext), "--plan", str(plan)] + FAST) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["deployment"] == "temporary" and res["metrics"]["RMSE"]["value"] >= res["metrics"]["MAE"]["value"]


def test_bench_unknown_strategy_is_named(tmp_path, capsys):
    cfg = bench_config(tmp_path / "c.json", strategies=["dispersion", "teleportation"], out=str(tmp_path / "o"))
    assert run_cli(["bench", "spatial", "--config", str(cfg)]) == 2
    assert "teleportation" in capsys.readouterr().err


def test_bench_requires_seeds(tmp_path):
    cfg = bench_config(tmp_path / "c.json", seeds=[], out=str(tmp_path / "o"))
    assert run_cli(["bench", "spatial", "--config", str(cfg)]) == 2
    assert run_cli(["bench", "spatial", "--config", str(cfg), "--seed", "3"]) == 0


def test_bench_flags_override_file(tmp_path):
    cfg = bench_config(tmp_path / "c.json", strategies=["dispersion"], baselines=["random"],
                       out=str(tmp_path / "file_out"))
    out = tmp_path / "flag_out"
    assert run_cli(["bench", "spatial", "--config", str(cfg), "--out", str(out), "--repetitions", "3"]) == 0
    effective = json.loads((out / "config.json").read_text())
    assert effective["repetitions"] == 3 and effective["out"] == str(out)
    assert not (tmp_path / "file_out").exists()


def test_report_plots(tmp_path, capsys):
    cfg = bench_config(tmp_path / "c.json", strategies=["dispersion"], baselines=["random"],
                       budgets=[3, 5], out=str(tmp_path / "o"))
    assert run_cli(["bench", "spatial", "--config", str(cfg)]) == 0
    assert run_cli(["report", "--in", str(tmp_path / "o" / "report.csv"), "--plots"]) == 0
    svg = (tmp_path / "o" / "spatial_MAE.svg").read_text()
    assert svg.startswith("<svg") and "dispersion" in svg and "random_median" in svg
    assert (tmp_path / "o" / "spatial_RMSE.svg").exists()


def test_log_level_from_environment(monkeypatch, bundle):
    monkeypatch.setenv("SENSORPLACE_LOG", "debug")
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    root.handlers = []
    try:
        assert run_cli(["validate", str(bundle)]) == 0
        assert root.level == logging.DEBUG
    finally:
        root.handlers, _ = saved
        root.setLevel(saved[1])


def test_help_lists_every_flag_used_in_tests():
    import pathlib
    used = set()
    for path in pathlib.Path(__file__).parent.glob("test_*.py"):
        used |= set(re.findall(r'"(--[a-z][a-z-]+)"', path.read_text()))
    used -= {"--frobnicate"}
    parser = build_parser()
    helps = ""
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        helps += p.format_help()
    missing = sorted(f for f in used if f not in helps)
    assert not missing


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "sensorplace.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "bench" in out.stdout
