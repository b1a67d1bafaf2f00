"""
Tests for the run viewer's loading side (no Streamlit session needed).
"""

import json

import pandas as pd

from ui.dashboard import _mae_pivot, discover_runs, load_run


def make_eval_dir(path):
    path.mkdir(parents=True)
    (path / "header.txt").write_text("models: persistence,gm\nhorizons: 2\nseed.master: 3\n", encoding="utf-8")
    pd.DataFrame({
        "model": ["persistence", "persistence", "gm", "gm"],
        "indicator": ["AT"] * 4,
        "step": [1, 2, 1, 2],
        "mae": [0.1, 0.2, 0.15, 0.25],
        "n": [5, 5, 5, 5],
    }).to_csv(path / "per_step_mae.csv", index=False)
    (path / "plots").mkdir()
    (path / "plots" / "mae_by_step_AT.svg").write_text("<svg/>", encoding="utf-8")
    return path


def test_missing_run_directory(tmp_path):
    summary = load_run(tmp_path / "absent")
    assert summary.missing == ["run directory"]
    assert summary.is_empty


def test_evaluate_layout(tmp_path):
    summary = load_run(make_eval_dir(tmp_path / "eval"))
    assert summary.models == ["persistence", "gm"]
    assert summary.header["seed.master"] == "3"
    assert "per_step_mae" in summary.tables
    assert "manifest.json" in summary.missing
    assert "groups.csv" in summary.missing
    assert [p.name for p in summary.plots] == ["mae_by_step_AT.svg"]
    assert not summary.is_empty


def test_reproduce_layout(tmp_path):
    run_dir = tmp_path / "run1"
    make_eval_dir(run_dir / "reports")
    (run_dir / "plots").mkdir()
    (run_dir / "plots" / "cdf_AT.svg").write_text("<svg/>", encoding="utf-8")
    (run_dir / "manifest.json").write_text(json.dumps({"seeds": {"master": 3}}), encoding="utf-8")
    (run_dir / "config.txt").write_text("runtime.seed = 3\n", encoding="utf-8")
    pd.DataFrame({"feature": ["AT"], "mean_abs_phi": [0.5], "rank": [1]}).to_csv(
        run_dir / "reports" / "shapley_AT.csv", index=False)

    summary = load_run(run_dir)
    assert summary.manifest == {"seeds": {"master": 3}}
    assert [p.name for p in summary.plots] == ["cdf_AT.svg"]
    assert "shapley_AT" in summary.tables
    assert summary.config_lines == ["runtime.seed = 3"]
    assert "manifest.json" not in summary.missing


def test_discover_runs(tmp_path):
    make_eval_dir(tmp_path / "b_eval")
    (tmp_path / "a_run" / "reports").mkdir(parents=True)
    (tmp_path / "a_run" / "reports" / "header.txt").write_text("models: gm\n", encoding="utf-8")
    (tmp_path / "empty").mkdir()
    assert [p.name for p in discover_runs(tmp_path)] == ["a_run", "b_eval"]
    assert discover_runs(tmp_path / "absent") == []


def test_mae_pivot(tmp_path):
    summary = load_run(make_eval_dir(tmp_path / "eval"))
    pivot = _mae_pivot(summary.tables["per_step_mae"], "AT")
    assert list(pivot["step"]) == [1, 2]
    assert list(pivot["gm"]) == [0.15, 0.25]
