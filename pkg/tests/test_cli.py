"""
Tests for the command-line pipeline.
"""

import json

import pandas as pd
import pytest

from cli import build_parser, dispatch, read_panel, write_panel
from config import SplitSpec
from core.evaluation import split_dataset
from core.forecaster import load_model
from core.panel import load_panel
from core.scaling import GrowthParams

SMALL_RUN = """\
# small synthetic run
synth.n_companies = 30
synth.start_year = 2000
synth.end_year = 2015
synth.cutoff_year = 2010
synth.min_years = 5
split.cutoff_year = 2010
forecast.hidden_dim = 4
forecast.encoder_len = 2
forecast.decoder_len = 2
forecast.targets = AT,LT
forecast.features = AT,LT,REVT
forecast.batch_size = 8
forecast.max_epochs = 2
evaluation.horizons = 3
explain.permutations = 20
explain.sample_size = 5
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.txt"
    path.write_text(SMALL_RUN, encoding="utf-8")
    return str(path)


def run(*argv):
    return dispatch([str(a) for a in argv])


def test_usage_errors():
    assert run("--help") == 0
    assert run() == 2
    assert run("unknown") == 2
    assert run("train", "--input", "x.csv") == 2


@pytest.mark.parametrize("command", ["preprocess", "fit-scaling", "gm-forecast", "train", "forecast",
                                     "evaluate", "explain", "represent", "synth", "reproduce"])
def test_every_stage_has_a_subcommand(command):
    assert run(command, "--help") == 0


def test_parser_defaults():
    args = build_parser().parse_args(["explain", "--model", "m.npz", "--input", "p.csv", "--out", "o"])
    assert args.method == "auto"
    assert args.seed is None


def test_missing_config_file_fails(tmp_path):
    assert run("synth", "--out", tmp_path / "p.csv", "--config", tmp_path / "absent.txt") == 1


def test_missing_input_is_a_stage_failure(tmp_path, config_file):
    assert run("preprocess", "--input", tmp_path / "absent.csv", "--out", tmp_path / "o.csv",
               "--config", config_file) == 1


def test_panel_sidecar_keeps_processing_state(tmp_path, transformed_panel):
    path = write_panel(transformed_panel, tmp_path / "panel.csv")
    assert not load_panel(path).meta.transformed
    restored = read_panel(path)
    assert restored.meta.transformed
    assert restored.meta.base_year == transformed_panel.meta.base_year
    assert restored.fingerprint() == transformed_panel.fingerprint()


def test_pipeline_subcommands(tmp_path, config_file):
    raw = tmp_path / "raw.csv"
    panel = tmp_path / "panel.csv"
    params = tmp_path / "params.json"
    model = tmp_path / "nn_gm.npz"
    cfg = ("--config", config_file)

    assert run("synth", "--out", raw, *cfg) == 0
    assert read_panel(raw).n_companies == 30

    assert run("preprocess", "--input", raw, "--out", panel, "--report", tmp_path / "pre.json", *cfg) == 0
    assert read_panel(panel).meta.transformed
    assert json.loads((tmp_path / "pre.json").read_text(encoding="utf-8"))["transformed"] is True

    assert run("fit-scaling", "--input", panel, "--out", params, "--per-year", *cfg) == 0
    fitted = GrowthParams.load(params)
    assert fitted.beta_l == pytest.approx(1.0, abs=0.1)
    assert (tmp_path / "params_by_year.csv").exists()

    assert run("gm-forecast", "--input", panel, "--params", params, "--out", tmp_path / "gm.csv", *cfg) == 0
    gm = pd.read_csv(tmp_path / "gm.csv")
    assert set(gm["step"]) == {1, 2, 3}

    assert run("train", "--input", panel, "--params", params, "--mode", "nn+gm", "--out", model, *cfg) == 0
    assert model.exists()

    assert run("forecast", "--model", model, "--input", panel, "--horizon", 4,
               "--out", tmp_path / "forecast.csv", *cfg) == 0
    forecast = pd.read_csv(tmp_path / "forecast.csv")
    assert set(forecast["indicator"]) == {"AT", "LT"}
    assert forecast["step"].max() == 4
    assert (forecast["model"] == "nn+gm").all()

    assert run("evaluate", "--input", panel, "--params", params, "--hybrid-model", model,
               "--models", "persistence", "gm", "nn+gm", "--out", tmp_path / "eval", *cfg) == 0
    header = (tmp_path / "eval" / "header.txt").read_text(encoding="utf-8")
    assert "models: persistence,gm,nn+gm" in header

    assert run("explain", "--model", model, "--input", panel, "--method", "exact",
               "--out", tmp_path / "explain", *cfg) == 0
    ranking = pd.read_csv(tmp_path / "explain" / "shapley_AT.csv")
    assert set(ranking["feature"]) == {"AT", "LT", "REVT"}
    assert (tmp_path / "explain" / "plots" / "shapley_AT.svg").exists()

    assert run("represent", "--model", model, "--input", panel, "--color-by", "sector",
               "--out", tmp_path / "represent", *cfg) == 0
    table = pd.read_csv(tmp_path / "represent" / "representation.csv")
    assert list(table.columns) == ["company_id", "pc1", "pc2", "sector"]

    # the default roster needs both trained networks
    assert run("evaluate", "--input", panel, "--params", params, "--out", tmp_path / "eval2", *cfg) == 1


def test_synth_suite_and_nominal(tmp_path, config_file):
    assert run("synth", "--suite", "--out", tmp_path / "suite", "--config", config_file) == 0
    assert sorted(p.name for p in (tmp_path / "suite").glob("*.csv")) == [
        "gibratlike.csv", "noiseless.csv", "structured.csv"]

    assert run("synth", "--nominal", "--out", tmp_path / "nominal.csv", "--config", config_file) == 0
    cpi = pd.read_csv(tmp_path / "nominal_cpi.csv")
    assert list(cpi.columns) == ["year", "rate"]
    assert not read_panel(tmp_path / "nominal.csv").meta.inflation_adjusted


def test_seed_flag_changes_the_panel(tmp_path, config_file):
    assert run("synth", "--out", tmp_path / "a.csv", "--seed", 1, "--config", config_file) == 0
    assert run("synth", "--out", tmp_path / "b.csv", "--seed", 2, "--config", config_file) == 0
    assert run("synth", "--out", tmp_path / "c.csv", "--seed", 1, "--config", config_file) == 0
    a, b, c = (read_panel(tmp_path / f"{n}.csv").fingerprint() for n in "abc")
    assert a == c
    assert a != b


@pytest.mark.slow
def test_reproduce_is_deterministic(tmp_path, config_file):
    manifests = []
    for name in ("first", "second"):
        assert run("reproduce", "--out", tmp_path / name, "--config", config_file) == 0
        manifests.append(json.loads((tmp_path / name / "manifest.json").read_text(encoding="utf-8")))
    first, second = manifests

    assert first["stages"] == ["synth", "preprocess", "split", "fit-scaling", "gm-forecast", "train",
                               "forecast", "evaluate", "explain", "represent"]
    assert first["report_checksums"] == second["report_checksums"]
    assert first["plot_checksums"] == second["plot_checksums"]
    assert first["model_hashes"] == second["model_hashes"]
    assert set(first["model_hashes"]) == {"nn", "nn+gm"}
    assert (tmp_path / "first" / "run.log").exists()
    assert (tmp_path / "first" / "config.txt").exists()


@pytest.mark.slow
def test_reproduce_over_several_seeds(tmp_path, config_file):
    out = tmp_path / "seeds"
    assert run("reproduce", "--out", out, "--seeds", 1, 2, "--config", config_file) == 0
    assert (out / "seed_1" / "manifest.json").exists()
    assert (out / "seed_2" / "manifest.json").exists()
    averaged = pd.read_csv(out / "per_step_mae_mean.csv")
    assert averaged["runs"].max() == 2


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """Synthetic panel, growth parameters and a hybrid model built through the CLI."""
    root = tmp_path_factory.mktemp("staged")
    config = root / "small.txt"
    config.write_text(SMALL_RUN, encoding="utf-8")
    cfg = ("--config", config)
    paths = {"root": root, "config": config, "raw": root / "raw.csv", "panel": root / "panel.csv",
             "params": root / "params.json", "model": root / "nn_gm.npz"}
    assert run("synth", "--out", paths["raw"], *cfg) == 0
    assert run("preprocess", "--input", paths["raw"], "--output", paths["panel"], *cfg) == 0
    assert run("fit-scaling", "--train", paths["panel"], "--out", paths["params"], *cfg) == 0
    assert run("train", "--input", paths["panel"], "--params", paths["params"], "--mode", "nn+gm",
               "--out", paths["model"], *cfg) == 0
    return paths


def test_long_and_short_flag_names_share_a_destination():
    parser = build_parser()
    assert parser.parse_args(["fit-scaling", "--train", "t.csv", "--out", "p.json"]).train == "t.csv"
    assert parser.parse_args(["fit-scaling", "--input", "t.csv", "--out", "p.json"]).train == "t.csv"
    assert parser.parse_args(["preprocess", "--input", "r.csv", "--out", "p.csv"]).output == "p.csv"
    args = parser.parse_args(["evaluate", "--input", "p.csv", "--models", "persistence,gibrat", "gm",
                              "--theta", "0.3,0.4", "--horizons", "1..5", "--report", "r"])
    assert args.models == ("persistence", "gibrat", "gm")
    assert args.theta == (0.3, 0.4)
    assert args.horizons == 5
    assert args.report == "r"


def test_preprocess_flags_reach_the_pipeline(tmp_path, config_file):
    nominal = tmp_path / "nominal.csv"
    out = tmp_path / "panel.csv"
    assert run("synth", "--nominal", "--out", nominal, "--config", config_file) == 0
    assert run("preprocess", "--input", nominal, "--cpi", tmp_path / "nominal_cpi.csv", "--output", out,
               "--cutoff", 0.4, "--min-years", 8, "--base-year", 2012, "--report", tmp_path / "pre.json",
               "--config", config_file) == 0

    panel = read_panel(out)
    assert panel.meta.base_year == 2012
    assert panel.meta.inflation_adjusted
    assert all(len(panel.years(cid)) >= 8 for cid in panel.companies)
    # companies founded after the cutoff have at most six years
    assert json.loads((tmp_path / "pre.json").read_text(encoding="utf-8"))["dropped_companies"] > 0


def test_train_from_separate_partitions(tmp_path, staged):
    panel = read_panel(staged["panel"])
    train_panel, val_panel, _ = split_dataset(panel, SplitSpec(cutoff_year=2010, seed=1))
    train_path = write_panel(train_panel, tmp_path / "train.csv")
    val_path = write_panel(val_panel, tmp_path / "val.csv")
    model = tmp_path / "nn.npz"
    cfg = ("--config", staged["config"])

    assert run("train", "--train", train_path, "--val", val_path, "--mode", "nn", "--out", model, *cfg) == 0
    assert load_model(model).config.mode == "nn"
    assert run("train", "--train", train_path, "--mode", "nn", "--out", tmp_path / "no_val.npz", *cfg) == 0

    # --val only pairs with --train
    assert run("train", "--input", staged["panel"], "--val", val_path, "--mode", "nn",
               "--out", tmp_path / "x.npz", *cfg) == 1
    assert run("train", "--input", staged["panel"], "--train", train_path, "--out", tmp_path / "x.npz") == 2


def test_forecast_mode_overrides_the_model_rollout(tmp_path, staged):
    out = tmp_path / "pure.csv"
    assert run("forecast", "--model", staged["model"], "--input", staged["panel"], "--mode", "nn",
               "--horizon", 3, "--out", out, "--config", staged["config"]) == 0
    forecast = pd.read_csv(out)
    assert (forecast["model"] == "nn").all()
    assert forecast["step"].max() == 3


def test_evaluate_with_comma_lists(tmp_path, staged):
    report = tmp_path / "eval"
    case = read_panel(staged["panel"]).companies[0]
    assert run("evaluate", "--input", staged["panel"], "--params", staged["params"],
               "--models", "persistence,gibrat,gm", "--groupby", "size,gm-threshold", "--theta", "0.3,0.4",
               "--horizons", "1..3", "--report", report, "--cases", case,
               "--config", staged["config"]) == 0

    header = (report / "header.txt").read_text(encoding="utf-8")
    assert "models: persistence,gibrat,gm" in header
    assert "groupby: size,gm-threshold" in header
    assert "thetas: 0.3,0.4" in header
    assert "horizons: 3" in header
    groups = pd.read_csv(report / "groups.csv")
    assert "size" in set(groups["groupby"])
    assert set(groups["groupby"]) <= {"size", "gm-threshold@0.3", "gm-threshold@0.4"}
    assert pd.read_csv(report / "per_step_mae.csv")["step"].max() <= 3

    cases = pd.read_csv(report / "cases.csv")
    assert set(cases["company_id"]) == {case}
    assert set(cases["series"]) == {"observed", "gm"}
    assert (report / "plots" / f"case_{case}_AT.svg").exists()


@pytest.mark.parametrize("flags", [
    ("--models", "persistence,oracle"),
    ("--groupby", "size,colour"),
    ("--theta", "0.3,high"),
    ("--horizons", "2..5"),
    ("--horizons", "0"),
])
def test_evaluate_rejects_bad_lists(tmp_path, flags):
    assert run("evaluate", "--input", tmp_path / "p.csv", "--report", tmp_path / "r", *flags) == 2
