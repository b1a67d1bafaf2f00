"""
Tests for splitting, metrics, groupings and the evaluation report.
"""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from config import EvalConfig, SplitSpec
from core.evaluation import (
    average_per_step,
    build_test_windows,
    case_trajectories,
    company_attributes,
    cumulative_mae_distribution,
    evaluate_models,
    gm_performance_groups,
    group_by_age,
    group_by_sector,
    group_by_size,
    mae,
    split_dataset,
    write_cases,
    write_report,
)
from core.forecaster import make_windows, train
from utils.exceptions import ConfigurationError, SplitError, UndefinedMetricError

TARGETS = ["AT", "LT"]


def test_split_is_company_level_and_respects_cutoff(transformed_panel):
    spec = SplitSpec(cutoff_year=2010, seed=7)
    train_part, val_part, test_part = split_dataset(transformed_panel, spec)
    assert not set(train_part.companies) & set(val_part.companies)
    assert all(r.fiscal_year < 2010 for r in train_part.all_records())
    assert all(r.fiscal_year < 2010 for r in val_part.all_records())
    assert train_part.n_records + val_part.n_records + test_part.n_records == transformed_panel.n_records
    late = [c for c in transformed_panel.companies if transformed_panel.years(c)[0] >= 2010]
    assert late and set(late) <= set(test_part.companies)
    assert not set(late) & (set(train_part.companies) | set(val_part.companies))


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_split_counts_follow_ratios(transformed_panel, seed):
    pre = [c for c in transformed_panel.companies if transformed_panel.years(c)[0] < 2010]
    train_part, val_part, test_part = split_dataset(transformed_panel, SplitSpec(cutoff_year=2010, seed=seed))
    assert train_part.n_companies == round(0.6 * len(pre))
    assert val_part.n_companies == round(0.2 * len(pre))
    held_out = set(pre) - set(train_part.companies) - set(val_part.companies)
    assert len(held_out) == len(pre) - train_part.n_companies - val_part.n_companies
    assert held_out <= set(test_part.companies)


def test_split_is_seeded(transformed_panel):
    a = split_dataset(transformed_panel, SplitSpec(cutoff_year=2010, seed=3))[0]
    b = split_dataset(transformed_panel, SplitSpec(cutoff_year=2010, seed=3))[0]
    c = split_dataset(transformed_panel, SplitSpec(cutoff_year=2010, seed=4))[0]
    assert a.companies == b.companies
    assert a.companies != c.companies


def test_split_needs_pre_cutoff_companies(transformed_panel):
    with pytest.raises(SplitError):
        split_dataset(transformed_panel, SplitSpec(cutoff_year=1990))


def test_mae():
    assert mae([1.0, 2.0, 3.0], [1.5, 2.0, 2.0]) == pytest.approx(0.5)
    with pytest.raises(UndefinedMetricError):
        mae([], [])
    with pytest.raises(ConfigurationError):
        mae([1.0], [1.0, 2.0])


def test_cdf_is_a_step_function():
    curve = cumulative_mae_distribution([0.3, 0.1, 0.2, 0.2])
    assert_allclose(curve.thresholds, [0.1, 0.2, 0.3])
    assert_allclose(curve.fractions, [0.25, 0.75, 1.0])
    assert curve.at(0.0) == 0.0
    assert curve.at(0.25) == 0.75
    assert curve.at(10.0) == 1.0
    with pytest.raises(UndefinedMetricError):
        cumulative_mae_distribution([])


def test_size_buckets_are_half_open():
    groups = group_by_size({"a": 5e5, "b": 1e6, "c": 99_999_999.0, "d": 1e8, "e": 1e9, "f": 5e12})
    assert groups == {"micro": ["a"], "small": ["b", "c"], "mid": ["d"], "large": ["e", "f"]}


def test_age_buckets():
    groups = group_by_age({"a": 2, "b": 3, "c": 4, "d": 10, "e": 25})
    assert groups["<3"] == ["a"]
    assert groups["[3,5)"] == ["b", "c"]
    assert groups["[5,10)"] == []
    assert groups["[10,20)"] == ["d"]
    assert groups["[20,inf)"] == ["e"]


def test_sector_groups():
    assert group_by_sector({"a": "retail", "b": " ", "c": "retail"}) == {"retail": ["a", "c"], "unknown": ["b"]}


def test_gm_performance_groups():
    groups = gm_performance_groups({"a": 0.1, "b": 0.6, "c": 0.7}, {"a": 1.0, "b": 0.5, "c": -0.5}, theta=0.4)
    assert groups == {"under": ["b"], "good": ["a"], "over": ["c"]}


def test_company_attributes_use_raw_assets(transformed_panel, synth_panel):
    frame = company_attributes(transformed_panel).set_index("company_id")
    cid = synth_panel.companies[0]
    assert frame.loc[cid, "average_assets"] == pytest.approx(np.mean(synth_panel.series(cid, "AT")))
    assert frame.loc[cid, "age"] == len(synth_panel.records(cid))


def test_test_windows_need_full_history(transformed_panel):
    _, _, test = split_dataset(transformed_panel, SplitSpec(cutoff_year=2010, seed=1))
    origins = build_test_windows(test, encoder_len=3, horizons=4, targets=TARGETS)
    assert origins
    for origin in origins:
        years = [r.fiscal_year for r in origin.history]
        assert years == list(range(origin.origin_year - 2, origin.origin_year + 1))
        assert origin.actuals.shape == (4, 2)
        assert np.isfinite(origin.actuals).any()


@pytest.fixture
def evaluation_setup(transformed_panel, growth_params, small_forecast_config):
    train_panel, val_panel, test_panel = split_dataset(transformed_panel, SplitSpec(cutoff_year=2010, seed=1))
    cfg = replace(small_forecast_config, max_epochs=2)
    models = {}
    for mode in ("nn", "nn+gm"):
        mode_cfg = replace(cfg, mode=mode)
        params = growth_params if mode == "nn+gm" else None
        windows = make_windows(train_panel, params, mode_cfg)
        models[mode] = train(windows, mode_cfg, make_windows(val_panel, params, mode_cfg))
    return train_panel, test_panel, models


def test_evaluate_models_scores_every_model(evaluation_setup, growth_params, transformed_panel):
    train_panel, test_panel, models = evaluation_setup
    cfg = EvalConfig(horizons=3)
    report = evaluate_models(train_panel, test_panel, cfg, TARGETS, encoder_len=2, params=growth_params,
                             models=models, reference=transformed_panel, seeds={"master": 1})

    assert set(report.per_step["model"]) == set(cfg.models)
    assert set(report.per_step["step"]) <= {1, 2, 3}
    assert report.header["models"] == "persistence,gibrat,gm,nn,nn+gm"
    assert report.header["seed.master"] == "1"
    assert (report.per_step["mae"] >= 0).all()

    persistence = report.errors[report.errors["model"] == "persistence"]
    assert_allclose(persistence["abs_error"], (persistence["actual"] - persistence["predicted"]).abs())
    step_one = persistence[(persistence["indicator"] == "AT") & (persistence["step"] == 1)]
    assert report.step_mae("persistence", "AT", 1) == pytest.approx(step_one["abs_error"].mean())

    curve = report.curve("gm", "AT")
    assert curve.fractions[-1] == 1.0
    assert {"size", "age", "sector"} <= set(report.groups["groupby"])
    assert any(g.startswith("gm-threshold@") for g in report.groups["groupby"])


def test_evaluate_models_runs_in_parallel_identically(evaluation_setup, growth_params):
    train_panel, test_panel, models = evaluation_setup
    cfg = EvalConfig(horizons=2, models=("persistence", "gm", "nn+gm"), groupby=("size",))
    serial = evaluate_models(train_panel, test_panel, cfg, TARGETS, 2, growth_params, models)
    threaded = evaluate_models(train_panel, test_panel, cfg, TARGETS, 2, growth_params, models, threads=4)
    pd.testing.assert_frame_equal(serial.per_step, threaded.per_step)


def test_evaluate_models_validates_roster(evaluation_setup, growth_params):
    train_panel, test_panel, models = evaluation_setup
    with pytest.raises(ConfigurationError):
        evaluate_models(train_panel, test_panel, EvalConfig(models=("oracle",)), TARGETS, 2, growth_params)
    with pytest.raises(ConfigurationError):
        evaluate_models(train_panel, test_panel, EvalConfig(models=("nn",)), TARGETS, 2, growth_params)
    with pytest.raises(ConfigurationError):
        evaluate_models(train_panel, test_panel, EvalConfig(models=("gm",)), TARGETS, 2)


def test_write_report(tmp_path, evaluation_setup, growth_params):
    train_panel, test_panel, models = evaluation_setup
    cfg = EvalConfig(horizons=2, models=("persistence", "gibrat", "gm"))
    report = evaluate_models(train_panel, test_panel, cfg, TARGETS, 2, growth_params)
    written = write_report(report, tmp_path / "eval")
    for name in ("per_step_mae", "company_mae", "cdf", "groups", "header"):
        assert written[name].exists()
    header = (tmp_path / "eval" / "header.txt").read_text(encoding="utf-8")
    assert "models: persistence,gibrat,gm" in header
    svgs = sorted((tmp_path / "eval" / "plots").glob("*.svg"))
    assert svgs
    assert all("<svg" in p.read_text(encoding="utf-8") for p in svgs)


def test_average_per_step_over_runs():
    def table(values):
        return pd.DataFrame({"model": ["gm", "gm"], "indicator": ["AT", "AT"], "step": [1, 2],
                             "mae": values, "n": [4, 4]})

    averaged = average_per_step([table([0.1, 0.3]), table([0.3, 0.5])])
    assert list(averaged.columns) == ["model", "indicator", "step", "mae_mean", "mae_std", "runs"]
    assert_allclose(averaged["mae_mean"], [0.2, 0.4])
    assert_allclose(averaged["mae_std"], [np.sqrt(0.02)] * 2)
    assert list(averaged["runs"]) == [2, 2]
    with pytest.raises(UndefinedMetricError):
        average_per_step([])


def test_gibrat_sampling_is_seeded(evaluation_setup):
    train_panel, test_panel, _ = evaluation_setup
    drift_cfg = EvalConfig(horizons=3, models=("gibrat",), groupby=("size",))
    sampled_cfg = replace(drift_cfg, gibrat_sampling=True)
    drift = evaluate_models(train_panel, test_panel, drift_cfg, TARGETS, 2)
    first = evaluate_models(train_panel, test_panel, sampled_cfg, TARGETS, 2, seeds={"master": 5})
    second = evaluate_models(train_panel, test_panel, sampled_cfg, TARGETS, 2, seeds={"master": 5})
    other = evaluate_models(train_panel, test_panel, sampled_cfg, TARGETS, 2, seeds={"master": 6})

    assert_allclose(first.errors["predicted"], second.errors["predicted"])
    assert not np.allclose(first.errors["predicted"], drift.errors["predicted"])
    assert not np.allclose(first.errors["predicted"], other.errors["predicted"])
    assert_allclose(first.errors["actual"], drift.errors["actual"])


def test_case_trajectories(tmp_path, evaluation_setup, growth_params):
    _, test_panel, models = evaluation_setup
    origins = build_test_windows(test_panel, 2, 3, TARGETS, ["REVT"])
    ids = list(dict.fromkeys(o.company_id for o in origins))[:2]
    cases = case_trajectories(test_panel, ids, 2, 3, TARGETS, params=growth_params, models=models)

    assert set(cases["company_id"]) == set(ids)
    assert set(cases["series"]) == {"observed", "gm", "nn", "nn+gm"}
    for cid in ids:
        rows = cases[(cases["company_id"] == cid) & (cases["indicator"] == "AT")]
        observed = rows[rows["series"] == "observed"]
        assert list(observed["fiscal_year"]) == list(test_panel.years(cid))
        assert_allclose(observed["value"], test_panel.series(cid, "AT"))
        # forecasts start the year after the earliest complete history
        first_origin = min(o.origin_year for o in origins if o.company_id == cid)
        gm = rows[rows["series"] == "gm"]
        assert list(gm["fiscal_year"]) == [first_origin + 1, first_origin + 2, first_origin + 3]

    gm_only = case_trajectories(test_panel, ids[:1], 2, 3, TARGETS, params=growth_params)
    assert set(gm_only["series"]) == {"observed", "gm"}

    written = write_cases(cases, tmp_path / "cases")
    assert written["cases"].exists()
    assert len(sorted((tmp_path / "cases" / "plots").glob("case_*.svg"))) == 2 * len(TARGETS)


def test_case_trajectories_reject_bad_requests(evaluation_setup, growth_params):
    _, test_panel, _ = evaluation_setup
    with pytest.raises(ConfigurationError):
        case_trajectories(test_panel, ["NO-SUCH-FIRM"], 2, 3, TARGETS, params=growth_params)
    with pytest.raises(ConfigurationError):
        case_trajectories(test_panel, test_panel.companies[:1], 2, 3, TARGETS)
