"""
Forecast-quality properties on the seeded synthetic benchmark panels.

These train and score full-size panels, so every test is marked slow.
"""

from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from config import EvalConfig, ForecastConfig, PreprocessConfig, SplitSpec
from core.evaluation import evaluate_models, split_dataset
from core.forecaster import make_windows, train
from core.preprocess import run_pipeline
from core.scaling import fit_all
from core.synth import GIBRATLIKE, STRUCTURED, benchmark_configs, generate

pytestmark = pytest.mark.slow

TARGETS = ["AT", "LT"]
ENCODER_LEN = 3

NETWORK = ForecastConfig(
    hidden_dim=16,
    encoder_len=ENCODER_LEN,
    decoder_len=5,
    targets=tuple(TARGETS),
    features=("AT", "LT", "REVT"),
    learning_rate=0.005,
    batch_size=64,
    max_epochs=40,
    patience=8,
)


def prepared(cfg, seed):
    panel, _ = run_pipeline(generate(cfg), PreprocessConfig())
    train_panel, val_panel, test_panel = split_dataset(panel, SplitSpec(cutoff_year=cfg.cutoff_year, seed=seed))
    return panel, train_panel, val_panel, test_panel, fit_all(train_panel)


def step_mae(report, model, step, indicator="AT"):
    return report.step_mae(model, indicator, step)


@lru_cache(maxsize=None)
def structured_report(seed):
    cfg = benchmark_configs(seed)[STRUCTURED]
    panel, train_panel, val_panel, test_panel, params = prepared(cfg, seed)
    models = {}
    for mode in ("nn", "nn+gm"):
        mode_cfg = replace(NETWORK, mode=mode, seed=seed)
        gm_params = params if mode == "nn+gm" else None
        windows = make_windows(train_panel, gm_params, mode_cfg)
        models[mode] = train(windows, mode_cfg, make_windows(val_panel, gm_params, mode_cfg))
    return evaluate_models(train_panel, test_panel, EvalConfig(horizons=10, groupby=("size",)), TARGETS,
                           ENCODER_LEN, params=params, models=models, reference=panel, seeds={"master": seed})


def test_growth_model_curve_dominates_gibrat():
    # Gibrat-like noise (iid, no persistence) over size-dependent growth
    base = benchmark_configs(1)
    cfg = replace(base[GIBRATLIKE], beta_i=base[STRUCTURED].beta_i, ln_c_i=base[STRUCTURED].ln_c_i, gamma=0.2)
    panel, train_panel, _, test_panel, params = prepared(cfg, 1)
    report = evaluate_models(train_panel, test_panel,
                             EvalConfig(horizons=10, models=("gibrat", "gm"), groupby=("size",)),
                             TARGETS, ENCODER_LEN, params=params, reference=panel)

    gm, gibrat = report.curve("gm", "AT"), report.curve("gibrat", "AT")
    thresholds = np.union1d(gm.thresholds, gibrat.thresholds)
    assert all(gm.at(x) >= gibrat.at(x) for x in thresholds)
    median = float(np.median(gibrat.values))
    assert gm.at(median) > gibrat.at(median)


def test_hybrid_beats_pure_network_at_long_horizons():
    wins = 0
    for seed in (1, 2, 3):
        report = structured_report(seed)
        gaps = {h: step_mae(report, "nn", h) - step_mae(report, "nn+gm", h) for h in (1, 5, 10)}
        if gaps[5] >= 0 and gaps[10] >= 0 and gaps[10] > gaps[1]:
            wins += 1
    assert wins >= 2


@pytest.mark.parametrize("indicator", TARGETS)
def test_persistence_is_worst_at_the_last_step(indicator):
    report = structured_report(1)
    persistence = step_mae(report, "persistence", 10, indicator)
    for model in ("gibrat", "gm", "nn", "nn+gm"):
        assert persistence > step_mae(report, model, 10, indicator), model


def test_growth_model_error_falls_with_size():
    cfg = replace(benchmark_configs(1)[STRUCTURED], gamma=0.3)
    panel, train_panel, _, test_panel, params = prepared(cfg, 1)
    report = evaluate_models(train_panel, test_panel,
                             EvalConfig(horizons=10, models=("gm",), groupby=("size",)),
                             TARGETS, ENCODER_LEN, params=params, reference=panel)

    rows = report.groups[(report.groups["groupby"] == "size") & (report.groups["model"] == "gm")
                         & (report.groups["indicator"] == "AT")]
    weighted = (rows["mae"] * rows["n"]).groupby(rows["group"]).sum() / rows.groupby("group")["n"].sum()
    ordered = [weighted[g] for g in ("micro", "small", "mid", "large") if g in weighted.index]
    assert len(ordered) >= 3
    assert all(a >= b for a, b in zip(ordered, ordered[1:]))
