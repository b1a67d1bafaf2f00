"""
Shared fixtures: small hand-built panels and seeded synthetic panels.
"""

import pytest

from config import ForecastConfig, PreprocessConfig, SynthConfig
from core.panel import make_panel
from core.preprocess import run_pipeline
from core.synth import generate, planted_params

ENV_KEYS = (
    "MISSING_FRACTION_CUTOFF",
    "MIN_SERIES_LENGTH",
    "BASE_YEAR",
    "HIDDEN_DIM",
    "LEARNING_RATE",
    "MAX_EPOCHS",
    "SPLIT_CUTOFF_YEAR",
    "RANDOM_SEED",
    "THREADS",
    "APP_TITLE",
    "THEME_COLOR",
    "RUNS_ROOT",
    "LOG_LEVEL",
)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Config dataclasses read the environment; tests start from the defaults."""
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)


@pytest.fixture
def raw_rows():
    """Three companies, 2005-2012, raw scale with one gap and one nonpositive cell."""
    rows = []
    for k, cid in enumerate(("A1", "B2", "C3")):
        assets = 1e6 * (k + 1)
        for year in range(2005, 2013):
            rows.append({
                "company_id": cid,
                "fiscal_year": year,
                "sector": ("retail", "services", "retail")[k],
                "AT": assets,
                "LT": 0.5 * assets,
                "REVT": 0.8 * assets,
                "NI": 0.05 * assets,
            })
            assets *= 1.1
    rows[3]["REVT"] = None
    rows[10]["LT"] = -1.0
    return rows


@pytest.fixture
def raw_panel(raw_rows):
    return make_panel(raw_rows)


@pytest.fixture
def synth_config():
    return SynthConfig(n_companies=30, start_year=2000, end_year=2015, cutoff_year=2010, min_years=5, seed=3)


@pytest.fixture
def synth_panel(synth_config):
    return generate(synth_config)


@pytest.fixture
def transformed_panel(synth_panel):
    panel, _ = run_pipeline(synth_panel, PreprocessConfig())
    return panel


@pytest.fixture
def growth_params(synth_config):
    return planted_params(synth_config)


@pytest.fixture
def small_forecast_config():
    return ForecastConfig(
        hidden_dim=4,
        encoder_len=2,
        decoder_len=2,
        targets=("AT", "LT"),
        features=("AT", "LT", "REVT"),
        learning_rate=0.01,
        batch_size=8,
        max_epochs=3,
        patience=5,
        seed=1,
    )
