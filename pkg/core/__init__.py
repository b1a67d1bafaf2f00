"""
FirmCast - Core Module

This module contains the forecasting pipeline components.
"""

from .panel import (
    IndicatorSpec,
    IndicatorRegistry,
    CompanyRecord,
    PanelMeta,
    CompanyPanel,
    load_panel,
    save_panel,
    validate_panel,
    make_panel,
)
from .preprocess import (
    PreprocessReport,
    select_features,
    filter_short_series,
    drop_anomalies,
    impute_missing,
    adjust_inflation,
    transform_panel,
    run_pipeline,
    load_cpi,
)
from .scaling import (
    ScalingFit,
    GrowthParams,
    fit_power_law,
    fit_all,
    fit_by_year,
)
from .growth import (
    GmState,
    GmTrajectory,
    asset_growth_rate,
    indicator_growth_rate,
    euler_forecast,
    gm_step_from_prediction,
    gm_forecast_panel,
)
from .baselines import (
    GibratFit,
    persistence_forecast,
    fit_gibrat,
    gibrat_forecast,
)
from .forecaster import (
    ModelState,
    ForecastResult,
    init_model,
    make_windows,
    train,
    hybrid_rollout,
    pure_nn_rollout,
    save_model,
    load_model,
)
from .evaluation import (
    EvalReport,
    split_dataset,
    mae,
    cumulative_mae_distribution,
    evaluate_models,
    average_per_step,
    write_report,
)
from .explain import (
    ShapleyMethod,
    Attribution,
    Embedding2D,
    shapley,
    explain_model,
    pca_project,
)
from .synth import (
    generate,
    benchmark_suite,
    synthetic_cpi,
)

__all__ = [
    "IndicatorSpec",
    "IndicatorRegistry",
    "CompanyRecord",
    "PanelMeta",
    "CompanyPanel",
    "load_panel",
    "save_panel",
    "validate_panel",
    "make_panel",
    "PreprocessReport",
    "select_features",
    "filter_short_series",
    "drop_anomalies",
    "impute_missing",
    "adjust_inflation",
    "transform_panel",
    "run_pipeline",
    "load_cpi",
    "ScalingFit",
    "GrowthParams",
    "fit_power_law",
    "fit_all",
    "fit_by_year",
    "GmState",
    "GmTrajectory",
    "asset_growth_rate",
    "indicator_growth_rate",
    "euler_forecast",
    "gm_step_from_prediction",
    "gm_forecast_panel",
    "GibratFit",
    "persistence_forecast",
    "fit_gibrat",
    "gibrat_forecast",
    "ModelState",
    "ForecastResult",
    "init_model",
    "make_windows",
    "train",
    "hybrid_rollout",
    "pure_nn_rollout",
    "save_model",
    "load_model",
    "EvalReport",
    "split_dataset",
    "mae",
    "cumulative_mae_distribution",
    "evaluate_models",
    "average_per_step",
    "write_report",
    "ShapleyMethod",
    "Attribution",
    "Embedding2D",
    "shapley",
    "explain_model",
    "pca_project",
    "generate",
    "benchmark_suite",
    "synthetic_cpi",
]
