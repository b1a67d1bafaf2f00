"""
FirmCast - Configuration Module

This module provides dynamic configuration management for the FirmCast pipeline.
"""

from .settings import (
    Config,
    PreprocessConfig,
    ScalingConfig,
    GrowthConfig,
    ForecastConfig,
    SplitSpec,
    EvalConfig,
    ExplainConfig,
    SynthConfig,
    RuntimeConfig,
    LoggingConfig,
    UIConfig,
    load_config,
    get_config,
    get_config_with_validation,
    get_ui_config,
)

__all__ = [
    "Config",
    "PreprocessConfig",
    "ScalingConfig",
    "GrowthConfig",
    "ForecastConfig",
    "SplitSpec",
    "EvalConfig",
    "ExplainConfig",
    "SynthConfig",
    "RuntimeConfig",
    "LoggingConfig",
    "UIConfig",
    "load_config",
    "get_config",
    "get_config_with_validation",
    "get_ui_config",
]
