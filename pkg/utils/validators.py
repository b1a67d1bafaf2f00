"""
FirmCast - Validation Utilities

Provides input validation for configuration values and file arguments.
"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence

logger = logging.getLogger(__name__)


class ValidationError(Exception):
    """Custom exception for validation errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


def validate_file_path(file_path: str | Path, must_exist: bool = True) -> tuple[bool, Optional[str]]:
    """
    Validate a file path.

    Args:
        file_path: The file path to validate
        must_exist: Whether the file must exist

    Returns:
        Tuple of (is_valid, error_message)
    """
    path = Path(file_path)

    if must_exist and not path.exists():
        return False, f"File does not exist: {file_path}"

    if path.exists() and not path.is_file():
        return False, f"Path is not a file: {file_path}"

    return True, None


def validate_fraction(value: float, name: str, allow_zero: bool = False) -> tuple[bool, Optional[str]]:
    """
    Validate a fraction in (0, 1] (or [0, 1] when allow_zero).

    Args:
        value: Value to check
        name: Name used in the error message
        allow_zero: Whether 0 is acceptable

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not math.isfinite(value):
        return False, f"{name} must be finite"
    lower_ok = value >= 0 if allow_zero else value > 0
    if not lower_ok or value > 1:
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        return False, f"{name} must be in {interval}, got {value}"
    return True, None


def validate_positive_int(value: int, name: str, minimum: int = 1) -> tuple[bool, Optional[str]]:
    """
    Validate an integer lower bound.

    Args:
        value: Value to check
        name: Name used in the error message
        minimum: Smallest accepted value

    Returns:
        Tuple of (is_valid, error_message)
    """
    if int(value) != value or value < minimum:
        return False, f"{name} must be an integer >= {minimum}, got {value}"
    return True, None


def validate_ratios(ratios: Sequence[float], tolerance: float = 1e-9) -> tuple[bool, Optional[str]]:
    """
    Validate train/val/test ratios.

    Args:
        ratios: Three nonnegative fractions
        tolerance: Allowed deviation of the sum from 1

    Returns:
        Tuple of (is_valid, error_message)
    """
    if len(ratios) != 3:
        return False, f"split ratios need 3 entries, got {len(ratios)}"
    if any(r < 0 for r in ratios):
        return False, "split ratios must be nonnegative"
    if abs(sum(ratios) - 1.0) > tolerance:
        return False, f"split ratios must sum to 1, got {sum(ratios)}"
    return True, None


def validate_config(config) -> List[str]:
    """
    Validate configuration object.

    Args:
        config: Configuration object to validate

    Returns:
        List of error messages (empty if valid)
    """
    errors = []

    if hasattr(config, "preprocess"):
        valid, err = validate_fraction(config.preprocess.missing_fraction_cutoff, "missing_fraction_cutoff")
        if not valid:
            errors.append(f"Preprocess: {err}")
        valid, err = validate_positive_int(config.preprocess.min_series_length, "min_series_length")
        if not valid:
            errors.append(f"Preprocess: {err}")

    if hasattr(config, "growth"):
        if config.growth.dt <= 0:
            errors.append("Growth: dt must be positive")
        if config.growth.eps_den <= 0:
            errors.append("Growth: eps_den must be positive")
        valid, err = validate_positive_int(config.growth.substeps, "substeps")
        if not valid:
            errors.append(f"Growth: {err}")

    if hasattr(config, "forecast"):
        forecast = config.forecast
        if "AT" not in forecast.targets:
            errors.append("Forecast: targets must include AT")
        for name in ("hidden_dim", "encoder_len", "decoder_len", "batch_size", "max_epochs"):
            valid, err = validate_positive_int(getattr(forecast, name), name)
            if not valid:
                errors.append(f"Forecast: {err}")
        if forecast.mode not in ("nn+gm", "nn"):
            errors.append(f"Forecast: mode must be 'nn+gm' or 'nn', got {forecast.mode}")
        valid, err = validate_fraction(forecast.scheduled_sampling, "scheduled_sampling", allow_zero=True)
        if not valid:
            errors.append(f"Forecast: {err}")

    if hasattr(config, "split"):
        valid, err = validate_ratios(config.split.ratios)
        if not valid:
            errors.append(f"Split: {err}")

    if hasattr(config, "synth"):
        synth = config.synth
        if synth.sigma0 < 0:
            errors.append("Synth: sigma0 must be nonnegative")
        if not abs(synth.rho) < 1:
            errors.append("Synth: |rho| must be below 1")
        if synth.gamma < 0:
            errors.append("Synth: gamma must be nonnegative")
        if synth.noise_kind not in ("iid", "ar1"):
            errors.append(f"Synth: noise_kind must be 'iid' or 'ar1', got {synth.noise_kind}")

    if hasattr(config, "runtime"):
        valid, err = validate_positive_int(config.runtime.threads, "threads")
        if not valid:
            errors.append(f"Runtime: {err}")

    if errors:
        logger.debug(f"Configuration has {len(errors)} problem(s)")
    return errors
