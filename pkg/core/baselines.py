"""
FirmCast - Baselines Module

Persistence forecasts and the Gibrat random-growth model in transformed space.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from utils.exceptions import DomainError, InsufficientDataError
from .panel import CompanyPanel

logger = logging.getLogger(__name__)


def persistence_forecast(last_value: float, horizon: int) -> np.ndarray:
    """Every step repeats the last observed value."""
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    return np.full(horizon, float(last_value))


@dataclass(frozen=True)
class GibratFit:
    """Size-independent log-growth of one indicator."""
    indicator: str
    drift: float
    volatility: float
    n_pairs: int


def fit_gibrat(train: CompanyPanel, indicator: str) -> GibratFit:
    """
    Mean one-year change of an indicator over all consecutive-year pairs.

    Args:
        train: Transformed training panel
        indicator: Indicator code

    Returns:
        GibratFit with the pooled drift g and the standard deviation of the changes

    Raises:
        InsufficientDataError: If no consecutive-year pair exists
    """
    diffs = []
    for cid in train.companies:
        years = train.years(cid)
        values = train.series(cid, indicator)
        consecutive = np.diff(years) == 1
        steps = np.diff(values)
        diffs.append(steps[consecutive & np.isfinite(steps)])

    pooled = np.concatenate(diffs) if diffs else np.empty(0)
    if pooled.size == 0:
        raise InsufficientDataError(f"{indicator}: no consecutive-year pairs for the Gibrat fit")

    volatility = float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0
    fit = GibratFit(indicator, float(pooled.mean()), volatility, int(pooled.size))
    logger.debug(f"Gibrat {indicator}: g={fit.drift:.4f} sd={fit.volatility:.4f} pairs={fit.n_pairs}")
    return fit


def gibrat_forecast(
    last_value: float,
    g: float,
    horizon: int,
    sample: bool = False,
    volatility: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Drift forecast last_value + k*g for k = 1..horizon.

    With sample=True each step also adds a Gaussian shock of the given
    volatility (a random-walk draw rather than a point forecast).
    """
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    increments = np.full(horizon, float(g))
    if sample:
        if rng is None:
            raise DomainError("sampling mode needs a random generator")
        increments = increments + volatility * rng.standard_normal(horizon)
    return float(last_value) + np.cumsum(increments)
