"""
FirmCast - Growth Model

Evaluates the asset and indicator growth equations and integrates them forward
with the explicit Euler method in raw (pre-log) space.

    dA/dt = c_I * A^beta_I / D(A),          D(A) = 1 - c_L * beta_L * A^(beta_L - 1)
    dX/dt = c_X * c_I * beta_X * A^(beta_X + beta_I - 1) / D(A)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.exceptions import DomainError, FirmCastError, SingularityError
from .panel import CompanyPanel, IndicatorRegistry
from .preprocess import forward_transform, inverse_transform
from .scaling import ASSETS, GrowthParams

logger = logging.getLogger(__name__)

EPS_DEN = 1e-6

STATUS_OK = "ok"
STATUS_SINGULAR = "singular"
STATUS_DOMAIN = "domain"


def denominator(assets: float, params: GrowthParams) -> float:
    """D(A) = 1 - c_L * beta_L * A^(beta_L - 1)."""
    return 1.0 - params.c_l * params.beta_l * assets ** (params.beta_l - 1.0)


def _checked_denominator(assets: float, params: GrowthParams, eps_den: float) -> float:
    if not assets > 0:
        raise DomainError(f"assets must be positive, got {assets}")
    d = denominator(assets, params)
    if not abs(d) >= eps_den:
        raise SingularityError(assets, d)
    return d


def asset_growth_rate(assets: float, params: GrowthParams, eps_den: float = EPS_DEN) -> float:
    """
    Asset growth rate dA/dt.

    Args:
        assets: Raw-scale assets (> 0)
        params: Growth parameters
        eps_den: Singularity guard on |D(A)|

    Returns:
        c_I * A^beta_I / D(A)

    Raises:
        DomainError: If assets <= 0
        SingularityError: If |D(A)| < eps_den
    """
    d = _checked_denominator(assets, params, eps_den)
    return params.c_i * assets ** params.beta_i / d


def indicator_growth_rate(
    assets: float,
    indicator: str,
    params: GrowthParams,
    eps_den: float = EPS_DEN,
) -> float:
    """
    Growth rate dX/dt of an indicator that scales with assets.

    Args:
        assets: Raw-scale assets (> 0)
        indicator: Indicator code (AT maps onto the asset equation)
        params: Growth parameters
        eps_den: Singularity guard on |D(A)|

    Returns:
        c_X * c_I * beta_X * A^(beta_X + beta_I - 1) / D(A)

    Raises:
        MissingFitError: If the indicator has no scaling fit
    """
    fit = params.fit_for(indicator)
    d = _checked_denominator(assets, params, eps_den)
    return fit.c * params.c_i * fit.beta * assets ** (fit.beta + params.beta_i - 1.0) / d


@dataclass
class GmState:
    """Raw-scale state of the growth model at one step."""
    assets: float
    indicators: Dict[str, float] = field(default_factory=dict)
    year_index: int = 0
    dt: float = 1.0

    def __post_init__(self):
        if not self.assets > 0:
            raise DomainError(f"assets must be positive, got {self.assets}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")


@dataclass
class GmTrajectory:
    """Euler path from the initial state; truncated at the first failing step."""
    states: List[GmState]
    params: GrowthParams
    denominators: List[float] = field(default_factory=list)
    status: str = STATUS_OK
    failed_step: Optional[int] = None
    error: Optional[str] = None

    @property
    def steps_completed(self) -> int:
        return len(self.states) - 1

    def assets(self) -> np.ndarray:
        return np.array([s.assets for s in self.states])

    def indicator(self, code: str) -> np.ndarray:
        if code == ASSETS:
            return self.assets()
        return np.array([s.indicators[code] for s in self.states])


def euler_forecast(
    initial: GmState,
    horizon: int,
    params: GrowthParams,
    substeps: int = 1,
    eps_den: float = EPS_DEN,
) -> GmTrajectory:
    """
    Integrate the growth equations forward with explicit Euler steps.

    Each indicator is advanced with the derivative evaluated at the asset value
    from the start of the (sub)step, starting from its observed value.

    Args:
        initial: Starting state (observed raw values at the origin year)
        horizon: Number of dt-steps to take (>= 1)
        params: Growth parameters
        substeps: Internal Euler substeps per dt (convergence studies)
        eps_den: Singularity guard

    Returns:
        GmTrajectory with horizon+1 states, or fewer with an error status
    """
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    if substeps < 1:
        raise DomainError(f"substeps must be >= 1, got {substeps}")

    h = initial.dt / substeps
    assets = initial.assets
    values = dict(initial.indicators)
    trajectory = GmTrajectory(states=[initial], params=params)

    for step in range(1, horizon + 1):
        try:
            trajectory.denominators.append(_checked_denominator(assets, params, eps_den))
            for _ in range(substeps):
                previous = assets
                assets = previous + h * asset_growth_rate(previous, params, eps_den)
                for code in values:
                    values[code] = values[code] + h * indicator_growth_rate(previous, code, params, eps_den)
            trajectory.states.append(
                GmState(assets=assets, indicators=dict(values), year_index=initial.year_index + step, dt=initial.dt)
            )
        except SingularityError as e:
            trajectory.status, trajectory.failed_step, trajectory.error = STATUS_SINGULAR, step, e.message
            if len(trajectory.denominators) > len(trajectory.states) - 1:
                trajectory.denominators.pop()
            logger.debug(f"Euler forecast truncated at step {step}: {e.message}")
            break
        except DomainError as e:
            trajectory.status, trajectory.failed_step, trajectory.error = STATUS_DOMAIN, step, e.message
            if len(trajectory.denominators) > len(trajectory.states) - 1:
                trajectory.denominators.pop()
            logger.debug(f"Euler forecast truncated at step {step}: {e.message}")
            break

    return trajectory


def analytic_asset_path(a0: float, c_i: float, beta_i: float, times: Sequence[float]) -> np.ndarray:
    """
    Closed-form solution of dA/dt = c_I * A^beta_I (no liabilities).

    A(t) = (A0^(1-beta) + (1-beta) * c_I * t)^(1/(1-beta)), or A0 * exp(c_I t) when beta = 1.
    """
    t = np.asarray(times, dtype=float)
    if beta_i == 1.0:
        return a0 * np.exp(c_i * t)
    k = 1.0 - beta_i
    return (a0 ** k + k * c_i * t) ** (1.0 / k)


DEFAULT_TRANSFORMS = IndicatorRegistry.default()


def _kind(code: str, transforms: Optional[Mapping[str, str]]) -> str:
    if transforms is not None and code in transforms:
        return transforms[code]
    return DEFAULT_TRANSFORMS.transform_of(code)


def gm_step_from_prediction(
    predicted: Mapping[str, float],
    params: GrowthParams,
    transforms: Optional[Mapping[str, str]] = None,
    dt: float = 1.0,
    eps_den: float = EPS_DEN,
) -> Dict[str, float]:
    """
    Advance transformed-space values by one raw-space Euler step.

    Args:
        predicted: code -> value in transformed space; must contain AT
        params: Growth parameters
        transforms: code -> transform kind (defaults to the default registry)
        dt: Step length
        eps_den: Singularity guard

    Returns:
        code -> value in transformed space one step later

    Raises:
        DomainError: If the raw-scale assets are not positive or a log target turns nonpositive
        SingularityError: If the growth denominator vanishes
    """
    if ASSETS not in predicted:
        raise DomainError("prediction lacks assets (AT)")
    raw_assets = inverse_transform(_kind(ASSETS, transforms), predicted[ASSETS])
    if not raw_assets > 0:
        raise DomainError(f"inverse-transformed assets must be positive, got {raw_assets}")

    out = {}
    for code, value in predicted.items():
        kind = _kind(code, transforms)
        raw = inverse_transform(kind, value)
        raw_next = raw + dt * indicator_growth_rate(raw_assets, code, params, eps_den)
        try:
            out[code] = forward_transform(kind, raw_next)
        except FirmCastError as e:
            raise DomainError(f"{code} left the transform domain after a growth step: {e.message}") from e
    return out


def iterate_gm(
    last: Mapping[str, float],
    horizon: int,
    params: GrowthParams,
    transforms: Optional[Mapping[str, str]] = None,
    eps_den: float = EPS_DEN,
) -> Tuple[Dict[str, np.ndarray], str]:
    """
    Repeated gm_step_from_prediction from observed transformed-space values.

    Returns:
        (code -> values for the completed steps, status)
    """
    path = {code: [] for code in last}
    current = dict(last)
    status = STATUS_OK
    for _ in range(horizon):
        try:
            current = gm_step_from_prediction(current, params, transforms, eps_den=eps_den)
        except SingularityError:
            status = STATUS_SINGULAR
            break
        except DomainError:
            status = STATUS_DOMAIN
            break
        for code, value in current.items():
            path[code].append(value)
    return {code: np.array(values) for code, values in path.items()}, status


def gm_forecast_panel(
    panel: CompanyPanel,
    params: GrowthParams,
    horizon: int,
    indicators: Optional[Sequence[str]] = None,
    substeps: int = 1,
    eps_den: float = EPS_DEN,
) -> pd.DataFrame:
    """
    Growth-model forecasts from every record of a transformed panel.

    Args:
        panel: Transformed panel (origins are every record with AT present)
        params: Growth parameters
        horizon: Steps per origin
        indicators: Codes to track; defaults to every fitted financial code present
        substeps: Euler substeps per year
        eps_den: Singularity guard

    Returns:
        DataFrame with columns company_id, origin_year, step, indicator, predicted_value, status
    """
    transforms = {c: panel.registry.transform_of(c) for c in panel.registry.codes}
    if indicators is None:
        indicators = [c for c in panel.registry.financial_codes
                      if c == ASSETS or c in params.per_indicator]
    tracked = [c for c in indicators if c != ASSETS]

    rows = []
    for cid in panel.companies:
        for record in panel.records(cid):
            if not record.has(ASSETS) or any(not record.has(c) for c in tracked):
                continue
            initial = GmState(
                assets=inverse_transform(transforms[ASSETS], record.value(ASSETS)),
                indicators={c: inverse_transform(transforms[c], record.value(c)) for c in tracked},
            )
            trajectory = euler_forecast(initial, horizon, params, substeps=substeps, eps_den=eps_den)
            for step in range(1, horizon + 1):
                if step <= trajectory.steps_completed:
                    state = trajectory.states[step]
                    for code in indicators:
                        raw = state.assets if code == ASSETS else state.indicators[code]
                        try:
                            value = forward_transform(transforms[code], raw)
                            status = STATUS_OK
                        except FirmCastError:
                            value, status = np.nan, STATUS_DOMAIN
                        rows.append((cid, record.fiscal_year, step, code, value, status))
                else:
                    for code in indicators:
                        rows.append((cid, record.fiscal_year, step, code, np.nan, trajectory.status))

    frame = pd.DataFrame(rows, columns=["company_id", "origin_year", "step", "indicator",
                                        "predicted_value", "status"])
    logger.info(f"GM forecasts: {frame['origin_year'].size} row(s) over {panel.n_companies} companies")
    return frame
