"""
FirmCast - Scaling Module

Power-law fits X = c * A^beta by ordinary least squares in log-log space, and the
GrowthParams bundle consumed by the growth equations.
"""

import logging
import math
from dataclasses import dataclass, field, asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import ScalingConfig
from utils.artifacts import read_json, sha256_bytes, write_json
from utils.exceptions import (
    IncompleteParamsError,
    InsufficientDataError,
    MissingFitError,
    RankDeficiencyError,
    TransformStateError,
)
from .panel import CompanyPanel, CompanyRecord

logger = logging.getLogger(__name__)

ASSETS = "AT"
PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScalingFit:
    """Fitted power law for one indicator against assets."""
    indicator: str
    beta: float
    ln_c: float
    r2: float
    n_obs: int
    beta_ci: Tuple[float, float]
    ln_c_ci: Tuple[float, float]
    fitted_at: Optional[str] = None
    data_hash: Optional[str] = None

    @property
    def c(self) -> float:
        return math.exp(self.ln_c)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["beta_ci"] = list(self.beta_ci)
        payload["ln_c_ci"] = list(self.ln_c_ci)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ScalingFit":
        return cls(
            indicator=payload["indicator"],
            beta=float(payload["beta"]),
            ln_c=float(payload["ln_c"]),
            r2=float(payload["r2"]),
            n_obs=int(payload["n_obs"]),
            beta_ci=tuple(float(v) for v in payload["beta_ci"]),
            ln_c_ci=tuple(float(v) for v in payload["ln_c_ci"]),
            fitted_at=payload.get("fitted_at"),
            data_hash=payload.get("data_hash"),
        )


def fixed_fit(indicator: str, c: float, beta: float) -> ScalingFit:
    """A hand-set fit (no data); c = 0 is allowed and gives ln_c = -inf."""
    ln_c = math.log(c) if c > 0 else -math.inf
    return ScalingFit(indicator, float(beta), ln_c, 1.0, 0, (beta, beta), (ln_c, ln_c))


IDENTITY_ASSET_FIT = fixed_fit(ASSETS, 1.0, 1.0)


@dataclass
class GrowthParams:
    """Coefficient set of the growth equations."""
    liability: ScalingFit
    income: ScalingFit
    per_indicator: Dict[str, ScalingFit] = field(default_factory=dict)

    @classmethod
    def from_coefficients(
        cls,
        c_i: float,
        beta_i: float,
        c_l: float,
        beta_l: float,
        per_indicator: Optional[Dict[str, Tuple[float, float]]] = None,
    ) -> "GrowthParams":
        """
        Build parameters from raw coefficients.

        Args:
            c_i, beta_i: Income (net profit) power law
            c_l, beta_l: Liability power law
            per_indicator: code -> (c_X, beta_X)

        Returns:
            GrowthParams whose liability/income fits are also registered as LT / NI
        """
        liability = fixed_fit("LT", c_l, beta_l)
        income = fixed_fit("NI", c_i, beta_i)
        fits = {"LT": liability, "NI": income}
        for code, (c, beta) in (per_indicator or {}).items():
            fits[code] = fixed_fit(code, c, beta)
        return cls(liability, income, fits)

    @property
    def c_i(self) -> float:
        return math.exp(self.income.ln_c)

    @property
    def beta_i(self) -> float:
        return self.income.beta

    @property
    def c_l(self) -> float:
        return math.exp(self.liability.ln_c)

    @property
    def beta_l(self) -> float:
        return self.liability.beta

    def fit_for(self, code: str) -> ScalingFit:
        """
        Scaling fit for an indicator; assets map onto the identity law.

        Raises:
            MissingFitError: If no fit exists for the code
        """
        if code == ASSETS:
            return self.per_indicator.get(ASSETS, IDENTITY_ASSET_FIT)
        if code in self.per_indicator:
            return self.per_indicator[code]
        if code == self.liability.indicator:
            return self.liability
        if code == self.income.indicator:
            return self.income
        raise MissingFitError(f"No scaling fit for indicator {code}")

    def to_dict(self) -> dict:
        return {
            "format_version": PARAMS_FORMAT_VERSION,
            "liability": self.liability.to_dict(),
            "income": self.income.to_dict(),
            "per_indicator": {code: fit.to_dict() for code, fit in self.per_indicator.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GrowthParams":
        return cls(
            liability=ScalingFit.from_dict(payload["liability"]),
            income=ScalingFit.from_dict(payload["income"]),
            per_indicator={c: ScalingFit.from_dict(f) for c, f in payload.get("per_indicator", {}).items()},
        )

    def save(self, path: str | Path) -> Path:
        """Write the parameters as indented JSON."""
        logger.info(f"Saving growth parameters to {path}")
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "GrowthParams":
        """Read parameters written by save()."""
        return cls.from_dict(read_json(path))


def fit_power_law(
    ln_a: Sequence[float],
    ln_x: Sequence[float],
    indicator: str = "",
    confidence: float = 0.95,
) -> ScalingFit:
    """
    Ordinary least squares of ln X on ln A.

    Args:
        ln_a: Log assets
        ln_x: Log (or linlog) indicator values
        indicator: Indicator code recorded on the fit
        confidence: Two-sided level of the normal-theory intervals

    Returns:
        ScalingFit with slope beta, intercept ln_c, R^2 and confidence intervals

    Raises:
        InsufficientDataError: If fewer than 3 pairs are given
        RankDeficiencyError: If ln_a has zero variance
    """
    x = np.asarray(ln_a, dtype=float)
    y = np.asarray(ln_x, dtype=float)
    if x.shape != y.shape:
        raise InsufficientDataError(f"{indicator}: {x.size} regressor values vs {y.size} responses")
    n = x.size
    if n < 3:
        raise InsufficientDataError(f"{indicator}: need at least 3 observations, got {n}")
    if np.all(x == x[0]):
        raise RankDeficiencyError(f"{indicator}: log-assets have zero variance")

    result = stats.linregress(x, y)
    beta = float(result.slope)
    ln_c = float(result.intercept)

    residuals = y - (ln_c + beta * x)
    sse = float(residuals @ residuals)
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - sse / sst))

    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    beta_se = float(result.stderr)
    ln_c_se = float(result.intercept_stderr)
    fit = ScalingFit(
        indicator=indicator,
        beta=beta,
        ln_c=ln_c,
        r2=r2,
        n_obs=int(n),
        beta_ci=(beta - z * beta_se, beta + z * beta_se),
        ln_c_ci=(ln_c - z * ln_c_se, ln_c + z * ln_c_se),
        fitted_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        data_hash=sha256_bytes(np.stack([x, y]).tobytes()),
    )
    logger.debug(f"Fitted {indicator}: beta={beta:.4f} ln_c={ln_c:.4f} R2={r2:.3f} n={n}")
    return fit


ObservationFilter = Callable[[CompanyRecord, str], bool]


def default_filter(record: CompanyRecord, code: str) -> bool:
    """Both assets and the indicator present."""
    return record.has(ASSETS) and record.has(code)


def positive_only_filter(record: CompanyRecord, code: str) -> bool:
    """Like default_filter but keeps only strictly positive (pre-transform) values."""
    return default_filter(record, code) and record.value(code) > 0


def _pairs(panel: CompanyPanel, code: str, observation_filter: ObservationFilter) -> Tuple[np.ndarray, np.ndarray]:
    ln_a, ln_x = [], []
    for record in panel.all_records():
        if observation_filter(record, code):
            ln_a.append(record.value(ASSETS))
            ln_x.append(record.value(code))
    return np.asarray(ln_a, dtype=float), np.asarray(ln_x, dtype=float)


def fit_all(
    panel: CompanyPanel,
    observation_filter: Optional[ObservationFilter] = None,
    cfg: Optional[ScalingConfig] = None,
) -> GrowthParams:
    """
    Pooled power-law fits of every financial indicator against assets.

    Args:
        panel: Transformed training panel
        observation_filter: Row selector (record, code) -> bool; default keeps rows with AT and X present
        cfg: Scaling configuration (liability / income codes, positive-only income switch)

    Returns:
        GrowthParams with the liability and income fits plus one fit per indicator

    Raises:
        TransformStateError: If the panel is not transformed
        IncompleteParamsError: If the liability or income fit cannot be produced
    """
    cfg = cfg or ScalingConfig()
    if not panel.meta.transformed:
        raise TransformStateError("scaling fits need a transformed (log-space) panel")
    if ASSETS not in panel.registry:
        raise IncompleteParamsError("panel has no asset indicator")

    observation_filter = observation_filter or default_filter
    data_hash = panel.fingerprint()
    fits: Dict[str, ScalingFit] = {}

    for code in panel.registry.financial_codes:
        if code == ASSETS:
            continue
        selector = observation_filter
        if code == cfg.income_code and cfg.positive_only_income:
            selector = lambda r, c, base=observation_filter: base(r, c) and r.value(c) > 0
        ln_a, ln_x = _pairs(panel, code, selector)
        try:
            fit = fit_power_law(ln_a, ln_x, indicator=code, confidence=cfg.confidence)
        except (InsufficientDataError, RankDeficiencyError) as e:
            if code in (cfg.liability_code, cfg.income_code):
                raise IncompleteParamsError(f"mandatory fit {code} failed: {e.message}") from e
            logger.warning(f"Skipping scaling fit for {code}: {e.message}")
            continue
        fits[code] = replace(fit, data_hash=data_hash)

    for code in (cfg.liability_code, cfg.income_code):
        if code not in fits:
            raise IncompleteParamsError(f"mandatory fit {code} missing from panel")

    logger.info(f"Fitted {len(fits)} scaling law(s) on {panel.n_companies} companies")
    return GrowthParams(fits[cfg.liability_code], fits[cfg.income_code], fits)


def fit_by_year(
    panel: CompanyPanel,
    code: str,
    observation_filter: Optional[ObservationFilter] = None,
    confidence: float = 0.95,
) -> Dict[int, ScalingFit]:
    """
    Cross-sectional fits of one indicator, one per fiscal year.

    Years with too few or degenerate observations are skipped.
    """
    if not panel.meta.transformed:
        raise TransformStateError("scaling fits need a transformed (log-space) panel")
    observation_filter = observation_filter or default_filter
    by_year: Dict[int, Tuple[list, list]] = {}
    for record in panel.all_records():
        if observation_filter(record, code):
            xs, ys = by_year.setdefault(record.fiscal_year, ([], []))
            xs.append(record.value(ASSETS))
            ys.append(record.value(code))

    fits = {}
    for year in sorted(by_year):
        xs, ys = by_year[year]
        try:
            fits[year] = fit_power_law(xs, ys, indicator=code, confidence=confidence)
        except (InsufficientDataError, RankDeficiencyError) as e:
            logger.debug(f"Skipping {code} in {year}: {e.message}")
    return fits
