"""
FirmCast - Synthetic Panel Module

Generates company panels with planted scaling laws, growth-model drift and
size-dependent fluctuations. Used for acceptance runs and tests in place of
licensed financial-statement data.
"""

import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.settings import SynthConfig
from utils.exceptions import ConfigurationError, DomainError, GenerationError, SingularityError
from utils.seeding import substream
from .growth import asset_growth_rate
from .panel import FLAG_OBSERVED, CompanyPanel, CompanyRecord, IndicatorRegistry, PanelMeta
from .preprocess import price_levels
from .scaling import ASSETS, GrowthParams

logger = logging.getLogger(__name__)

NOISE_IID = "iid"
NOISE_AR1 = "ar1"

MACRO_CODES = ("GDPG", "INFL")

NOISELESS = "NOISELESS"
GIBRATLIKE = "GIBRATLIKE"
STRUCTURED = "STRUCTURED"

# Planted log-space drift of the Gibrat-like benchmark
GIBRAT_DRIFT = 0.05


def _check(cfg: SynthConfig) -> None:
    if cfg.n_companies < 1:
        raise ConfigurationError(f"n_companies must be >= 1, got {cfg.n_companies}")
    if cfg.end_year < cfg.start_year:
        raise ConfigurationError(f"end_year {cfg.end_year} precedes start_year {cfg.start_year}")
    if cfg.min_years < 1 or cfg.min_years > cfg.end_year - cfg.start_year + 1:
        raise ConfigurationError(f"min_years {cfg.min_years} does not fit the year span")
    if cfg.pre_cutoff_share > 0 and cfg.cutoff_year - cfg.min_years < cfg.start_year:
        raise ConfigurationError("no room for pre-cutoff companies with min_years of history")
    if cfg.pre_cutoff_share < 1 and cfg.end_year - cfg.min_years + 1 < cfg.cutoff_year:
        raise ConfigurationError("no room for post-cutoff companies with min_years of history")
    if not 0.0 <= cfg.pre_cutoff_share <= 1.0:
        raise ConfigurationError(f"pre_cutoff_share must be in [0, 1], got {cfg.pre_cutoff_share}")
    if not 0 < cfg.assets_low < cfg.assets_high:
        raise ConfigurationError(f"asset bounds must satisfy 0 < low < high, got "
                                 f"[{cfg.assets_low}, {cfg.assets_high}]")
    if cfg.noise_kind not in (NOISE_IID, NOISE_AR1):
        raise ConfigurationError(f"noise_kind must be '{NOISE_IID}' or '{NOISE_AR1}', got '{cfg.noise_kind}'")
    if cfg.sigma0 < 0:
        raise ConfigurationError(f"sigma0 must be >= 0, got {cfg.sigma0}")
    if not abs(cfg.rho) < 1:
        raise ConfigurationError(f"|rho| must be < 1, got {cfg.rho}")
    if cfg.gamma < 0:
        raise ConfigurationError(f"gamma must be >= 0, got {cfg.gamma}")
    if cfg.reference_assets <= 0:
        raise ConfigurationError("reference_assets must be positive")
    if not cfg.sectors:
        raise ConfigurationError("at least one sector label is required")
    if any(m <= 0 for m in cfg.sector_volatility.values()):
        raise ConfigurationError("sector volatility multipliers must be positive")
    if cfg.euler_substeps < 1:
        raise ConfigurationError(f"euler_substeps must be >= 1, got {cfg.euler_substeps}")
    if ASSETS in cfg.indicators:
        raise ConfigurationError("assets are generated by the growth equation, not as an indicator")


def planted_params(cfg: SynthConfig) -> GrowthParams:
    """Growth parameters the generator plants (LT, NI and every configured indicator)."""
    return GrowthParams.from_coefficients(
        c_i=math.exp(cfg.ln_c_i),
        beta_i=cfg.beta_i,
        c_l=math.exp(cfg.ln_c_l),
        beta_l=cfg.beta_l,
        per_indicator={code: (math.exp(ln_c), beta) for code, (beta, ln_c, _) in cfg.indicators.items()},
    )


def synthetic_registry(cfg: SynthConfig) -> IndicatorRegistry:
    codes = [ASSETS, "LT", "NI", *cfg.indicators, *MACRO_CODES]
    return IndicatorRegistry.default().restrict(codes)


def _macro_series(cfg: SynthConfig) -> Dict[int, Tuple[float, float]]:
    """Year -> (GDP growth %, inflation %), shared by every company."""
    rng = substream(cfg.seed, "synth", 0)
    series = {}
    gdp_shock, infl_shock = rng.standard_normal(2)
    for year in range(cfg.start_year, cfg.end_year + 1):
        series[year] = (2.5 + 1.5 * gdp_shock, cfg.inflation_mean + 1.0 * infl_shock)
        gdp_shock = 0.5 * gdp_shock + math.sqrt(0.75) * rng.standard_normal()
        infl_shock = 0.7 * infl_shock + math.sqrt(0.51) * rng.standard_normal()
    return series


def synthetic_cpi(cfg: SynthConfig) -> Dict[int, float]:
    """
    Annual inflation rates (percent) matching the INFL column of generate(cfg).

    Feeding this series to adjust_inflation with base_year = cfg.end_year turns a
    nominal synthetic panel back into the planted real values.
    """
    _check(cfg)
    return {year: infl for year, (_, infl) in _macro_series(cfg).items()}


def _founding_year(index: int, n_pre: int, cfg: SynthConfig, rng: np.random.Generator) -> int:
    if index < n_pre:
        return int(rng.integers(cfg.start_year, cfg.cutoff_year - cfg.min_years + 1))
    return int(rng.integers(cfg.cutoff_year, cfg.end_year - cfg.min_years + 2))


def _euler_year(assets: float, params: GrowthParams, substeps: int) -> float:
    h = 1.0 / substeps
    for _ in range(substeps):
        assets = assets + h * asset_growth_rate(assets, params)
    return assets


def _company(
    index: int,
    n_pre: int,
    cfg: SynthConfig,
    params: GrowthParams,
    macro: Dict[int, Tuple[float, float]],
    levels: Optional[Dict[int, float]],
    monetary: Tuple[str, ...] = (),
) -> List[CompanyRecord]:
    rng = substream(cfg.seed, "synth", index + 1)
    cid = f"S{index + 1:05d}"
    sector = cfg.sectors[int(rng.integers(len(cfg.sectors)))]
    multiplier = cfg.sector_volatility.get(sector, 1.0)
    founded = _founding_year(index, n_pre, cfg, rng)

    assets = math.exp(rng.uniform(math.log(cfg.assets_low), math.log(cfg.assets_high)))
    # stationary start for the AR(1) shock
    shock = rng.standard_normal()
    innovation_scale = math.sqrt(1.0 - cfg.rho ** 2) if cfg.noise_kind == NOISE_AR1 else 1.0

    scaling = [("LT", cfg.beta_l, cfg.ln_c_l, cfg.liability_sigma),
               ("NI", cfg.beta_i, cfg.ln_c_i, cfg.income_sigma)]
    scaling += [(code, beta, ln_c, sigma) for code, (beta, ln_c, sigma) in cfg.indicators.items()]

    records = []
    for year in range(founded, cfg.end_year + 1):
        values = {ASSETS: assets}
        for code, beta, ln_c, sigma in scaling:
            values[code] = math.exp(ln_c + beta * math.log(assets) + sigma * rng.standard_normal())
        if levels is not None:
            for code in list(values):
                if code in monetary:
                    values[code] *= levels[year]
        values["GDPG"], values["INFL"] = macro[year]
        records.append(CompanyRecord(cid, year, values, sector, {c: FLAG_OBSERVED for c in values}))

        if year == cfg.end_year:
            break
        try:
            drift = _euler_year(assets, params, cfg.euler_substeps)
        except (SingularityError, DomainError) as e:
            raise GenerationError(f"{cid}: {e.message}", year=year + 1) from e
        if cfg.noise_kind == NOISE_AR1:
            shock = cfg.rho * shock + innovation_scale * rng.standard_normal()
        else:
            shock = rng.standard_normal()
        sigma = cfg.sigma0 * multiplier * (assets / cfg.reference_assets) ** (-cfg.gamma)
        assets = drift * math.exp(sigma * shock)
        if not (math.isfinite(assets) and assets > 0):
            raise GenerationError(f"{cid}: assets left the positive finite range ({assets})", year=year + 1)
    return records


def generate(cfg: SynthConfig) -> CompanyPanel:
    """
    Generate a raw-scale company panel.

    Assets follow one Euler step of the growth equation per year, multiplied by
    a log-space shock with standard deviation sigma0 * m_sector * (A / A_ref)^(-gamma).
    Every other indicator is c_X * A^beta_X * exp(eta) with its own log-noise.

    Args:
        cfg: Generator configuration

    Returns:
        Raw panel; real (base year = end_year) values unless cfg.nominal

    Raises:
        ConfigurationError: If the configuration is invalid
        GenerationError: If the growth equation turns singular (names the year)
    """
    _check(cfg)
    params = planted_params(cfg)
    macro = _macro_series(cfg)
    levels = None
    if cfg.nominal:
        rates = {year: infl for year, (_, infl) in macro.items()}
        levels = price_levels(rates, list(rates), cfg.end_year)

    registry = synthetic_registry(cfg)
    monetary = tuple(registry.monetary_codes)
    n_pre = int(round(cfg.pre_cutoff_share * cfg.n_companies))
    records = []
    for index in range(cfg.n_companies):
        records.extend(_company(index, n_pre, cfg, params, macro, levels, monetary))

    meta = PanelMeta(
        base_year=None if cfg.nominal else cfg.end_year,
        inflation_adjusted=not cfg.nominal,
        source=f"synthetic(seed={cfg.seed})",
    )
    panel = CompanyPanel.from_records(records, registry, meta)
    logger.info(f"Generated synthetic panel: {panel.n_companies} companies, {panel.n_records} records, "
                f"noise={cfg.noise_kind} sigma0={cfg.sigma0} rho={cfg.rho} gamma={cfg.gamma}")
    return panel


def benchmark_configs(seed: int, base: Optional[SynthConfig] = None) -> Dict[str, SynthConfig]:
    """Configurations of the three canonical benchmark panels."""
    base = replace(base or SynthConfig(), seed=seed)
    gibrat_c_i = GIBRAT_DRIFT * (1.0 - base.beta_l * math.exp(base.ln_c_l))
    if gibrat_c_i <= 0:
        raise ConfigurationError("liability parameters leave no positive Gibrat-like income coefficient")
    return {
        NOISELESS: replace(
            base, sigma0=0.0, gamma=0.0, rho=0.0, noise_kind=NOISE_IID,
            liability_sigma=0.0, income_sigma=0.0,
            indicators={code: (beta, ln_c, 0.0) for code, (beta, ln_c, _) in base.indicators.items()},
        ),
        GIBRATLIKE: replace(
            base, beta_i=1.0, ln_c_i=math.log(gibrat_c_i), noise_kind=NOISE_IID, rho=0.0, gamma=0.0,
        ),
        STRUCTURED: replace(base, noise_kind=NOISE_AR1, rho=0.6, gamma=0.2),
    }


def benchmark_suite(seed: int, base: Optional[SynthConfig] = None) -> Dict[str, CompanyPanel]:
    """
    The three canonical acceptance panels.

    NOISELESS: no shocks and no indicator noise.
    GIBRATLIKE: beta_I = 1 so log-space drift is constant; iid shocks, gamma = 0.
    STRUCTURED: AR(1) shocks (rho = 0.6) with size-decaying volatility (gamma = 0.2).
    """
    return {name: generate(cfg) for name, cfg in benchmark_configs(seed, base).items()}
