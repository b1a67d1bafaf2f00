"""
FirmCast - Preprocessing Module

Feature selection, short-series filtering, anomaly removal, imputation,
inflation adjustment and the log / linear-log transform.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import PreprocessConfig
from utils.exceptions import (
    AnomalyLeakError,
    CoverageError,
    DegeneratePanelError,
    TransformStateError,
)
from .panel import (
    FLAG_IMPUTED,
    FLAG_TRANSFORMED,
    TRANSFORM_LINLOG,
    TRANSFORM_LOG,
    TRANSFORM_NONE,
    CompanyPanel,
    CompanyRecord,
)

logger = logging.getLogger(__name__)


def linlog(x):
    """
    Sign-preserving log scaling: sign(x) * ln(|x| + 1).

    Args:
        x: Scalar or array

    Returns:
        Transformed value(s), same shape as x
    """
    result = np.sign(x) * np.log1p(np.abs(x))
    return float(result) if np.ndim(result) == 0 else result


def linlog_inverse(z):
    """Inverse of linlog: sign(z) * (exp(|z|) - 1)."""
    result = np.sign(z) * np.expm1(np.abs(z))
    return float(result) if np.ndim(result) == 0 else result


def forward_transform(kind: str, x):
    """
    Apply a registry transform kind to raw value(s).

    Raises:
        AnomalyLeakError: If a log transform meets a nonpositive value
    """
    if kind == TRANSFORM_LOG:
        if np.any(np.asarray(x) <= 0):
            raise AnomalyLeakError(f"log transform of nonpositive value(s): {x}")
        result = np.log(x)
        return float(result) if np.ndim(result) == 0 else result
    if kind == TRANSFORM_LINLOG:
        return linlog(x)
    return x


def inverse_transform(kind: str, z):
    """Map transformed value(s) back to the raw scale."""
    if kind == TRANSFORM_LOG:
        result = np.exp(z)
        return float(result) if np.ndim(result) == 0 else result
    if kind == TRANSFORM_LINLOG:
        return linlog_inverse(z)
    return z


@dataclass
class PreprocessReport:
    """Counts produced by run_pipeline."""
    dropped_indicators: List[str] = field(default_factory=list)
    dropped_companies: List[str] = field(default_factory=list)
    deleted_records: int = 0
    imputed_cells: int = 0
    inflation_adjusted: bool = False
    transformed: bool = False
    companies_out: int = 0
    records_out: int = 0

    def to_dict(self) -> dict:
        return {
            "dropped_indicators": list(self.dropped_indicators),
            "dropped_companies": len(self.dropped_companies),
            "deleted_records": self.deleted_records,
            "imputed_cells": self.imputed_cells,
            "inflation_adjusted": self.inflation_adjusted,
            "transformed": self.transformed,
            "companies_out": self.companies_out,
            "records_out": self.records_out,
        }


def select_features(panel: CompanyPanel, cfg: PreprocessConfig) -> Tuple[CompanyPanel, List[str]]:
    """
    Drop indicators whose panel-wide missing fraction exceeds the cutoff.

    Args:
        panel: Input panel (nonempty)
        cfg: Preprocessing configuration

    Returns:
        Tuple of (filtered panel, removed indicator codes)

    Raises:
        DegeneratePanelError: If every indicator would be removed
    """
    n_records = panel.n_records
    if n_records == 0:
        raise DegeneratePanelError("cannot select features on an empty panel")

    removed = []
    for code in panel.registry.codes:
        absent = sum(1 for r in panel.all_records() if r.value(code) is None)
        fraction = absent / n_records
        if fraction > cfg.missing_fraction_cutoff:
            removed.append(code)
            logger.debug(f"Dropping {code}: {fraction:.1%} missing")

    if len(removed) == len(panel.registry):
        raise DegeneratePanelError(f"all {len(removed)} indicators exceed the missing cutoff")

    registry = panel.registry.without(removed)
    companies = {}
    for cid in panel.companies:
        recs = []
        for r in panel.records(cid):
            rec = r.copy()
            for code in removed:
                rec.values.pop(code, None)
                rec.flags.pop(code, None)
            recs.append(rec)
        companies[cid] = recs

    logger.info(f"Feature selection removed {len(removed)} indicator(s): {removed}")
    return panel.derive(companies, registry), removed


def filter_short_series(panel: CompanyPanel, cfg: PreprocessConfig) -> CompanyPanel:
    """Remove companies with fewer than min_series_length annual records."""
    keep = [cid for cid in panel.companies if len(panel.records(cid)) >= cfg.min_series_length]
    dropped = panel.n_companies - len(keep)
    logger.info(f"Short-series filter removed {dropped} compan(ies) (min {cfg.min_series_length} years)")
    return panel.subset(keep)


def drop_anomalies(panel: CompanyPanel, cfg: PreprocessConfig) -> Tuple[CompanyPanel, int]:
    """
    Delete records where a strictly-positive indicator is present and <= 0.

    Args:
        panel: Input panel
        cfg: Preprocessing configuration (anomaly_indicators)

    Returns:
        Tuple of (filtered panel, number of deleted records)
    """
    codes = [c for c in cfg.anomaly_indicators if c in panel.registry]
    deleted = 0
    companies = {}
    for cid in panel.companies:
        recs = []
        for r in panel.records(cid):
            if any(r.value(c) is not None and r.value(c) <= 0 for c in codes):
                deleted += 1
                continue
            recs.append(r.copy())
        companies[cid] = recs

    logger.info(f"Anomaly filter deleted {deleted} record(s) on {codes}")
    return panel.derive(companies), deleted


def _impute_series(values: np.ndarray) -> np.ndarray:
    """Interior gaps take the mean of the neighbours, endpoint gaps the nearest value."""
    present = np.flatnonzero(~np.isnan(values))
    if present.size == 0:
        return values.copy()
    filled = values.copy()
    for i in np.flatnonzero(np.isnan(values)):
        before = present[present < i]
        after = present[present > i]
        if before.size and after.size:
            filled[i] = 0.5 * (values[before[-1]] + values[after[0]])
        elif after.size:
            filled[i] = values[after[0]]
        else:
            filled[i] = values[before[-1]]
    return filled


def impute_missing(panel: CompanyPanel) -> CompanyPanel:
    """
    Fill absent values company by company and indicator by indicator.

    Interior runs take the mean of the nearest present values before and after;
    leading (trailing) runs take the first (last) present value. Filled cells are
    flagged imputed; all-absent series stay absent.
    """
    imputed = 0
    companies = {}
    for cid in panel.companies:
        recs = [r.copy() for r in panel.records(cid)]
        for code in panel.registry.codes:
            original = panel.series(cid, code)
            if not np.isnan(original).any():
                continue
            filled = _impute_series(original)
            for rec, before, after in zip(recs, original, filled):
                if np.isnan(before) and not np.isnan(after):
                    rec.values[code] = float(after)
                    rec.flags[code] = FLAG_IMPUTED
                    imputed += 1
        companies[cid] = recs

    logger.info(f"Imputed {imputed} cell(s)")
    return panel.derive(companies)


def count_imputed(panel: CompanyPanel) -> int:
    """Number of cells flagged imputed."""
    return sum(1 for r in panel.all_records() for f in r.flags.values() if f == FLAG_IMPUTED)


def price_levels(cpi_series: Dict[int, float], years: List[int], base_year: int) -> Dict[int, float]:
    """
    Price level per year from annual inflation rates, anchored at P(base_year) = 1.

    P(y+1) = P(y) * (1 + rate(y+1) / 100).

    Raises:
        CoverageError: If a panel year, or a year needed to chain it to the base, has no rate
    """
    missing = sorted(y for y in set(years) if y not in cpi_series)
    if missing:
        raise CoverageError(f"CPI series does not cover year(s) {missing}")

    levels = {}
    for year in sorted(set(years)):
        level = 1.0
        if year > base_year:
            for y in range(base_year + 1, year + 1):
                if y not in cpi_series:
                    raise CoverageError(f"CPI series lacks year {y} needed to chain {year} to {base_year}")
                level *= 1.0 + cpi_series[y] / 100.0
        elif year < base_year:
            for y in range(year + 1, base_year + 1):
                if y not in cpi_series:
                    raise CoverageError(f"CPI series lacks year {y} needed to chain {year} to {base_year}")
                level /= 1.0 + cpi_series[y] / 100.0
        levels[year] = level
    return levels


def adjust_inflation(panel: CompanyPanel, cfg: PreprocessConfig) -> CompanyPanel:
    """
    Express monetary indicators in base-year currency.

    Every monetary value in year y is multiplied by P(base_year) / P(y).
    Non-monetary indicators are untouched. A panel already adjusted to the same
    base year is returned unchanged.

    Raises:
        TransformStateError: If the panel is already log-transformed
        CoverageError: If the CPI series does not cover the panel years
    """
    if panel.meta.transformed:
        raise TransformStateError("inflation adjustment must run before the log transform")
    if panel.meta.inflation_adjusted:
        if panel.meta.base_year == cfg.base_year:
            logger.info("Panel already inflation-adjusted; skipping")
            return panel
        raise TransformStateError(
            f"panel already adjusted to base year {panel.meta.base_year}, requested {cfg.base_year}"
        )
    if cfg.cpi_series is None:
        raise CoverageError("no CPI series configured")

    years = [r.fiscal_year for r in panel.all_records()]
    levels = price_levels(cfg.cpi_series, years, cfg.base_year)
    monetary = [c for c in panel.registry.monetary_codes]

    companies = {}
    for cid in panel.companies:
        recs = []
        for r in panel.records(cid):
            rec = r.copy()
            factor = 1.0 / levels[rec.fiscal_year]
            for code in monetary:
                if rec.values.get(code) is not None:
                    rec.values[code] = rec.values[code] * factor
            recs.append(rec)
        companies[cid] = recs

    logger.info(f"Adjusted {len(monetary)} monetary indicator(s) to base year {cfg.base_year}")
    return panel.derive(companies, inflation_adjusted=True, base_year=cfg.base_year)


def transform_panel(panel: CompanyPanel) -> CompanyPanel:
    """
    Apply each indicator's transform (log, linlog or none) to every value.

    Raises:
        TransformStateError: If the panel is already transformed
        AnomalyLeakError: If a log-transformed indicator holds a nonpositive value
    """
    if panel.meta.transformed:
        raise TransformStateError("panel is already transformed")

    kinds = {code: panel.registry.transform_of(code) for code in panel.registry.codes}
    companies = {}
    for cid in panel.companies:
        recs = []
        for r in panel.records(cid):
            rec = r.copy()
            for code, kind in kinds.items():
                value = rec.values.get(code)
                if value is None or kind == TRANSFORM_NONE:
                    continue
                if kind == TRANSFORM_LOG and value <= 0:
                    raise AnomalyLeakError(
                        f"{cid}/{rec.fiscal_year}: {code} = {value} reached the log transform "
                        f"(run drop_anomalies first)"
                    )
                rec.values[code] = forward_transform(kind, value)
                if rec.flags.get(code) != FLAG_IMPUTED:
                    rec.flags[code] = FLAG_TRANSFORMED
            recs.append(rec)
        companies[cid] = recs

    logger.info(f"Transformed panel: {sum(k == TRANSFORM_LOG for k in kinds.values())} log, "
                f"{sum(k == TRANSFORM_LINLOG for k in kinds.values())} linlog indicator(s)")
    return panel.derive(companies, transformed=True)


def run_pipeline(panel: CompanyPanel, cfg: PreprocessConfig) -> Tuple[CompanyPanel, PreprocessReport]:
    """
    Run the preprocessing steps in their fixed order.

    select_features -> filter_short_series -> drop_anomalies -> impute_missing
    -> adjust_inflation (when a CPI series is configured) -> transform_panel.

    Args:
        panel: Raw panel
        cfg: Preprocessing configuration

    Returns:
        Tuple of (transformed panel, report)
    """
    report = PreprocessReport()

    panel, report.dropped_indicators = select_features(panel, cfg)

    before = set(panel.companies)
    panel = filter_short_series(panel, cfg)
    panel, report.deleted_records = drop_anomalies(panel, cfg)
    before_imputation = count_imputed(panel)
    panel = impute_missing(panel)
    report.imputed_cells = count_imputed(panel) - before_imputation
    report.dropped_companies = sorted(before - set(panel.companies))

    if panel.n_companies == 0:
        raise DegeneratePanelError("no companies left after filtering")

    if cfg.cpi_series is not None:
        panel = adjust_inflation(panel, cfg)
    else:
        logger.warning("No CPI series configured; skipping inflation adjustment")
    report.inflation_adjusted = panel.meta.inflation_adjusted

    panel = transform_panel(panel)
    report.transformed = True
    report.companies_out = panel.n_companies
    report.records_out = panel.n_records

    logger.info(f"Preprocessing done: {report.to_dict()}")
    return panel, report


def load_cpi(path: str | Path) -> Dict[int, float]:
    """
    Read a CPI rate file with columns year and rate (annual percent).

    Args:
        path: Delimiter-separated file; comma or tab

    Returns:
        Mapping year -> annual inflation rate in percent
    """
    frame = pd.read_csv(path, sep=None, engine="python")
    frame.columns = [c.strip().lower() for c in frame.columns]
    if "year" not in frame.columns or "rate" not in frame.columns:
        raise CoverageError(f"{path}: CPI file needs 'year' and 'rate' columns")
    series = {int(y): float(r) for y, r in zip(frame["year"], frame["rate"]) if not math.isnan(float(r))}
    logger.info(f"Loaded CPI series with {len(series)} year(s) from {path}")
    return series
