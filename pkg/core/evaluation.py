"""
FirmCast - Evaluation Module

Company-level dataset splitting, multi-step forecast scoring (MAE in transformed
space), cumulative MAE curves and breakdowns by size, age, sector and GM accuracy.
"""

import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import EvalConfig, SplitSpec
from utils.exceptions import ConfigurationError, SplitError, UndefinedMetricError
from utils.parallel import ordered_map
from utils.plots import grouped_bar_plot, line_plot, step_plot
from utils.seeding import substream
from .baselines import GibratFit, fit_gibrat, gibrat_forecast, persistence_forecast
from .forecaster import ModelState, hybrid_rollout, pure_nn_rollout
from .growth import iterate_gm
from .panel import CompanyPanel, CompanyRecord
from .preprocess import inverse_transform
from .scaling import ASSETS, GrowthParams

logger = logging.getLogger(__name__)

MODEL_ROSTER = ("persistence", "gibrat", "gm", "nn", "nn+gm")
GROUPINGS = ("size", "age", "sector", "gm-threshold")
CASE_MODELS = ("gm", "nn", "nn+gm")

SIZE_BUCKETS = (
    ("micro", 0.0),
    ("small", 1e6),
    ("mid", 1e8),
    ("large", 1e9),
)


# ----------------------------------------------------------------------------
# Splitting
# ----------------------------------------------------------------------------

def split_dataset(panel: CompanyPanel, spec: SplitSpec) -> Tuple[CompanyPanel, CompanyPanel, CompanyPanel]:
    """
    Company-level train/val/test split around a cutoff year.

    Companies with a record before the cutoff are shuffled with the split seed
    and assigned by count. Records from the cutoff year onward always go to
    test; companies founded at or after the cutoff are test-only.

    Args:
        panel: Full panel
        spec: Cutoff year, (train, val, test) ratios and seed

    Returns:
        (train, val, test) panels

    Raises:
        SplitError: If no company has a pre-cutoff record
    """
    cutoff = spec.cutoff_year
    pre = [cid for cid in panel.companies if any(r.fiscal_year < cutoff for r in panel.records(cid))]
    if not pre:
        raise SplitError(f"no company has records before {cutoff}")

    order = substream(spec.seed, "split").permutation(len(pre))
    shuffled = [pre[i] for i in order]
    n_train = int(round(spec.ratios[0] * len(pre)))
    n_val = int(round(spec.ratios[1] * len(pre)))
    n_val = min(n_val, len(pre) - n_train)
    train_ids = set(shuffled[:n_train])
    val_ids = set(shuffled[n_train:n_train + n_val])

    train, val, test = {}, {}, {}
    for cid in panel.companies:
        for record in panel.records(cid):
            if cid in train_ids and record.fiscal_year < cutoff:
                train.setdefault(cid, []).append(record.copy())
            elif cid in val_ids and record.fiscal_year < cutoff:
                val.setdefault(cid, []).append(record.copy())
            else:
                test.setdefault(cid, []).append(record.copy())

    parts = tuple(panel.derive(companies=part) for part in (train, val, test))
    logger.info(
        f"Split (cutoff {cutoff}, seed {spec.seed}): {len(train_ids)} train / {len(val_ids)} val / "
        f"{len(pre) - len(train_ids) - len(val_ids)} test of {len(pre)} pre-cutoff companies; "
        f"test partition holds {parts[2].n_companies} companies"
    )
    return parts


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

def mae(predictions: Sequence[float], actuals: Sequence[float]) -> float:
    """
    Mean absolute error.

    Raises:
        UndefinedMetricError: If there are no pairs
        ConfigurationError: If the sequences differ in length
    """
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape:
        raise ConfigurationError(f"prediction shape {p.shape} != actual shape {a.shape}")
    if p.size == 0:
        raise UndefinedMetricError("MAE of an empty sequence")
    return float(np.mean(np.abs(p - a)))


@dataclass
class CdfCurve:
    """Empirical CDF; thresholds are the sorted distinct values."""
    thresholds: np.ndarray
    fractions: np.ndarray
    values: np.ndarray

    def at(self, x: float) -> float:
        """Fraction of values <= x."""
        return float(np.searchsorted(self.values, x, side="right") / self.values.size)


def cumulative_mae_distribution(maes: Sequence[float]) -> CdfCurve:
    """
    Empirical CDF of per-company MAE values.

    Raises:
        UndefinedMetricError: If no values are given
    """
    values = np.sort(np.asarray(maes, dtype=float))
    if values.size == 0:
        raise UndefinedMetricError("CDF of an empty MAE set")
    thresholds = np.unique(values)
    fractions = np.searchsorted(values, thresholds, side="right") / values.size
    return CdfCurve(thresholds, fractions, values)


# ----------------------------------------------------------------------------
# Groupings
# ----------------------------------------------------------------------------

def size_bucket(average_assets: float) -> str:
    label = SIZE_BUCKETS[0][0]
    for name, lower in SIZE_BUCKETS:
        if average_assets >= lower:
            label = name
    return label


def group_by_size(average_assets: Mapping[str, float]) -> Dict[str, List[str]]:
    """
    micro [0, 1e6), small [1e6, 1e8), mid [1e8, 1e9), large [1e9, inf) by average raw assets.
    """
    groups: Dict[str, List[str]] = {name: [] for name, _ in SIZE_BUCKETS}
    for cid in sorted(average_assets):
        groups[size_bucket(average_assets[cid])].append(cid)
    return groups


def _age_labels(edges: Sequence[int]) -> List[str]:
    labels = [f"[{lo},{hi})" for lo, hi in zip(edges[:-1], edges[1:])]
    labels.append(f"[{edges[-1]},inf)")
    return labels


def group_by_age(ages: Mapping[str, int], edges: Sequence[int] = (3, 5, 10, 20)) -> Dict[str, List[str]]:
    """Age (record count) buckets; companies younger than the first edge go to '<first edge'."""
    edges = list(edges)
    labels = _age_labels(edges)
    young = f"<{edges[0]}"
    groups: Dict[str, List[str]] = {young: []}
    groups.update({label: [] for label in labels})
    for cid in sorted(ages):
        age = ages[cid]
        if age < edges[0]:
            groups[young].append(cid)
            continue
        index = int(np.searchsorted(edges, age, side="right")) - 1
        groups[labels[index]].append(cid)
    return groups


def group_by_sector(sectors: Mapping[str, str]) -> Dict[str, List[str]]:
    groups: Dict[str, List[str]] = {}
    for cid in sorted(sectors):
        label = sectors[cid].strip() or "unknown"
        groups.setdefault(label, []).append(cid)
    return dict(sorted(groups.items()))


def gm_performance_groups(
    gm_mae: Mapping[str, float],
    gm_bias: Mapping[str, float],
    theta: float,
) -> Dict[str, List[str]]:
    """
    Split companies by growth-model accuracy.

    Args:
        gm_mae: company -> average GM MAE
        gm_bias: company -> mean signed error (actual - GM)
        theta: Accuracy threshold

    Returns:
        {"under": [...], "good": [...], "over": [...]}; "under" means the GM
        predicts below the actuals on average
    """
    groups: Dict[str, List[str]] = {"under": [], "good": [], "over": []}
    for cid in sorted(gm_mae):
        if gm_mae[cid] < theta:
            groups["good"].append(cid)
        elif gm_bias.get(cid, 0.0) > 0:
            groups["under"].append(cid)
        else:
            groups["over"].append(cid)
    return groups


def company_attributes(panel: CompanyPanel) -> pd.DataFrame:
    """Per-company average raw assets, age (record count) and sector label."""
    rows = []
    kind = panel.registry.transform_of(ASSETS) if ASSETS in panel.registry else "log"
    for cid in panel.companies:
        values = panel.series(cid, ASSETS)
        values = values[np.isfinite(values)]
        if panel.meta.transformed:
            values = inverse_transform(kind, values)
        average = float(np.mean(values)) if values.size else np.nan
        rows.append((cid, average, len(panel.records(cid)), panel.sector(cid)))
    return pd.DataFrame(rows, columns=["company_id", "average_assets", "age", "sector"])


# ----------------------------------------------------------------------------
# Test origins and forecasts
# ----------------------------------------------------------------------------

@dataclass
class TestOrigin:
    """Forecast origin with its t-year history and the actuals that follow."""
    company_id: str
    origin_year: int
    history: List[CompanyRecord]
    actuals: np.ndarray     # (horizons, K); NaN where absent


def build_test_windows(
    test: CompanyPanel,
    encoder_len: int,
    horizons: int,
    targets: Sequence[str],
    required: Sequence[str] = (),
) -> List[TestOrigin]:
    """
    Every test-partition year with a gap-free encoder_len history becomes an origin.

    Args:
        test: Transformed test partition
        encoder_len: History length t
        horizons: Steps to score
        targets: Target codes (history must carry them)
        required: Further codes the history must carry (model features)

    Returns:
        Origins with at least one observed actual
    """
    needed = list(dict.fromkeys(list(targets) + list(required)))
    origins = []
    for cid in test.companies:
        by_year = {r.fiscal_year: r for r in test.records(cid)}
        for year in sorted(by_year):
            history = [by_year.get(y) for y in range(year - encoder_len + 1, year + 1)]
            if any(r is None or any(not r.has(c) for c in needed) for r in history):
                continue
            actuals = np.full((horizons, len(targets)), np.nan)
            for k in range(1, horizons + 1):
                record = by_year.get(year + k)
                if record is None:
                    continue
                for j, code in enumerate(targets):
                    if record.has(code):
                        actuals[k - 1, j] = record.value(code)
            if np.isfinite(actuals).any():
                origins.append(TestOrigin(cid, year, history, actuals))
    logger.info(f"Built {len(origins)} test origin(s) from {test.n_companies} companies")
    return origins


def _pad(values: np.ndarray, horizons: int) -> np.ndarray:
    out = np.full((horizons, values.shape[1] if values.ndim == 2 else 1), np.nan)
    n = min(values.shape[0], horizons)
    out[:n] = values[:n]
    return out


@dataclass
class ForecastContext:
    """Everything a model needs to forecast from an origin."""
    targets: List[str]
    horizons: int
    transforms: Dict[str, str]
    params: Optional[GrowthParams] = None
    gibrat: Dict[str, GibratFit] = field(default_factory=dict)
    models: Dict[str, ModelState] = field(default_factory=dict)
    gibrat_seed: Optional[int] = None     # None: drift only; else seeded shocks


def forecast_origin(origin: TestOrigin, model_name: str, ctx: ForecastContext) -> np.ndarray:
    """(horizons, K) predictions of one model from one origin; NaN after a truncation."""
    last = origin.history[-1]
    K = len(ctx.targets)
    if model_name == "persistence":
        return np.column_stack([persistence_forecast(last.value(c), ctx.horizons) for c in ctx.targets])
    if model_name == "gibrat":
        if ctx.gibrat_seed is None:
            return np.column_stack([gibrat_forecast(last.value(c), ctx.gibrat[c].drift, ctx.horizons)
                                    for c in ctx.targets])
        company = zlib.crc32(origin.company_id.encode("utf-8"))
        return np.column_stack([
            gibrat_forecast(last.value(c), ctx.gibrat[c].drift, ctx.horizons, sample=True,
                            volatility=ctx.gibrat[c].volatility,
                            rng=substream(ctx.gibrat_seed, "gibrat", company, origin.origin_year, j))
            for j, c in enumerate(ctx.targets)
        ])
    if model_name == "gm":
        path, _ = iterate_gm({c: last.value(c) for c in ctx.targets}, ctx.horizons, ctx.params, ctx.transforms)
        return _pad(np.column_stack([path[c] for c in ctx.targets]).reshape(-1, K), ctx.horizons)
    if model_name == "nn":
        result = pure_nn_rollout(origin.history, ctx.horizons, ctx.models["nn"])
        return _pad(result.predictions, ctx.horizons)
    if model_name == "nn+gm":
        result = hybrid_rollout(origin.history, ctx.horizons, ctx.models["nn+gm"], ctx.params)
        return _pad(result.predictions, ctx.horizons)
    raise ConfigurationError(f"unknown model '{model_name}' (known: {', '.join(MODEL_ROSTER)})")


# ----------------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Long-format result tables plus the run header."""
    errors: pd.DataFrame
    per_step: pd.DataFrame
    company_mae: pd.DataFrame
    cdf: pd.DataFrame
    groups: pd.DataFrame
    header: Dict[str, str]

    def step_mae(self, model: str, indicator: str, step: int) -> float:
        rows = self.per_step[(self.per_step["model"] == model) & (self.per_step["indicator"] == indicator)
                             & (self.per_step["step"] == step)]
        return float(rows["mae"].iloc[0]) if len(rows) else float("nan")

    def curve(self, model: str, indicator: str) -> CdfCurve:
        rows = self.company_mae[(self.company_mae["model"] == model)
                                & (self.company_mae["indicator"] == indicator)]
        return cumulative_mae_distribution(rows["mae"].to_numpy())


def _group_table(
    errors: pd.DataFrame,
    groupby: str,
    groups: Mapping[str, Sequence[str]],
) -> pd.DataFrame:
    rows = []
    for label, members in groups.items():
        subset = errors[errors["company_id"].isin(set(members))]
        if subset.empty:
            continue
        summary = subset.groupby(["model", "indicator", "step"], sort=True)["abs_error"].agg(["mean", "size"])
        for (model, indicator, step), row in summary.iterrows():
            rows.append((groupby, label, model, indicator, int(step), float(row["mean"]), int(row["size"]),
                         len(set(subset["company_id"]))))
    return pd.DataFrame(rows, columns=["groupby", "group", "model", "indicator", "step", "mae", "n",
                                       "n_companies"])


def evaluate_models(
    train: CompanyPanel,
    test: CompanyPanel,
    cfg: EvalConfig,
    targets: Sequence[str],
    encoder_len: int,
    params: Optional[GrowthParams] = None,
    models: Optional[Mapping[str, ModelState]] = None,
    reference: Optional[CompanyPanel] = None,
    threads: int = 1,
    seeds: Optional[Mapping[str, int]] = None,
) -> EvalReport:
    """
    Score every model in the roster on the test partition.

    Args:
        train: Transformed training partition (Gibrat drift)
        test: Transformed test partition (origins and actuals)
        cfg: Roster, horizons, thetas, age edges, groupings
        targets: Target codes (must include the GM threshold indicator)
        encoder_len: History length t for every origin
        params: Growth parameters (gm and nn+gm)
        models: Trained forecasters keyed "nn" and "nn+gm"
        reference: Panel for company attributes (size, age, sector); defaults to test
        threads: Worker cap for the per-origin forecasts
        seeds: Seeds recorded in the report header

    Returns:
        EvalReport
    """
    roster = list(cfg.models)
    models = dict(models or {})
    unknown = [m for m in roster if m not in MODEL_ROSTER]
    if unknown:
        raise ConfigurationError(f"unknown model(s) {unknown}")
    for name in ("nn", "nn+gm"):
        if name in roster and name not in models:
            raise ConfigurationError(f"model '{name}' is in the roster but no trained forecaster was given")
    if ("gm" in roster or "nn+gm" in roster) and params is None:
        raise ConfigurationError("growth parameters are needed for gm / nn+gm")

    targets = list(targets)
    required = []
    for name in ("nn", "nn+gm"):
        if name in models:
            required += models[name].feature_codes + models[name].macro_codes
    ctx = ForecastContext(
        targets=targets,
        horizons=cfg.horizons,
        transforms={c: test.registry.transform_of(c) for c in targets},
        params=params,
        gibrat={c: fit_gibrat(train, c) for c in targets} if "gibrat" in roster else {},
        models=models,
        gibrat_seed=int((seeds or {}).get("master", 1)) if cfg.gibrat_sampling else None,
    )
    origins = build_test_windows(test, encoder_len, cfg.horizons, targets, required)
    if not origins:
        raise UndefinedMetricError("no test origins to score")

    def score(origin: TestOrigin) -> List[tuple]:
        rows = []
        for name in roster:
            predicted = forecast_origin(origin, name, ctx)
            for j, code in enumerate(targets):
                for k in range(cfg.horizons):
                    actual, pred = origin.actuals[k, j], predicted[k, j]
                    if np.isfinite(actual) and np.isfinite(pred):
                        rows.append((name, origin.company_id, origin.origin_year, code, k + 1,
                                     float(actual), float(pred), abs(actual - pred)))
        return rows

    scored = ordered_map(score, origins, threads=threads)
    errors = pd.DataFrame(
        [row for rows in scored for row in rows],
        columns=["model", "company_id", "origin_year", "indicator", "step", "actual", "predicted", "abs_error"],
    )
    errors["signed_error"] = errors["actual"] - errors["predicted"]

    per_step = (errors.groupby(["model", "indicator", "step"], sort=True)["abs_error"]
                .agg(mae="mean", n="size").reset_index())
    company_mae = (errors.groupby(["model", "indicator", "company_id"], sort=True)
                   .agg(mae=("abs_error", "mean"), bias=("signed_error", "mean"), n=("abs_error", "size"))
                   .reset_index())

    cdf_rows = []
    for (name, code), rows in company_mae.groupby(["model", "indicator"], sort=True):
        curve = cumulative_mae_distribution(rows["mae"].to_numpy())
        cdf_rows += [(name, code, float(x), float(y)) for x, y in zip(curve.thresholds, curve.fractions)]
    cdf = pd.DataFrame(cdf_rows, columns=["model", "indicator", "threshold", "fraction"])

    groups = _grouped(errors, company_mae, cfg, reference or test)

    header = {
        "models": ",".join(roster),
        "horizons": str(cfg.horizons),
        "targets": ",".join(targets),
        "encoder_len": str(encoder_len),
        "origins": str(len(origins)),
        "companies": str(len({o.company_id for o in origins})),
        "groupby": ",".join(cfg.groupby),
        "thetas": ",".join(f"{t:g}" for t in cfg.thetas),
    }
    for name, value in sorted((seeds or {}).items()):
        header[f"seed.{name}"] = str(value)

    logger.info(f"Scored {len(roster)} model(s) on {len(origins)} origin(s), {len(errors)} error row(s)")
    return EvalReport(errors, per_step, company_mae, cdf, groups, header)


def _grouped(errors: pd.DataFrame, company_mae: pd.DataFrame, cfg: EvalConfig, reference: CompanyPanel) -> pd.DataFrame:
    attributes = company_attributes(reference).set_index("company_id")
    scored = sorted(set(errors["company_id"]))
    attributes = attributes.reindex(scored)
    tables = []
    for groupby in cfg.groupby:
        if groupby == "size":
            avg = attributes["average_assets"].dropna()
            tables.append(_group_table(errors, "size", group_by_size(avg.to_dict())))
        elif groupby == "age":
            ages = attributes["age"].dropna().astype(int)
            tables.append(_group_table(errors, "age", group_by_age(ages.to_dict(), cfg.age_edges)))
        elif groupby == "sector":
            sectors = attributes["sector"].fillna("")
            tables.append(_group_table(errors, "sector", group_by_sector(sectors.to_dict())))
        elif groupby == "gm-threshold":
            gm_rows = company_mae[(company_mae["model"] == "gm")
                                  & (company_mae["indicator"] == cfg.threshold_indicator)]
            if gm_rows.empty:
                logger.warning("gm-threshold grouping needs gm forecasts of the threshold indicator; skipped")
                continue
            gm_mae = dict(zip(gm_rows["company_id"], gm_rows["mae"]))
            gm_bias = dict(zip(gm_rows["company_id"], gm_rows["bias"]))
            for theta in cfg.thetas:
                table = _group_table(errors, f"gm-threshold@{theta:g}", gm_performance_groups(gm_mae, gm_bias, theta))
                tables.append(table)
        else:
            raise ConfigurationError(f"unknown grouping '{groupby}' (known: {', '.join(GROUPINGS)})")
    tables = [t for t in tables if not t.empty]
    if not tables:
        return pd.DataFrame(columns=["groupby", "group", "model", "indicator", "step", "mae", "n", "n_companies"])
    return pd.concat(tables, ignore_index=True)


def average_per_step(tables: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """
    Average per-step MAE tables of repeated runs (one table per seed).

    Args:
        tables: per_step tables with model, indicator, step and mae columns

    Returns:
        model, indicator, step, mae_mean, mae_std, runs
    """
    if not tables:
        raise UndefinedMetricError("no runs to average")
    stacked = pd.concat(list(tables), ignore_index=True)
    return (stacked.groupby(["model", "indicator", "step"], sort=True)["mae"]
            .agg(mae_mean="mean", mae_std="std", runs="count").reset_index())


# ----------------------------------------------------------------------------
# Case trajectories
# ----------------------------------------------------------------------------

def case_trajectories(
    panel: CompanyPanel,
    company_ids: Sequence[str],
    encoder_len: int,
    horizons: int,
    targets: Sequence[str],
    params: Optional[GrowthParams] = None,
    models: Optional[Mapping[str, ModelState]] = None,
    origin_year: Optional[int] = None,
) -> pd.DataFrame:
    """
    Observed path of chosen companies next to the gm, nn and nn+gm forecasts.

    Each company is forecast from origin_year, or from its earliest year with a
    complete history so the forecast overlaps as many observed years as possible.
    Models without parameters or a trained forecaster are left out.

    Args:
        panel: Transformed panel holding the companies
        company_ids: Companies to trace
        encoder_len: History length t
        horizons: Forecast steps
        targets: Target codes
        params: Growth parameters (gm, and nn+gm when the model carries none)
        models: Trained forecasters keyed "nn" and "nn+gm"
        origin_year: Common origin; earliest complete history when None

    Returns:
        DataFrame with columns company_id, fiscal_year, indicator, series, value
        (series is "observed" or a model name)

    Raises:
        ConfigurationError: Unknown company id, or no model to forecast with
    """
    models = dict(models or {})
    known = set(panel.companies)
    unknown = [cid for cid in company_ids if cid not in known]
    if unknown:
        raise ConfigurationError(f"unknown company id(s) {unknown}")
    roster = [name for name in CASE_MODELS if name in models or (name == "gm" and params is not None)]
    if not roster:
        raise ConfigurationError("case trajectories need growth parameters or a trained forecaster")

    targets = list(targets)
    required = [code for model in models.values() for code in model.feature_codes + model.macro_codes]
    ctx = ForecastContext(
        targets=targets,
        horizons=horizons,
        transforms={c: panel.registry.transform_of(c) for c in targets},
        params=params,
        models=models,
    )
    origins = build_test_windows(panel.subset(company_ids), encoder_len, horizons, targets, required)

    rows = []
    for cid in company_ids:
        candidates = [o for o in origins
                      if o.company_id == cid and (origin_year is None or o.origin_year == origin_year)]
        if not candidates:
            logger.warning(f"{cid}: no complete {encoder_len}-year history to forecast from; skipped")
            continue
        origin = candidates[0]
        for record in panel.records(cid):
            rows += [(cid, record.fiscal_year, code, "observed", record.value(code))
                     for code in targets if record.has(code)]
        for name in roster:
            predicted = forecast_origin(origin, name, ctx)
            for k in range(horizons):
                rows += [(cid, origin.origin_year + k + 1, code, name, float(predicted[k, j]))
                         for j, code in enumerate(targets) if np.isfinite(predicted[k, j])]
    logger.info(f"Traced {len({r[0] for r in rows})} case compan(ies) with {', '.join(roster)}")
    return pd.DataFrame(rows, columns=["company_id", "fiscal_year", "indicator", "series", "value"])


def write_cases(cases: pd.DataFrame, out_dir: str | Path, plots_dir: Optional[str | Path] = None) -> Dict[str, Path]:
    """cases.csv plus one line plot per company and indicator."""
    out_dir = Path(out_dir)
    plots_dir = Path(plots_dir) if plots_dir is not None else out_dir / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {"cases": out_dir / "cases.csv"}
    cases.to_csv(written["cases"], index=False, float_format="%.10g")
    for (cid, code), rows in cases.groupby(["company_id", "indicator"], sort=True):
        years = sorted(rows["fiscal_year"].unique())
        series = {}
        for name, path in rows.groupby("series", sort=False):
            by_year = path.set_index("fiscal_year")["value"]
            series[name] = [by_year.get(y, np.nan) for y in years]
        written[f"case_{cid}_{code}"] = line_plot(series, years, plots_dir / f"case_{cid}_{code}.svg",
                                                  title=f"{cid}: {code}", xlabel="fiscal year", ylabel=code)
    return written


def write_report(report: EvalReport, out_dir: str | Path, plots_dir: Optional[str | Path] = None) -> Dict[str, Path]:
    """
    Write CSV tables, header.txt and SVG plots.

    Args:
        report: Evaluation report
        out_dir: Directory for tables and the header
        plots_dir: Directory for plots (defaults to <out_dir>/plots)

    Returns:
        name -> written path
    """
    out_dir = Path(out_dir)
    plots_dir = Path(plots_dir) if plots_dir is not None else out_dir / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)

    written: Dict[str, Path] = {}
    tables = {
        "per_step_mae": report.per_step,
        "company_mae": report.company_mae,
        "cdf": report.cdf,
        "groups": report.groups,
    }
    for name, table in tables.items():
        path = out_dir / f"{name}.csv"
        table.to_csv(path, index=False, float_format="%.10g")
        written[name] = path

    header = out_dir / "header.txt"
    header.write_text("".join(f"{k}: {v}\n" for k, v in report.header.items()), encoding="utf-8")
    written["header"] = header

    steps = sorted(report.per_step["step"].unique())
    for code in sorted(report.per_step["indicator"].unique()):
        rows = report.per_step[report.per_step["indicator"] == code]
        series = {}
        for name in report.header["models"].split(","):
            model_rows = rows[rows["model"] == name].set_index("step")["mae"]
            series[name] = [model_rows.get(s, np.nan) for s in steps]
        written[f"mae_by_step_{code}"] = line_plot(series, steps, plots_dir / f"mae_by_step_{code}.svg",
                                                   title=f"MAE per step: {code}", xlabel="step", ylabel="MAE")
        curves = {}
        for name, cdf_rows in report.cdf[report.cdf["indicator"] == code].groupby("model", sort=True):
            curves[name] = (cdf_rows["threshold"].to_numpy(), cdf_rows["fraction"].to_numpy())
        written[f"cdf_{code}"] = step_plot(curves, plots_dir / f"cdf_{code}.svg",
                                           title=f"Cumulative MAE distribution: {code}", xlabel="MAE",
                                           ylabel="fraction of companies")

    for groupby, rows in report.groups.groupby("groupby", sort=True):
        averaged = rows.groupby(["group", "model"], sort=False)["mae"].mean()
        values: Dict[str, Dict[str, float]] = {}
        for (group, name), value in averaged.items():
            values.setdefault(group, {})[name] = float(value)
        safe = groupby.replace("@", "_at_")
        written[f"groups_{safe}"] = grouped_bar_plot(values, plots_dir / f"groups_{safe}.svg",
                                                     title=f"MAE by {groupby}", ylabel="mean MAE over steps")
    logger.info(f"Wrote evaluation report to {out_dir}")
    return written
