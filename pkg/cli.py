"""
FirmCast - Command Line Interface

Subcommands wiring the pipeline end to end:

    preprocess, fit-scaling, gm-forecast, train, forecast, evaluate,
    explain, represent, synth, reproduce

Exit status: 0 on success, 1 when a pipeline stage fails, 2 on usage errors.
"""

import argparse
import logging
import sys
from contextlib import contextmanager
from copy import deepcopy
from dataclasses import asdict, fields, replace
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import Config, load_config
from core.evaluation import (
    GROUPINGS,
    MODEL_ROSTER,
    average_per_step,
    case_trajectories,
    company_attributes,
    evaluate_models,
    split_dataset,
    write_cases,
    write_report,
)
from core.explain import (
    ShapleyMethod,
    explain_model,
    extract_hidden,
    pca_project,
    representation_table,
    write_representation,
)
from core.forecaster import (
    MODE_HYBRID,
    MODE_PURE,
    STATUS_OK,
    ModelState,
    extract_history,
    hybrid_rollout,
    load_model,
    make_windows,
    pure_nn_rollout,
    save_model,
    train,
)
from core.growth import gm_forecast_panel
from core.panel import CompanyPanel, CompanyRecord, PanelMeta, load_panel, save_panel
from core.preprocess import load_cpi, run_pipeline
from core.scaling import GrowthParams, fit_all, fit_by_year
from core.synth import benchmark_suite, generate, synthetic_cpi
from utils.artifacts import directory_checksums, file_sha256, read_json, write_json
from utils.exceptions import FirmCastError, PipelineError
from utils.logger import detach_file_handlers, setup_logger
from utils.plots import grouped_bar_plot

logger = logging.getLogger(__name__)

MANIFEST_FORMAT_VERSION = 1
RUN_SUBDIRS = ("data", "params", "models", "forecasts", "reports", "plots")
MODEL_FILES = {MODE_HYBRID: "nn_gm.npz", MODE_PURE: "nn.npz"}
PACKAGES = ("numpy", "pandas", "scipy", "matplotlib", "streamlit", "python-dotenv")


# ----------------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------------

@contextmanager
def _stage(name: str) -> Iterator[None]:
    """Turn any pipeline error raised inside the block into a PipelineError naming the stage."""
    logger.info(f"Stage '{name}'")
    try:
        yield
    except PipelineError:
        raise
    except (FirmCastError, ValueError, KeyError, OSError) as e:
        raise PipelineError(name, getattr(e, "message", None) or str(e)) from e


class CommaList(argparse.Action):
    """Collect `a,b,c` or `a b c` into a tuple, checking values against `allowed`."""

    def __init__(self, option_strings, dest, allowed: Optional[Sequence[str]] = None,
                 convert: Callable[[str], object] = str, **kwargs):
        self.allowed = tuple(allowed) if allowed is not None else None
        self.convert = convert
        super().__init__(option_strings, dest, nargs="+", **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        items = [item.strip() for value in values for item in value.split(",") if item.strip()]
        if self.allowed is not None:
            unknown = [item for item in items if item not in self.allowed]
            if unknown:
                parser.error(f"{option_string}: unknown value(s) {', '.join(unknown)} "
                             f"(choose from {', '.join(self.allowed)})")
        try:
            converted = tuple(self.convert(item) for item in items)
        except ValueError as e:
            parser.error(f"{option_string}: {e}")
        setattr(namespace, self.dest, converted)


def horizon_range(text: str) -> int:
    """`N` or `1..N` -> N; steps are always scored from 1."""
    first, sep, last = text.strip().partition("..")
    try:
        start, stop = (int(first), int(last)) if sep else (1, int(first))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or 1..N, got '{text}'") from None
    if start != 1 or stop < 1:
        raise argparse.ArgumentTypeError(f"horizons run from 1 to N >= 1, got '{text}'")
    return stop


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_panel(panel: CompanyPanel, path: str | Path) -> Path:
    """save_panel plus a JSON sidecar carrying the panel's processing state."""
    path = save_panel(panel, path)
    write_json(_meta_path(path), asdict(panel.meta))
    return path


def read_panel(path: str | Path) -> CompanyPanel:
    """load_panel, restoring the processing state from the sidecar when present."""
    path = Path(path)
    panel = load_panel(path)
    sidecar = _meta_path(path)
    if sidecar.exists():
        payload = read_json(sidecar)
        known = {f.name for f in fields(PanelMeta)}
        changes = {k: v for k, v in payload.items() if k in known and k not in ("parse_warnings", "source")}
        panel = panel.derive(**changes)
    return panel


def _last_histories(
    model: ModelState,
    panel: CompanyPanel,
    limit: Optional[int] = None,
) -> Dict[str, List[CompanyRecord]]:
    """Encoder history ending at each company's last fiscal year."""
    histories = {}
    for cid in panel.companies:
        if limit is not None and len(histories) >= limit:
            break
        history = extract_history(panel, cid, int(panel.years(cid)[-1]), model)
        if history is None:
            logger.debug(f"No complete history for {cid}")
            continue
        histories[cid] = history
    return histories


def forecast_frame(
    model: ModelState,
    panel: CompanyPanel,
    horizon: int,
    origin_year: Optional[int] = None,
    mode: Optional[str] = None,
) -> pd.DataFrame:
    """
    Closed-loop forecasts from every company with a complete history at the origin.

    Args:
        model: Trained forecaster
        panel: Transformed panel
        horizon: Steps per origin
        origin_year: Common origin; each company's last fiscal year when None
        mode: Rollout (pure or hybrid); the model's own mode when None

    Returns:
        DataFrame with columns company_id, origin_year, model, step, indicator, predicted_value, status
    """
    mode = mode or model.config.mode
    rows = []
    for cid in panel.companies:
        origin = origin_year if origin_year is not None else int(panel.years(cid)[-1])
        history = extract_history(panel, cid, origin, model)
        if history is None:
            logger.debug(f"Skipping {cid}: no complete history ending {origin}")
            continue
        if mode == MODE_HYBRID:
            result = hybrid_rollout(history, horizon, model)
        else:
            result = pure_nn_rollout(history, horizon, model)
        for step in range(horizon):
            for j, code in enumerate(result.targets):
                if step < result.steps:
                    rows.append((cid, origin, result.model, step + 1, code,
                                 float(result.predictions[step, j]), STATUS_OK))
                else:
                    rows.append((cid, origin, result.model, step + 1, code, np.nan, result.status))
    logger.info(f"Forecast {len({r[0] for r in rows})} company(ies) over {horizon} step(s)")
    return pd.DataFrame(rows, columns=["company_id", "origin_year", "model", "step", "indicator",
                                       "predicted_value", "status"])


def _train_model(mode: str, config: Config, train_panel: CompanyPanel, val_panel: Optional[CompanyPanel],
                 params: Optional[GrowthParams]) -> ModelState:
    cfg = replace(config.forecast, mode=mode)
    gm_params = params if mode == MODE_HYBRID else None
    windows = make_windows(train_panel, gm_params, cfg)
    val_windows = make_windows(val_panel, gm_params, cfg) if val_panel is not None else None
    return train(windows, cfg, val_windows)


def _seeds(config: Config) -> Dict[str, int]:
    return {
        "master": config.runtime.seed,
        "split": config.split.seed,
        "init": config.forecast.seed,
        "batching": config.forecast.seed,
        "sampling": config.forecast.seed,
        "shapley": config.runtime.seed,
        "synth": config.synth.seed,
    }


def _versions() -> Dict[str, str]:
    versions = {"python": sys.version.split()[0]}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _write_attribution(attribution, target: str, out_dir: Path, plots_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    attribution.to_frame().to_csv(out_dir / f"shapley_{target}.csv", index=False, float_format="%.10g")
    per_company = pd.DataFrame(attribution.values, columns=attribution.features)
    per_company.insert(0, "company_id", attribution.instance_ids)
    per_company.to_csv(out_dir / f"shapley_{target}_by_company.csv", index=False, float_format="%.10g")
    grouped_bar_plot(
        {feature: {"mean |phi|": value} for feature, value in zip(attribution.features, attribution.mean_abs)},
        plots_dir / f"shapley_{target}.svg",
        title=f"Mean |Shapley value| for {target}",
        ylabel="mean |phi|",
    )


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------

def cmd_preprocess(args: argparse.Namespace, config: Config) -> None:
    with _stage("preprocess"):
        panel = read_panel(args.input)
        if args.cpi:
            config.preprocess.cpi_series = load_cpi(args.cpi)
        processed, report = run_pipeline(panel, config.preprocess)
        write_panel(processed, args.output)
        if args.report:
            write_json(args.report, report.to_dict())


def cmd_fit_scaling(args: argparse.Namespace, config: Config) -> None:
    with _stage("fit-scaling"):
        panel = read_panel(args.train)
        if args.positive_only:
            config.scaling.positive_only_income = True
        params = fit_all(panel, cfg=config.scaling)
        params.save(args.out)
        if args.per_year or config.scaling.per_year:
            rows = []
            for code in panel.registry.financial_codes:
                for year, fit in sorted(fit_by_year(panel, code, confidence=config.scaling.confidence).items()):
                    rows.append((code, year, fit.beta, fit.ln_c, fit.r2, fit.n_obs))
            out = Path(args.out)
            pd.DataFrame(rows, columns=["indicator", "fiscal_year", "beta", "ln_c", "r2", "n_obs"]).to_csv(
                out.with_name(out.stem + "_by_year.csv"), index=False, float_format="%.10g")


def cmd_gm_forecast(args: argparse.Namespace, config: Config) -> None:
    with _stage("gm-forecast"):
        panel = read_panel(args.input)
        params = GrowthParams.load(args.params)
        frame = gm_forecast_panel(panel, params, args.horizon or config.evaluation.horizons,
                                  substeps=config.growth.substeps, eps_den=config.growth.eps_den)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format="%.10g")


def cmd_train(args: argparse.Namespace, config: Config) -> None:
    if args.input and args.val:
        raise PipelineError("train", "--val goes with --train; --input is split with the split settings")
    with _stage("split"):
        if args.input:
            train_panel, val_panel, _ = split_dataset(read_panel(args.input), config.split)
        else:
            train_panel = read_panel(args.train)
            val_panel = read_panel(args.val) if args.val else None
    with _stage("train"):
        mode = args.mode or config.forecast.mode
        params = GrowthParams.load(args.params) if args.params else None
        model = _train_model(mode, config, train_panel, val_panel, params)
        save_model(model, args.out)


def cmd_forecast(args: argparse.Namespace, config: Config) -> None:
    with _stage("forecast"):
        model = load_model(args.model)
        panel = read_panel(args.input)
        frame = forecast_frame(model, panel, args.horizon or config.evaluation.horizons, args.origin_year,
                               args.mode)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format="%.10g")


def cmd_evaluate(args: argparse.Namespace, config: Config) -> None:
    with _stage("split"):
        panel = read_panel(args.input)
        train_panel, _, test_panel = split_dataset(panel, config.split)
    with _stage("evaluate"):
        models = {}
        if args.nn_model:
            models["nn"] = load_model(args.nn_model)
        if args.hybrid_model:
            models["nn+gm"] = load_model(args.hybrid_model)
        params = GrowthParams.load(args.params) if args.params else None
        if params is None and "nn+gm" in models:
            params = models["nn+gm"].growth_params
        first = next(iter(models.values()), None)
        targets = first.targets if first is not None else list(config.forecast.targets)
        encoder_len = first.config.encoder_len if first is not None else config.forecast.encoder_len
        report = evaluate_models(train_panel, test_panel, config.evaluation, targets, encoder_len,
                                 params=params, models=models, reference=panel,
                                 threads=config.runtime.threads, seeds=_seeds(config))
        write_report(report, args.report)
    if config.evaluation.cases:
        with _stage("cases"):
            cases = case_trajectories(panel, config.evaluation.cases, encoder_len, config.evaluation.horizons,
                                      targets, params=params, models=models)
            write_cases(cases, args.report)


def cmd_explain(args: argparse.Namespace, config: Config) -> None:
    with _stage("explain"):
        model = load_model(args.model)
        panel = read_panel(args.input)
        target = args.target or config.explain.target
        histories = _last_histories(model, panel, config.explain.sample_size)
        attribution = explain_model(
            model, histories, target=target,
            n_permutations=args.permutations or config.explain.permutations,
            seed=config.runtime.seed, method=ShapleyMethod(args.method),
            exact_threshold=config.explain.exact_threshold, threads=config.runtime.threads,
        )
        out = Path(args.out)
        _write_attribution(attribution, target, out, out / "plots")


def cmd_represent(args: argparse.Namespace, config: Config) -> None:
    with _stage("represent"):
        model = load_model(args.model)
        panel = read_panel(args.input)
        color_by = args.color_by or config.explain.color_by
        ids, matrix = extract_hidden(model, _last_histories(model, panel))
        embedding = pca_project(matrix, 2, ids)
        table = representation_table(embedding, company_attributes(panel), color_by)
        write_representation(table, embedding, color_by, args.out)


def cmd_synth(args: argparse.Namespace, config: Config) -> None:
    with _stage("synth"):
        if args.nominal:
            config.synth.nominal = True
        out = Path(args.out)
        if args.suite:
            for name, panel in benchmark_suite(config.synth.seed, config.synth).items():
                write_panel(panel, out / f"{name.lower()}.csv")
            return
        write_panel(generate(config.synth), out)
        if config.synth.nominal:
            cpi = synthetic_cpi(config.synth)
            pd.DataFrame({"year": list(cpi), "rate": list(cpi.values())}).to_csv(
                out.with_name(out.stem + "_cpi.csv"), index=False, float_format="%.17g")


REPLICATE_SEED_KEYS = ("runtime.seed", "split.seed", "forecast.seed")


def cmd_reproduce(args: argparse.Namespace, config: Config) -> None:
    out = Path(args.out)
    if not args.seeds:
        _logged_run(out, config)
        return
    tables = []
    for seed in args.seeds:
        seeded = deepcopy(config).apply_overrides({key: seed for key in REPLICATE_SEED_KEYS})
        run_dir = out / f"seed_{seed}"
        _logged_run(run_dir, seeded)
        tables.append(pd.read_csv(run_dir / "reports" / "per_step_mae.csv"))
    with _stage("aggregate"):
        average_per_step(tables).to_csv(out / "per_step_mae_mean.csv", index=False, float_format="%.10g")
    logger.info(f"Averaged {len(tables)} run(s) into {out / 'per_step_mae_mean.csv'}")


def _logged_run(run_dir: Path, config: Config) -> None:
    for sub in RUN_SUBDIRS:
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    root = logging.getLogger()
    setup_logger("", config.logging.level, run_dir / "run.log")
    try:
        _reproduce(run_dir, config)
    finally:
        detach_file_handlers(root)


def _reproduce(run_dir: Path, config: Config) -> None:
    (run_dir / "config.txt").write_text("\n".join(config.to_lines()) + "\n", encoding="utf-8")
    stages = []

    with _stage("synth"):
        raw = generate(config.synth)
        write_panel(raw, run_dir / "data" / "panel_raw.csv")
        if config.synth.nominal:
            config.preprocess.cpi_series = synthetic_cpi(config.synth)
            config.preprocess.base_year = config.synth.end_year
        stages.append("synth")

    with _stage("preprocess"):
        panel, report = run_pipeline(raw, config.preprocess)
        write_panel(panel, run_dir / "data" / "panel.csv")
        write_json(run_dir / "reports" / "preprocess.json", report.to_dict())
        stages.append("preprocess")

    with _stage("split"):
        train_panel, val_panel, test_panel = split_dataset(panel, config.split)
        stages.append("split")

    with _stage("fit-scaling"):
        params = fit_all(train_panel, cfg=config.scaling)
        params_path = params.save(run_dir / "params" / "growth_params.json")
        stages.append("fit-scaling")

    with _stage("gm-forecast"):
        gm_forecast_panel(test_panel, params, config.evaluation.horizons,
                          substeps=config.growth.substeps, eps_den=config.growth.eps_den).to_csv(
            run_dir / "forecasts" / "gm_forecasts.csv", index=False, float_format="%.10g")
        stages.append("gm-forecast")

    models: Dict[str, ModelState] = {}
    with _stage("train"):
        for mode in (MODE_PURE, MODE_HYBRID):
            if mode in config.evaluation.models:
                models[mode] = _train_model(mode, config, train_panel, val_panel, params)
                save_model(models[mode], run_dir / "models" / MODEL_FILES[mode])
        stages.append("train")

    with _stage("forecast"):
        for mode, model in models.items():
            forecast_frame(model, test_panel, config.evaluation.horizons).to_csv(
                run_dir / "forecasts" / f"{MODEL_FILES[mode].replace('.npz', '')}_forecasts.csv",
                index=False, float_format="%.10g")
        stages.append("forecast")

    with _stage("evaluate"):
        report = evaluate_models(train_panel, test_panel, config.evaluation, list(config.forecast.targets),
                                 config.forecast.encoder_len, params=params, models=models, reference=panel,
                                 threads=config.runtime.threads, seeds=_seeds(config))
        write_report(report, run_dir / "reports", run_dir / "plots")
        stages.append("evaluate")

    if config.evaluation.cases:
        with _stage("cases"):
            cases = case_trajectories(panel, config.evaluation.cases, config.forecast.encoder_len,
                                      config.evaluation.horizons, list(config.forecast.targets),
                                      params=params, models=models)
            write_cases(cases, run_dir / "reports", run_dir / "plots")
            stages.append("cases")

    explained = models.get(MODE_HYBRID) or models.get(MODE_PURE)
    if explained is not None:
        with _stage("explain"):
            histories = _last_histories(explained, test_panel, config.explain.sample_size)
            attribution = explain_model(
                explained, histories, target=config.explain.target,
                n_permutations=config.explain.permutations, seed=config.runtime.seed,
                exact_threshold=config.explain.exact_threshold, threads=config.runtime.threads,
            )
            _write_attribution(attribution, config.explain.target, run_dir / "reports", run_dir / "plots")
            stages.append("explain")

        with _stage("represent"):
            ids, matrix = extract_hidden(explained, _last_histories(explained, test_panel))
            embedding = pca_project(matrix, 2, ids)
            table = representation_table(embedding, company_attributes(panel), config.explain.color_by)
            write_representation(table, embedding, config.explain.color_by, run_dir / "reports", run_dir / "plots")
            stages.append("represent")

    with _stage("manifest"):
        manifest = {
            "format_version": MANIFEST_FORMAT_VERSION,
            "stages": stages,
            "seeds": _seeds(config),
            "versions": _versions(),
            "config_file": "config.txt",
            "data_hash": panel.fingerprint(),
            "params_sha256": file_sha256(params_path),
            "model_hashes": {mode: model.parameter_hash() for mode, model in models.items()},
            "report_checksums": directory_checksums(run_dir / "reports"),
            "plot_checksums": directory_checksums(run_dir / "plots"),
        }
        write_json(run_dir / "manifest.json", manifest)
    logger.info(f"Run written to {run_dir}")


COMMANDS: Dict[str, Callable[[argparse.Namespace, Config], None]] = {
    "preprocess": cmd_preprocess,
    "fit-scaling": cmd_fit_scaling,
    "gm-forecast": cmd_gm_forecast,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "represent": cmd_represent,
    "synth": cmd_synth,
    "reproduce": cmd_reproduce,
}


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per pipeline stage."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file (section.key = value)")
    common.add_argument("--seed", type=int, help="master seed for every random stream")
    common.add_argument("--threads", type=int, help="worker cap for parallel evaluation")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="log level")

    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="firmcast", description="Firm growth forecasting pipeline",
                                     formatter_class=formatter)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], formatter_class=formatter,
                       help="select, filter, impute, deflate and log-transform a raw panel")
    p.add_argument("--input", required=True, help="raw panel file")
    p.add_argument("--output", "--out", dest="output", required=True, help="transformed panel file")
    p.add_argument("--cpi", help="CPI rate file (year, rate)")
    p.add_argument("--cutoff", type=float, help="indicator missing-fraction cutoff")
    p.add_argument("--min-years", type=int, help="minimum years per company")
    p.add_argument("--base-year", type=int, help="inflation base year")
    p.add_argument("--report", help="write the preprocessing report as JSON")

    p = sub.add_parser("fit-scaling", parents=[common], formatter_class=formatter,
                       help="fit power laws of every indicator against assets")
    p.add_argument("--train", "--input", dest="train", required=True, help="transformed training panel")
    p.add_argument("--out", required=True, help="growth parameters JSON")
    p.add_argument("--per-year", action="store_true", help="also write per-year cross-sectional fits")
    p.add_argument("--positive-only", action="store_true", help="fit net income on positive observations only")

    p = sub.add_parser("gm-forecast", parents=[common], formatter_class=formatter,
                       help="growth-model forecasts from every record")
    p.add_argument("--input", required=True, help="transformed panel file")
    p.add_argument("--params", required=True, help="growth parameters JSON")
    p.add_argument("--horizon", type=int, help="steps per origin (default: evaluation.horizons)")
    p.add_argument("--out", required=True, help="forecast CSV")

    p = sub.add_parser("train", parents=[common], formatter_class=formatter,
                       help="train the residual forecaster on the training partition")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--train", help="transformed training panel")
    source.add_argument("--input", help="full transformed panel, split with the split settings")
    p.add_argument("--val", help="transformed validation panel (with --train)")
    p.add_argument("--params", help="growth parameters JSON (needed for nn+gm)")
    p.add_argument("--mode", choices=[MODE_HYBRID, MODE_PURE], help="model variant (default: forecast.mode)")
    p.add_argument("--out", required=True, help="model file (.npz)")

    p = sub.add_parser("forecast", parents=[common], formatter_class=formatter,
                       help="closed-loop forecasts with a trained model")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--input", required=True, help="transformed panel file")
    p.add_argument("--horizon", type=int, help="steps (default: evaluation.horizons)")
    p.add_argument("--origin-year", type=int, help="common origin year (default: each company's last year)")
    p.add_argument("--mode", choices=[MODE_PURE, MODE_HYBRID], help="rollout (default: the model's own mode)")
    p.add_argument("--out", required=True, help="forecast CSV")

    p = sub.add_parser("evaluate", parents=[common], formatter_class=formatter,
                       help="score the model roster on the test partition")
    p.add_argument("--input", required=True, help="transformed panel file")
    p.add_argument("--params", help="growth parameters JSON")
    p.add_argument("--models", action=CommaList, allowed=MODEL_ROSTER, help="roster, comma separated (default: all five)")
    p.add_argument("--groupby", action=CommaList, allowed=GROUPINGS, help="breakdowns, comma separated")
    p.add_argument("--theta", action=CommaList, convert=float, help="GM accuracy thresholds, e.g. 0.3,0.4,0.5")
    p.add_argument("--horizons", type=horizon_range, help="scored steps, N or 1..N")
    p.add_argument("--nn-model", help="trained pure-NN model file")
    p.add_argument("--hybrid-model", help="trained NN+GM model file")
    p.add_argument("--cases", action=CommaList, help="company ids whose observed and forecast paths are plotted")
    p.add_argument("--report", "--out", dest="report", required=True, help="report directory")

    p = sub.add_parser("explain", parents=[common], formatter_class=formatter,
                       help="Shapley attribution of encoder features")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--input", required=True, help="transformed panel file")
    p.add_argument("--target", help="explained target (default: explain.target)")
    p.add_argument("--permutations", type=int, help="orderings in permutation mode")
    p.add_argument("--method", choices=[m.value for m in ShapleyMethod], default=ShapleyMethod.AUTO.value,
                   help="exact enumeration, permutation sampling, or automatic choice")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("represent", parents=[common], formatter_class=formatter,
                       help="PCA projection of encoder hidden states")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--input", required=True, help="transformed panel file")
    p.add_argument("--color-by", choices=["size", "age", "sector"], help="grouping used for colors")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", parents=[common], formatter_class=formatter,
                       help="generate a synthetic panel")
    p.add_argument("--out", required=True, help="panel file, or a directory with --suite")
    p.add_argument("--suite", action="store_true", help="write the three benchmark panels")
    p.add_argument("--nominal", action="store_true", help="nominal currency plus a matching CPI file")

    p = sub.add_parser("reproduce", parents=[common], formatter_class=formatter,
                       help="synthetic end-to-end run into a report directory")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seeds", type=int, nargs="+",
                   help="one run per seed under <out>/seed_<n>, plus averaged per-step MAE")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = {
        "runtime.threads": args.threads,
        "logging.level": args.log_level,
        "preprocess.missing_fraction_cutoff": getattr(args, "cutoff", None),
        "preprocess.min_series_length": getattr(args, "min_years", None),
        "preprocess.base_year": getattr(args, "base_year", None),
        "evaluation.models": getattr(args, "models", None),
        "evaluation.groupby": getattr(args, "groupby", None),
        "evaluation.thetas": getattr(args, "theta", None),
        "evaluation.horizons": getattr(args, "horizons", None),
        "evaluation.cases": getattr(args, "cases", None),
    }
    if args.seed is not None:
        for key in ("runtime.seed", "split.seed", "forecast.seed", "synth.seed"):
            overrides[key] = args.seed
    return overrides


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and run one subcommand.

    Args:
        argv: Arguments without the program name; sys.argv[1:] when None

    Returns:
        Exit status (0 ok, 1 stage failure, 2 usage error)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    try:
        config = load_config(args.config, _overrides(args))
    except (ValueError, OSError) as e:
        logging.basicConfig()
        logger.error(f"stage 'config' failed: {e}")
        return 1
    config.setup_logging()

    try:
        COMMANDS[args.command](args, config)
    except PipelineError as e:
        logger.error(e.message)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
