"""
FirmCast - Dashboard Module

Read-only viewer for reproduce / evaluate run directories.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import streamlit as st

from config import get_ui_config
from . import (
    inject_custom_css,
    render_error_state,
    render_footer,
    render_header,
    render_metric_row,
    render_model_tags,
    render_plots,
    render_sidebar,
    render_table,
)

logger = logging.getLogger(__name__)

REPORT_TABLES = ("per_step_mae", "company_mae", "cdf", "groups", "representation")


@dataclass
class RunSummary:
    """Everything the viewer shows for one run; absent pieces are listed in missing."""
    run_dir: Path
    manifest: Optional[Dict[str, Any]] = None
    header: Dict[str, str] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    plots: List[Path] = field(default_factory=list)
    config_lines: List[str] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)

    @property
    def models(self) -> List[str]:
        roster = self.header.get("models", "")
        return [m for m in roster.split(",") if m]

    @property
    def is_empty(self) -> bool:
        return self.manifest is None and not self.header and not self.tables


def _read_header(path: Path) -> Dict[str, str]:
    header = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        key, sep, value = line.partition(":")
        if sep:
            header[key.strip()] = value.strip()
    return header


def load_run(run_dir: str | Path) -> RunSummary:
    """
    Collect manifest, report tables and plot paths from a run directory.

    Works on both layouts: reproduce (reports/ and plots/ subdirectories) and
    evaluate (tables at the top level, plots/ below them). Nothing raises on a
    missing or unreadable piece; it is listed in RunSummary.missing instead.

    Args:
        run_dir: Run directory

    Returns:
        RunSummary
    """
    run_dir = Path(run_dir)
    summary = RunSummary(run_dir=run_dir)
    if not run_dir.is_dir():
        summary.missing.append("run directory")
        return summary

    manifest_path = run_dir / "manifest.json"
    try:
        summary.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        logger.debug(f"No manifest in {run_dir}: {e}")
        summary.missing.append("manifest.json")

    reports = run_dir / "reports" if (run_dir / "reports").is_dir() else run_dir
    header = reports / "header.txt"
    if header.exists():
        summary.header = _read_header(header)
    else:
        summary.missing.append("header.txt")

    for name in REPORT_TABLES:
        path = reports / f"{name}.csv"
        try:
            summary.tables[name] = pd.read_csv(path)
        except (OSError, ValueError, pd.errors.EmptyDataError):
            summary.missing.append(f"{name}.csv")
    for path in sorted(reports.glob("shapley_*.csv")):
        summary.tables[path.stem] = pd.read_csv(path)

    plots = run_dir / "plots" if (run_dir / "plots").is_dir() else reports / "plots"
    summary.plots = sorted(plots.glob("*.svg")) if plots.is_dir() else []
    if not summary.plots:
        summary.missing.append("plots")

    config_file = run_dir / "config.txt"
    if config_file.exists():
        summary.config_lines = config_file.read_text(encoding="utf-8").splitlines()

    logger.info(f"Loaded run {run_dir}: {len(summary.tables)} table(s), {len(summary.plots)} plot(s), "
                f"missing {summary.missing}")
    return summary


def discover_runs(root: str | Path) -> List[Path]:
    """Directories under root holding a manifest or an evaluation header."""
    root = Path(root)
    if not root.is_dir():
        return []
    found = [p for p in sorted(root.iterdir())
             if p.is_dir() and ((p / "manifest.json").exists() or (p / "header.txt").exists()
                                or (p / "reports" / "header.txt").exists())]
    return found


def _mae_pivot(per_step: pd.DataFrame, indicator: str) -> pd.DataFrame:
    rows = per_step[per_step["indicator"] == indicator]
    return rows.pivot(index="step", columns="model", values="mae").reset_index()


class Dashboard:
    """Renders one RunSummary."""

    def __init__(self):
        self.ui_config = get_ui_config()

    def render(self, summary: RunSummary) -> None:
        manifest = summary.manifest or {}
        seeds = manifest.get("seeds", {})
        render_metric_row({
            "master seed": str(seeds.get("master", summary.header.get("seed.master", "-"))),
            "origins": summary.header.get("origins", "-"),
            "companies": summary.header.get("companies", "-"),
            "horizons": summary.header.get("horizons", "-"),
        })
        if summary.models:
            render_model_tags(summary.models)
        if summary.missing:
            st.caption("Absent: " + ", ".join(summary.missing))

        per_step = summary.tables.get("per_step_mae")
        if per_step is not None and not per_step.empty:
            st.markdown("### MAE by forecast step")
            indicators = sorted(per_step["indicator"].unique())
            tabs = st.tabs(indicators)
            for tab, indicator in zip(tabs, indicators):
                with tab:
                    st.dataframe(_mae_pivot(per_step, indicator), use_container_width=True, hide_index=True)
        else:
            render_table("MAE by forecast step", None)

        for name in sorted(summary.tables):
            if name.startswith("shapley_") and not name.endswith("_by_company"):
                render_table(f"Feature attribution ({name.removeprefix('shapley_')})", summary.tables[name])
        render_table("Groups", summary.tables.get("groups"))

        st.markdown("### Plots")
        render_plots(summary.plots)

        if manifest:
            with st.expander("Manifest"):
                st.json(manifest)
        if summary.config_lines:
            with st.expander("Resolved configuration"):
                st.code("\n".join(summary.config_lines), language="ini")


def run_dashboard() -> None:
    """Main entry point for the Streamlit viewer."""
    st.set_page_config(page_title=get_ui_config().app_title, layout="wide")
    inject_custom_css()

    ui_config = get_ui_config()
    chosen = render_sidebar(discover_runs(ui_config.runs_root))
    if not chosen:
        render_header()
        st.info(f"No run selected. Create one with `python cli.py reproduce --out {ui_config.runs_root}/run1`.")
        render_footer()
        return

    summary = load_run(chosen)
    if summary.is_empty:
        render_header(f"Nothing to show in {chosen}", "red")
        render_error_state(f"{chosen} has no manifest, header or report tables.")
    else:
        render_header(f"Run {summary.run_dir.name}", "green")
        Dashboard().render(summary)
    render_footer()
