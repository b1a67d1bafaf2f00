"""
FirmCast - UI Module

This module contains the run viewer components and styling.
"""

from .styles import (
    COLORS,
    MODEL_COLORS,
    get_all_css,
    inject_custom_css,
    format_metric_card,
    format_model_tags,
    format_error_message,
)
from .components import (
    render_header,
    render_sidebar,
    render_metric_row,
    render_model_tags,
    render_table,
    render_plots,
    render_error_state,
    render_footer,
)
from .dashboard import (
    RunSummary,
    Dashboard,
    load_run,
    discover_runs,
    run_dashboard,
)

__all__ = [
    "COLORS",
    "MODEL_COLORS",
    "get_all_css",
    "inject_custom_css",
    "format_metric_card",
    "format_model_tags",
    "format_error_message",
    "render_header",
    "render_sidebar",
    "render_metric_row",
    "render_model_tags",
    "render_table",
    "render_plots",
    "render_error_state",
    "render_footer",
    "RunSummary",
    "Dashboard",
    "load_run",
    "discover_runs",
    "run_dashboard",
]
