"""
FirmCast - UI Components

Reusable UI components for the run viewer.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import streamlit as st

from config import get_ui_config
from .styles import COLORS, format_error_message, format_metric_card, format_model_tags

logger = logging.getLogger(__name__)


def render_header(status_text: str = "No run loaded", status_color: str = "amber") -> None:
    """
    Render the application header.

    Args:
        status_text: Status text to display
        status_color: Color of the status indicator (green, red, amber)
    """
    ui_config = get_ui_config()
    col1, col2 = st.columns([3, 1])

    with col1:
        st.markdown(f"""
        <div style="
            background: linear-gradient(135deg, {COLORS["primary_start"]}, {COLORS["primary_mid"]}, {COLORS["primary_end"]});
            -webkit-background-clip: text;
            -webkit-text-fill-color: transparent;
            font-size: 26px;
            font-weight: 700;
            letter-spacing: -0.02em;
        ">
            {ui_config.app_title}
        </div>
        <div style="color: {COLORS["text_secondary"]}; font-size: 14px;">{ui_config.app_subtitle}</div>
        """, unsafe_allow_html=True)

    with col2:
        status_colors = {
            "green": COLORS["success"],
            "red": COLORS["error"],
            "amber": COLORS["warning"],
        }
        dot_color = status_colors.get(status_color, COLORS["warning"])
        st.markdown(f"""
        <div style="
            display: flex;
            align-items: center;
            gap: 8px;
            padding: 8px 14px;
            background: {COLORS["bg_secondary"]};
            border-radius: 9999px;
            font-size: 13px;
        ">
            <div style="width: 10px; height: 10px; border-radius: 50%; background: {dot_color};"></div>
            <span style="color: {COLORS["text_secondary"]};">{status_text}</span>
        </div>
        """, unsafe_allow_html=True)


def render_sidebar(run_dirs: Sequence[Path], default: Optional[str] = None) -> Optional[str]:
    """
    Render the run picker.

    Args:
        run_dirs: Run directories found under the runs root
        default: Pre-filled path

    Returns:
        The chosen run directory, or None
    """
    with st.sidebar:
        st.markdown("### Run")
        options = [str(p) for p in run_dirs]
        chosen = st.selectbox("Discovered runs", options, index=0) if options else None
        typed = st.text_input("Or enter a run directory", value=default or "")
        st.markdown("---")
        st.caption("Reads reproduce / evaluate output directories. Runs are never modified.")
    return typed.strip() or chosen


def render_metric_row(metrics: Dict[str, str]) -> None:
    """One card per metric, side by side."""
    if not metrics:
        return
    columns = st.columns(len(metrics))
    for column, (label, value) in zip(columns, metrics.items()):
        with column:
            st.markdown(format_metric_card(label, value), unsafe_allow_html=True)


def render_model_tags(models: Sequence[str]) -> None:
    st.markdown(format_model_tags(models), unsafe_allow_html=True)


def render_table(title: str, frame: Optional[pd.DataFrame]) -> None:
    """Titled dataframe, or a note when the table is absent."""
    st.markdown(f"#### {title}")
    if frame is None:
        st.caption("absent from this run")
        return
    st.dataframe(frame, use_container_width=True, hide_index=True)


def render_plots(paths: List[Path], columns: int = 2) -> None:
    """Inline SVG plots in a grid."""
    if not paths:
        st.caption("no plots in this run")
        return
    grid = st.columns(columns)
    for index, path in enumerate(paths):
        svg = path.read_text(encoding="utf-8")
        start = svg.find("<svg")
        with grid[index % columns]:
            st.markdown(f"**{path.stem}**")
            st.markdown(svg[start:] if start >= 0 else svg, unsafe_allow_html=True)


def render_error_state(error_message: str) -> None:
    """
    Render an error state when something goes wrong.

    Args:
        error_message: Error message to display
    """
    st.markdown(format_error_message(error_message), unsafe_allow_html=True)


def render_footer() -> None:
    """Render the footer."""
    st.markdown(f"""
    <div style="
        text-align: center;
        padding: 20px;
        color: {COLORS['text_tertiary']};
        font-size: 12px;
    ">
        {get_ui_config().app_title} run viewer
    </div>
    """, unsafe_allow_html=True)
