"""
FirmCast - UI Styles

CSS styling for the Streamlit run viewer.
"""

from config import get_ui_config

ui_config = get_ui_config()

# Color palette
COLORS = {
    "primary_start": "#6366f1",    # Indigo
    "primary_mid": ui_config.theme_color,
    "primary_end": "#d946ef",      # Fuchsia
    "accent_glow": "rgba(139, 92, 246, 0.4)",
    "bg_primary": "#fafafa",
    "bg_secondary": "#f5f5f7",
    "bg_glass_strong": "rgba(255, 255, 255, 0.95)",
    "text_primary": "#111111",
    "text_secondary": "#6b7280",
    "text_tertiary": "#9ca3af",
    "border_subtle": "rgba(0, 0, 0, 0.06)",
    "success": "#10b981",
    "error": "#ef4444",
    "warning": "#f59e0b",
}

# Fixed colors per model so every plot and table badge agrees
MODEL_COLORS = {
    "persistence": "#9ca3af",
    "gibrat": "#f59e0b",
    "gm": "#10b981",
    "nn": "#6366f1",
    "nn+gm": "#d946ef",
}


def get_background_css() -> str:
    """Get the page background CSS."""
    return f"""
    <style>
        .stApp {{
            background: linear-gradient(180deg, {COLORS["bg_primary"]}, {COLORS["bg_secondary"]});
        }}
    </style>
    """


def get_panel_css() -> str:
    """Get glass panel and metric card CSS."""
    return f"""
    <style>
        .glass-container {{
            background: {COLORS["bg_glass_strong"]};
            backdrop-filter: blur(20px) saturate(180%);
            -webkit-backdrop-filter: blur(20px) saturate(180%);
            border-radius: 16px;
            border: 1px solid {COLORS["border_subtle"]};
            box-shadow: 0 4px 6px -1px rgba(0, 0, 0, 0.07), 0 2px 4px -1px rgba(0, 0, 0, 0.06);
            padding: 16px 20px;
            margin-bottom: 16px;
        }}

        .metric-card {{
            background: white;
            border-radius: 12px;
            padding: 12px 16px;
            border-left: 4px solid {COLORS["primary_mid"]};
            box-shadow: 0 2px 8px rgba(0, 0, 0, 0.06);
        }}

        .metric-label {{
            font-size: 12px;
            color: {COLORS["text_tertiary"]};
            text-transform: uppercase;
            letter-spacing: 0.04em;
        }}

        .metric-value {{
            font-size: 20px;
            font-weight: 600;
            color: {COLORS["text_primary"]};
        }}

        .message-error {{
            background: rgba(239, 68, 68, 0.1);
            color: {COLORS["error"]};
            padding: 12px 18px;
            border-radius: 12px;
            border-left: 4px solid {COLORS["error"]};
        }}
    </style>
    """


def get_model_tag_css() -> str:
    """Get model badge CSS."""
    rules = "".join(
        f"""
        .model-tag-{name.replace("+", "-")} {{
            background: {color};
        }}
        """
        for name, color in MODEL_COLORS.items()
    )
    return f"""
    <style>
        .model-tag {{
            color: white;
            padding: 4px 10px;
            border-radius: 9999px;
            font-size: 11px;
            font-weight: 600;
            display: inline-block;
            margin: 2px 4px 2px 0;
        }}
        {rules}
    </style>
    """


def get_all_css() -> str:
    """
    Combine all CSS into a single string for injection.

    Returns:
        Complete CSS string for use in st.markdown()
    """
    return "".join([
        get_background_css(),
        get_panel_css(),
        get_model_tag_css(),
    ])


def inject_custom_css():
    """
    Inject all custom CSS into the Streamlit app.
    Call this once at the beginning of your app.
    """
    import streamlit as st
    st.markdown(get_all_css(), unsafe_allow_html=True)


def format_metric_card(label: str, value: str) -> str:
    """Format one labelled value as a card."""
    return f"""
    <div class="metric-card">
        <div class="metric-label">{label}</div>
        <div class="metric-value">{value}</div>
    </div>
    """


def format_model_tags(models) -> str:
    """Badges for a model roster."""
    tags = "".join(
        f'<span class="model-tag model-tag-{name.replace("+", "-")}">{name}</span>' for name in models
    )
    return f'<div>{tags}</div>'


def format_error_message(content: str) -> str:
    """Format an error message for display."""
    return f"""
    <div class="message-error">
        {content}
    </div>
    """
