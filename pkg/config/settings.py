"""
FirmCast - Configuration Management

Dynamic configuration system that loads from:
1. Command-line flags - Priority 1
2. key=value config files (section.key = value) - Priority 2
3. Environment variables (.env) - Priority 3
4. Default values - Priority 4
"""

import os
import logging
from pathlib import Path
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple
from functools import lru_cache

from dotenv import load_dotenv

# Load environment variables from .env file (if exists)
env_path = Path(__file__).parent.parent / ".env"
load_dotenv(env_path)

logger = logging.getLogger(__name__)


@dataclass
class PreprocessConfig:
    """Preprocessing configuration (feature selection through log transform)."""
    missing_fraction_cutoff: float = 0.40
    min_series_length: int = 3
    base_year: int = 2019
    anomaly_indicators: Tuple[str, ...] = ("AT", "LT", "REVT", "COGS")
    cpi_series: Optional[Dict[int, float]] = None

    def __post_init__(self):
        """Load preprocessing settings from environment."""
        if cutoff := os.getenv("MISSING_FRACTION_CUTOFF"):
            self.missing_fraction_cutoff = float(cutoff)
        if min_years := os.getenv("MIN_SERIES_LENGTH"):
            self.min_series_length = int(min_years)
        if base_year := os.getenv("BASE_YEAR"):
            self.base_year = int(base_year)


@dataclass
class ScalingConfig:
    """Power-law fitting configuration."""
    liability_code: str = "LT"
    income_code: str = "NI"
    positive_only_income: bool = False
    per_year: bool = False
    confidence: float = 0.95


@dataclass
class GrowthConfig:
    """Growth-equation integration settings."""
    dt: float = 1.0
    eps_den: float = 1e-6
    substeps: int = 1


@dataclass
class ForecastConfig:
    """Encoder-decoder residual forecaster configuration."""
    hidden_dim: int = 32
    encoder_len: int = 3
    decoder_len: int = 3
    targets: Tuple[str, ...] = ("AT", "LT", "REVT", "NI")
    features: Tuple[str, ...] = ()
    use_macro: bool = False
    learning_rate: float = 0.001
    weight_decay: float = 0.005
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 1
    mode: str = "nn+gm"
    scheduled_sampling: float = 0.0

    def __post_init__(self):
        """Load forecaster settings from environment."""
        if hidden := os.getenv("HIDDEN_DIM"):
            self.hidden_dim = int(hidden)
        if lr := os.getenv("LEARNING_RATE"):
            self.learning_rate = float(lr)
        if epochs := os.getenv("MAX_EPOCHS"):
            self.max_epochs = int(epochs)
        self.targets = tuple(self.targets)
        self.features = tuple(self.features)


@dataclass
class SplitSpec:
    """Dataset split: company-level 6:2:2 before the cutoff, everything after it to test."""
    cutoff_year: int = 2010
    ratios: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 1

    def __post_init__(self):
        """Load split settings from environment."""
        if cutoff := os.getenv("SPLIT_CUTOFF_YEAR"):
            self.cutoff_year = int(cutoff)
        self.ratios = tuple(float(r) for r in self.ratios)


@dataclass
class EvalConfig:
    """Evaluation configuration."""
    models: Tuple[str, ...] = ("persistence", "gibrat", "gm", "nn", "nn+gm")
    horizons: int = 10
    thetas: Tuple[float, ...] = (0.3, 0.4, 0.5)
    age_edges: Tuple[int, ...] = (3, 5, 10, 20)
    groupby: Tuple[str, ...] = ("size", "age", "sector", "gm-threshold")
    threshold_indicator: str = "AT"
    gibrat_sampling: bool = False
    cases: Tuple[str, ...] = ()


@dataclass
class ExplainConfig:
    """Shapley attribution and hidden-state representation configuration."""
    target: str = "AT"
    permutations: int = 500
    exact_threshold: int = 12
    sample_size: int = 50
    color_by: str = "size"


@dataclass
class SynthConfig:
    """Synthetic panel generator configuration."""
    n_companies: int = 200
    start_year: int = 1990
    end_year: int = 2019
    cutoff_year: int = 2010
    pre_cutoff_share: float = 0.7
    min_years: int = 6
    beta_l: float = 1.0
    ln_c_l: float = -0.734
    beta_i: float = 0.85
    ln_c_i: float = -0.246
    liability_sigma: float = 0.1
    income_sigma: float = 0.2
    # code -> (beta, ln_c, log-noise sigma)
    indicators: Dict[str, Tuple[float, float, float]] = field(default_factory=lambda: {
        "REVT": (0.9, -0.3, 0.3),
        "COGS": (0.92, -0.8, 0.3),
        "EMP": (0.7, -6.0, 0.3),
        "CH": (0.95, -2.5, 0.4),
    })
    assets_low: float = 1e5
    assets_high: float = 1e10
    noise_kind: str = "ar1"
    sigma0: float = 0.1
    rho: float = 0.6
    gamma: float = 0.2
    sectors: Tuple[str, ...] = ("manufacturing", "retail", "services", "technology", "utilities")
    reference_assets: float = 1e6
    sector_volatility: Dict[str, float] = field(default_factory=lambda: {"utilities": 0.5})
    nominal: bool = False
    inflation_mean: float = 3.0
    euler_substeps: int = 1
    seed: int = 1


@dataclass
class RuntimeConfig:
    """Process-wide runtime settings."""
    seed: int = 1
    threads: int = 1
    deterministic: bool = True

    def __post_init__(self):
        """Load runtime settings from environment."""
        if seed := os.getenv("RANDOM_SEED"):
            self.seed = int(seed)
        if threads := os.getenv("THREADS"):
            self.threads = int(threads)


@dataclass
class UIConfig:
    """Dashboard configuration."""
    app_title: str = "FirmCast"
    app_subtitle: str = "Firm growth forecasting run viewer"
    theme_color: str = "#8b5cf6"
    runs_root: str = "runs"

    def __post_init__(self):
        """Load UI settings from environment."""
        if title := os.getenv("APP_TITLE"):
            self.app_title = title
        if color := os.getenv("THEME_COLOR"):
            self.theme_color = color
        if root := os.getenv("RUNS_ROOT"):
            self.runs_root = root


@dataclass
class LoggingConfig:
    """Logging configuration."""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    def __post_init__(self):
        """Load logging settings from environment."""
        if level := os.getenv("LOG_LEVEL"):
            self.level = level.upper()


def _coerce(raw: str, current: Any, name: str) -> Any:
    """Convert a config-file string to the type of the current value."""
    raw = raw.strip()
    if isinstance(current, bool):
        return raw.lower() in ("true", "1", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        items = [item.strip() for item in raw.split(",") if item.strip()]
        sample = current[0] if current else ""
        if isinstance(sample, (int, float)) and not isinstance(sample, bool):
            return tuple(type(sample)(item) for item in items)
        return tuple(items)
    if isinstance(current, dict) or current is None:
        # "KEY:v1/v2/v3; KEY2:v" or "2001:2.1; 2002:1.9"
        parsed: Dict[Any, Any] = {}
        for entry in raw.split(";"):
            if not entry.strip():
                continue
            key, _, value = entry.partition(":")
            key = key.strip()
            parts = [float(v) for v in value.split("/")]
            parsed_key = int(key) if key.lstrip("-").isdigit() else key
            parsed[parsed_key] = parts[0] if len(parts) == 1 else tuple(parts)
        return parsed
    return raw


def _format(value: Any) -> str:
    """Inverse of _coerce, used for the resolved-config dump."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, dict):
        entries = []
        for key, item in value.items():
            if isinstance(item, tuple):
                entries.append(f"{key}:" + "/".join(repr(float(v)) for v in item))
            else:
                entries.append(f"{key}:{float(item)!r}")
        return "; ".join(entries)
    if value is None:
        return ""
    return str(value)


@dataclass
class Config:
    """Main configuration class holding all sub-configurations."""
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    growth: GrowthConfig = field(default_factory=GrowthConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    ui: UIConfig = field(default_factory=UIConfig)

    @property
    def project_root(self) -> Path:
        """Get the project root directory."""
        return Path(__file__).parent.parent

    def set_value(self, dotted_key: str, raw: str) -> None:
        """
        Set one value from its dotted key and string form.

        Args:
            dotted_key: "section.key" as used in config files
            raw: String value
        """
        section_name, _, key = dotted_key.strip().partition(".")
        section = getattr(self, section_name, None)
        if section is None or not key or not hasattr(section, key):
            raise ValueError(f"Unknown configuration key: {dotted_key}")
        setattr(section, key, _coerce(raw, getattr(section, key), dotted_key))

    def apply_overrides(self, overrides: Dict[str, Any]) -> "Config":
        """
        Apply already-typed overrides (CLI flags); None values are ignored.

        Args:
            overrides: Mapping of "section.key" to value

        Returns:
            self, for chaining
        """
        for dotted_key, value in overrides.items():
            if value is None:
                continue
            section_name, _, key = dotted_key.partition(".")
            section = getattr(self, section_name)
            if not hasattr(section, key):
                raise ValueError(f"Unknown configuration key: {dotted_key}")
            current = getattr(section, key)
            if isinstance(current, tuple) and isinstance(value, list):
                value = tuple(value)
            setattr(section, key, value)
        return self

    def load_file(self, path: str | Path) -> "Config":
        """
        Apply a key=value config file.

        Args:
            path: Config file; blank lines and lines starting with '#' are skipped

        Returns:
            self, for chaining
        """
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                # values may contain '#' (theme colors), so only whole-line comments
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{line_no}: expected key = value")
                key, _, value = line.partition("=")
                self.set_value(key, value)
        logger.info(f"Loaded configuration file {path}")
        return self

    def to_lines(self) -> List[str]:
        """Resolved configuration in key=value form (replayable with load_file)."""
        lines = []
        for section in fields(self):
            block = getattr(self, section.name)
            for item in fields(block):
                value = getattr(block, item.name)
                if value is None:
                    continue
                lines.append(f"{section.name}.{item.name} = {_format(value)}")
        return lines

    def validate(self) -> bool:
        """
        Validate configuration.
        Returns True if valid, raises ValueError otherwise.
        """
        from utils.validators import validate_config

        errors = validate_config(self)
        if errors:
            raise ValueError("Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors))

        return True

    def setup_logging(self):
        """Setup logging based on configuration."""
        log_level = getattr(logging, self.logging.level, logging.INFO)
        logging.basicConfig(
            level=log_level,
            format=self.logging.format,
            force=True
        )
        logger.setLevel(log_level)


def load_config(path: Optional[str | Path] = None, overrides: Optional[Dict[str, Any]] = None) -> Config:
    """
    Build a configuration from defaults, environment, an optional file and overrides.

    Args:
        path: Optional key=value config file
        overrides: Optional "section.key" -> value mapping (CLI flags)

    Returns:
        Validated Config
    """
    config = Config()
    if path:
        config.load_file(path)
    if overrides:
        config.apply_overrides(overrides)
    config.validate()
    return config


@lru_cache
def get_config() -> Config:
    """
    Get the singleton configuration instance.
    This is cached to avoid reloading configuration on every call.
    """
    config = Config()
    config.setup_logging()
    return config


def get_config_with_validation() -> Config:
    """
    Get configuration with validation.
    Raises ValueError if configuration is invalid.
    """
    config = get_config()
    config.validate()
    return config


def get_ui_config() -> UIConfig:
    """Get dashboard configuration; raises ValueError if the environment gives an invalid configuration."""
    return get_config_with_validation().ui
