"""
FirmCast - Panel Module

Domain types for company panel data plus ingestion, validation and serialization
of delimiter-separated annual records.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.artifacts import sha256_bytes
from utils.exceptions import IntegrityError, SchemaError

logger = logging.getLogger(__name__)

MANDATORY_COLUMNS = ("company_id", "fiscal_year", "sector")

TRANSFORM_LOG = "log"
TRANSFORM_LINLOG = "linlog"
TRANSFORM_NONE = "none"

FLAG_OBSERVED = "observed"
FLAG_IMPUTED = "imputed"
FLAG_TRANSFORMED = "transformed"

STATEMENT_YEAR_RANGE = (1950, 2019)


@dataclass(frozen=True)
class IndicatorSpec:
    """Registry entry for one indicator code."""
    code: str
    description: str = ""
    monetary: bool = True
    macro: bool = False
    transform: str = TRANSFORM_LOG


class IndicatorRegistry:
    """Ordered set of financial and macro indicators known to a panel."""

    def __init__(self, specs: Iterable[IndicatorSpec]):
        self._specs: Dict[str, IndicatorSpec] = {}
        for spec in specs:
            if spec.code in self._specs:
                raise SchemaError(f"Duplicate indicator code in registry: {spec.code}")
            self._specs[spec.code] = spec

    @classmethod
    def default(cls) -> "IndicatorRegistry":
        """Financial statement codes plus macroeconomic codes."""
        return cls(DEFAULT_FINANCIAL + DEFAULT_MACRO)

    @property
    def codes(self) -> List[str]:
        return list(self._specs)

    @property
    def financial_codes(self) -> List[str]:
        return [c for c, s in self._specs.items() if not s.macro]

    @property
    def macro_codes(self) -> List[str]:
        return [c for c, s in self._specs.items() if s.macro]

    @property
    def monetary_codes(self) -> List[str]:
        return [c for c, s in self._specs.items() if s.monetary]

    def get(self, code: str) -> IndicatorSpec:
        """Look up a code, raising SchemaError when unregistered."""
        try:
            return self._specs[code]
        except KeyError:
            raise SchemaError(f"Unregistered indicator: {code}") from None

    def transform_of(self, code: str) -> str:
        """Transform kind for a code (log | linlog | none)."""
        return self.get(code).transform

    def restrict(self, codes: Iterable[str]) -> "IndicatorRegistry":
        """Registry keeping only the given codes, in registry order."""
        keep = set(codes)
        return IndicatorRegistry(s for c, s in self._specs.items() if c in keep)

    def without(self, codes: Iterable[str]) -> "IndicatorRegistry":
        """Registry dropping the given codes."""
        drop = set(codes)
        return IndicatorRegistry(s for c, s in self._specs.items() if c not in drop)

    def __contains__(self, code: object) -> bool:
        return code in self._specs

    def __iter__(self) -> Iterator[IndicatorSpec]:
        return iter(self._specs.values())

    def __len__(self) -> int:
        return len(self._specs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IndicatorRegistry) and list(self) == list(other)

    def __repr__(self) -> str:
        return f"IndicatorRegistry({self.codes})"


DEFAULT_FINANCIAL = [
    IndicatorSpec("EMP", "Employees", monetary=False, transform=TRANSFORM_LINLOG),
    IndicatorSpec("AT", "Assets"),
    IndicatorSpec("ACO", "Current Assets - Other", transform=TRANSFORM_LINLOG),
    IndicatorSpec("LT", "Liabilities"),
    IndicatorSpec("DLTT", "Long-Term Debt", transform=TRANSFORM_LINLOG),
    IndicatorSpec("DD1", "Long-Term Debt Due in One Year", transform=TRANSFORM_LINLOG),
    IndicatorSpec("CSTK", "Common/Ordinary Stock (Capital)", transform=TRANSFORM_LINLOG),
    IndicatorSpec("CEQ", "Common/Ordinary Equity", transform=TRANSFORM_LINLOG),
    IndicatorSpec("REVT", "Revenue"),
    IndicatorSpec("NI", "Net Income (Loss)", transform=TRANSFORM_LINLOG),
    IndicatorSpec("XSGA", "Selling, General and Administrative Expenses", transform=TRANSFORM_LINLOG),
    IndicatorSpec("RE", "Retained Earnings", transform=TRANSFORM_LINLOG),
    IndicatorSpec("EBITDA", "Earnings Before Interest, Taxes, Depreciation and Amortization",
                  transform=TRANSFORM_LINLOG),
    IndicatorSpec("COGS", "Cost of Goods Sold"),
    IndicatorSpec("TXT", "Income Taxes", transform=TRANSFORM_LINLOG),
    IndicatorSpec("XINT", "Interest and Related Expenses", transform=TRANSFORM_LINLOG),
    IndicatorSpec("CH", "Cash", transform=TRANSFORM_LINLOG),
]

DEFAULT_MACRO = [
    IndicatorSpec("MXPT", "Merchandise exports (current US$)", macro=True),
    IndicatorSpec("DCRD", "Domestic credit provided by financial sector", macro=True),
    IndicatorSpec("GDP", "GDP (current US$)", macro=True),
    IndicatorSpec("MIMP", "Merchandise imports (current US$)", macro=True),
    IndicatorSpec("EXPG", "Exports of goods and services (% of GDP)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
    IndicatorSpec("INFL", "Inflation, consumer prices (annual %)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
    IndicatorSpec("STKTR", "Stocks traded, turnover ratio of domestic shares (%)", monetary=False,
                  macro=True, transform=TRANSFORM_NONE),
    IndicatorSpec("BMG", "Broad money growth (annual %)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
    IndicatorSpec("REVG", "Revenue, excluding grants (% of GDP)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
    IndicatorSpec("BMNY", "Broad money (% of GDP)", monetary=False, macro=True, transform=TRANSFORM_NONE),
    IndicatorSpec("DEPR", "Deposit interest rate (%)", monetary=False, macro=True, transform=TRANSFORM_NONE),
    IndicatorSpec("LENR", "Lending interest rate (%)", monetary=False, macro=True, transform=TRANSFORM_NONE),
    IndicatorSpec("GDPPCG", "GDP per capita growth (annual %)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
    IndicatorSpec("EXPN", "Expense (% of GDP)", monetary=False, macro=True, transform=TRANSFORM_NONE),
    IndicatorSpec("GDPG", "GDP growth (annual %)", monetary=False, macro=True, transform=TRANSFORM_NONE),
    IndicatorSpec("IMPG", "Imports of goods and services (% of GDP)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
    IndicatorSpec("STKV", "Stocks traded, total value (% of GDP)", monetary=False, macro=True,
                  transform=TRANSFORM_NONE),
]


@dataclass
class CompanyRecord:
    """One (company, fiscal year) row."""
    company_id: str
    fiscal_year: int
    values: Dict[str, Optional[float]] = field(default_factory=dict)
    sector: str = ""
    flags: Dict[str, str] = field(default_factory=dict)

    def value(self, code: str) -> Optional[float]:
        """Value for a code, None when absent."""
        return self.values.get(code)

    def has(self, code: str) -> bool:
        return self.values.get(code) is not None

    def copy(self) -> "CompanyRecord":
        return replace(self, values=dict(self.values), flags=dict(self.flags))


@dataclass(frozen=True)
class PanelMeta:
    """Panel-level processing state."""
    base_year: Optional[int] = None
    inflation_adjusted: bool = False
    transformed: bool = False
    parse_warnings: int = 0
    source: str = ""


class CompanyPanel:
    """
    Per-company annual records with an indicator registry.

    Panels are treated as immutable: every processing step builds a new panel.
    """

    def __init__(
        self,
        companies: Dict[str, List[CompanyRecord]],
        registry: IndicatorRegistry,
        meta: Optional[PanelMeta] = None,
    ):
        self._companies = {
            cid: sorted(records, key=lambda r: r.fiscal_year)
            for cid, records in sorted(companies.items())
            if records
        }
        self.registry = registry
        self.meta = meta or PanelMeta()

    @classmethod
    def from_records(
        cls,
        records: Iterable[CompanyRecord],
        registry: IndicatorRegistry,
        meta: Optional[PanelMeta] = None,
    ) -> "CompanyPanel":
        """Group flat records by company."""
        grouped: Dict[str, List[CompanyRecord]] = {}
        for record in records:
            grouped.setdefault(record.company_id, []).append(record)
        return cls(grouped, registry, meta)

    @property
    def companies(self) -> List[str]:
        return list(self._companies)

    @property
    def n_companies(self) -> int:
        return len(self._companies)

    @property
    def n_records(self) -> int:
        return sum(len(r) for r in self._companies.values())

    def records(self, company_id: str) -> List[CompanyRecord]:
        return self._companies.get(company_id, [])

    def all_records(self) -> Iterator[CompanyRecord]:
        for records in self._companies.values():
            yield from records

    def years(self, company_id: str) -> np.ndarray:
        return np.array([r.fiscal_year for r in self.records(company_id)], dtype=int)

    def series(self, company_id: str, code: str) -> np.ndarray:
        """Values of one indicator for one company, NaN where absent."""
        return np.array(
            [np.nan if r.value(code) is None else r.value(code) for r in self.records(company_id)],
            dtype=float,
        )

    def sector(self, company_id: str) -> str:
        records = self.records(company_id)
        return records[0].sector if records else ""

    def year_span(self) -> tuple[int, int]:
        years = [r.fiscal_year for r in self.all_records()]
        return (min(years), max(years)) if years else (0, 0)

    def subset(self, company_ids: Iterable[str]) -> "CompanyPanel":
        """Panel restricted to some companies."""
        keep = set(company_ids)
        return CompanyPanel(
            {cid: [r.copy() for r in recs] for cid, recs in self._companies.items() if cid in keep},
            self.registry,
            self.meta,
        )

    def derive(
        self,
        companies: Optional[Dict[str, List[CompanyRecord]]] = None,
        registry: Optional[IndicatorRegistry] = None,
        **meta_changes,
    ) -> "CompanyPanel":
        """New panel sharing unspecified parts with this one."""
        return CompanyPanel(
            companies if companies is not None else
            {cid: [r.copy() for r in recs] for cid, recs in self._companies.items()},
            registry if registry is not None else self.registry,
            replace(self.meta, **meta_changes) if meta_changes else self.meta,
        )

    def fingerprint(self) -> str:
        """SHA-256 over the canonical CSV rendering."""
        frame = panel_to_frame(self)
        text = frame.to_csv(index=False, float_format="%.17g", na_rep="")
        return sha256_bytes(f"{self.meta.transformed}|{text}".encode("utf-8"))

    def __len__(self) -> int:
        return self.n_companies

    def __repr__(self) -> str:
        return (f"CompanyPanel(companies={self.n_companies}, records={self.n_records}, "
                f"indicators={len(self.registry)}, transformed={self.meta.transformed})")


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_panel."""
    kind: str
    company_id: str
    fiscal_year: Optional[int]
    indicator: Optional[str]
    message: str


def _detect_delimiter(path: Path) -> str:
    if path.suffix.lower() in (".tsv", ".tab"):
        return "\t"
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
    return "\t" if "\t" in header and "," not in header else ","


def load_panel(
    path: str | Path,
    registry: Optional[IndicatorRegistry] = None,
    delimiter: Optional[str] = None,
) -> CompanyPanel:
    """
    Load a delimiter-separated panel file.

    Args:
        path: Input file (one row per company and fiscal year)
        registry: Indicator registry; defaults to the full default registry
        delimiter: Column delimiter; inferred (comma or tab) when None

    Returns:
        CompanyPanel whose registry holds the registered indicators found in the header

    Raises:
        FileNotFoundError: If the file doesn't exist
        SchemaError: On missing mandatory columns or unregistered headers
        IntegrityError: On duplicate (company_id, fiscal_year) rows
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Panel file not found: {path}")

    registry = registry or IndicatorRegistry.default()
    delimiter = delimiter or _detect_delimiter(path)

    frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, encoding="utf-8")
    frame.columns = [c.strip() for c in frame.columns]

    missing = [c for c in MANDATORY_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing mandatory column(s) {missing}")

    indicator_columns = [c for c in frame.columns if c not in MANDATORY_COLUMNS]
    unknown = [c for c in indicator_columns if c not in registry]
    if unknown:
        raise SchemaError(f"{path}: columns not in the indicator registry: {unknown}")

    try:
        frame["fiscal_year"] = frame["fiscal_year"].str.strip().astype(int)
    except ValueError as e:
        raise SchemaError(f"{path}: fiscal_year column is not integer: {e}") from None

    duplicated = frame.duplicated(subset=["company_id", "fiscal_year"], keep=False)
    if duplicated.any():
        pairs = sorted(set(zip(frame.loc[duplicated, "company_id"], frame.loc[duplicated, "fiscal_year"])))
        raise IntegrityError(f"{path}: duplicate (company_id, fiscal_year) rows: {pairs[:5]}")

    warnings = 0
    numeric = {}
    for code in indicator_columns:
        raw = frame[code].str.strip()
        values = pd.to_numeric(raw, errors="coerce")
        bad = (raw != "") & ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        warnings += int(bad.sum())
        values[bad] = np.nan
        numeric[code] = values.to_numpy(dtype=float, na_value=np.nan)

    if warnings:
        logger.warning(f"{path}: {warnings} unparseable numeric cell(s) treated as absent")

    panel_registry = registry.restrict(indicator_columns)
    records = []
    for row_index, (cid, year, sector) in enumerate(
        zip(frame["company_id"], frame["fiscal_year"], frame["sector"])
    ):
        values = {}
        flags = {}
        for code in panel_registry.codes:
            v = numeric[code][row_index]
            values[code] = None if math.isnan(v) else float(v)
            if values[code] is not None:
                flags[code] = FLAG_OBSERVED
        records.append(CompanyRecord(str(cid), int(year), values, sector.strip(), flags))

    panel = CompanyPanel.from_records(
        records, panel_registry, PanelMeta(parse_warnings=warnings, source=str(path))
    )
    logger.info(f"Loaded panel from {path}: {panel.n_companies} companies, {panel.n_records} records")
    return panel


def panel_to_frame(panel: CompanyPanel) -> pd.DataFrame:
    """Flatten a panel to one row per (company, fiscal year)."""
    codes = panel.registry.codes
    rows = []
    for record in panel.all_records():
        row = {"company_id": record.company_id, "fiscal_year": record.fiscal_year, "sector": record.sector}
        for code in codes:
            v = record.value(code)
            row[code] = np.nan if v is None else v
        rows.append(row)
    return pd.DataFrame(rows, columns=list(MANDATORY_COLUMNS) + codes)


def panel_from_frame(
    frame: pd.DataFrame,
    registry: Optional[IndicatorRegistry] = None,
    meta: Optional[PanelMeta] = None,
) -> CompanyPanel:
    """
    Inverse of panel_to_frame; NaN cells become absent values.

    Raises:
        SchemaError: On missing mandatory columns or unregistered indicator columns
    """
    registry = registry or IndicatorRegistry.default()
    missing = [c for c in MANDATORY_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"frame lacks mandatory column(s) {missing}")
    codes = [c for c in frame.columns if c not in MANDATORY_COLUMNS]
    unknown = [c for c in codes if c not in registry]
    if unknown:
        raise SchemaError(f"frame columns not in the indicator registry: {unknown}")

    records = []
    for row in frame.to_dict("records"):
        values = {}
        for code in codes:
            v = row[code]
            values[code] = None if v is None or pd.isna(v) else float(v)
        flags = {code: FLAG_OBSERVED for code, v in values.items() if v is not None}
        sector = "" if pd.isna(row["sector"]) else str(row["sector"])
        records.append(CompanyRecord(str(row["company_id"]), int(row["fiscal_year"]), values, sector, flags))
    return CompanyPanel.from_records(records, registry.restrict(codes), meta)


def save_panel(panel: CompanyPanel, path: str | Path, delimiter: str = ",") -> Path:
    """
    Write a panel in the load_panel format (lossless for finite values).

    Args:
        panel: Panel to write
        path: Destination file
        delimiter: Column delimiter

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    panel_to_frame(panel).to_csv(path, sep=delimiter, index=False, float_format="%.17g", na_rep="")
    logger.info(f"Saved panel to {path}: {panel.n_companies} companies")
    return path


def validate_panel(panel: CompanyPanel, check_year_range: bool = False) -> List[Violation]:
    """
    Report every invariant violation without mutating the panel.

    Args:
        panel: Panel to check
        check_year_range: Also enforce the 1950-2019 fiscal-year range

    Returns:
        List of violations (empty when the panel is well formed)
    """
    violations: List[Violation] = []
    registered = set(panel.registry.codes)
    overlap = set(panel.registry.financial_codes) & set(panel.registry.macro_codes)
    for code in sorted(overlap):
        violations.append(Violation("registry_overlap", "", None, code, f"{code} is both financial and macro"))

    for cid in panel.companies:
        previous: Optional[int] = None
        for record in panel.records(cid):
            year = record.fiscal_year
            if previous is not None:
                if year == previous:
                    violations.append(Violation("duplicate_year", cid, year, None,
                                                f"{cid}: fiscal year {year} appears more than once"))
                elif year < previous:
                    violations.append(Violation("year_order", cid, year, None,
                                                f"{cid}: fiscal year {year} follows {previous}"))
            previous = year

            if check_year_range and not (STATEMENT_YEAR_RANGE[0] <= year <= STATEMENT_YEAR_RANGE[1]):
                violations.append(Violation("year_range", cid, year, None,
                                            f"{cid}: fiscal year {year} outside {STATEMENT_YEAR_RANGE}"))

            for code, value in record.values.items():
                if code not in registered:
                    violations.append(Violation("unregistered_indicator", cid, year, code,
                                                f"{cid}/{year}: value for unregistered {code}"))
                elif value is not None and not math.isfinite(value):
                    violations.append(Violation("non_finite", cid, year, code,
                                                f"{cid}/{year}: {code} = {value}"))
    return violations


def make_panel(
    rows: Sequence[dict],
    registry: Optional[IndicatorRegistry] = None,
    meta: Optional[PanelMeta] = None,
) -> CompanyPanel:
    """
    Build a panel from dict rows ({company_id, fiscal_year, sector?, <codes>...}).

    Args:
        rows: Row dictionaries; indicator keys must be registered
        registry: Registry; defaults to the default registry restricted to the codes used
        meta: Optional panel meta

    Returns:
        CompanyPanel
    """
    used = []
    for row in rows:
        for key in row:
            if key not in MANDATORY_COLUMNS and key not in used:
                used.append(key)
    if registry is None:
        base = IndicatorRegistry.default()
        unknown = [c for c in used if c not in base]
        if unknown:
            raise SchemaError(f"Unregistered indicator(s): {unknown}")
        registry = base.restrict(used)

    records = []
    for row in rows:
        values = {code: (None if row.get(code) is None else float(row[code])) for code in registry.codes}
        flags = {code: FLAG_OBSERVED for code, v in values.items() if v is not None}
        records.append(CompanyRecord(str(row["company_id"]), int(row["fiscal_year"]),
                                     values, str(row.get("sector", "")), flags))
    return CompanyPanel.from_records(records, registry, meta)
