"""
Tests for panel loading, saving and validation.
"""

import math

import pytest

from core.panel import (
    FLAG_OBSERVED,
    CompanyPanel,
    CompanyRecord,
    IndicatorRegistry,
    IndicatorSpec,
    load_panel,
    make_panel,
    panel_from_frame,
    panel_to_frame,
    save_panel,
    validate_panel,
)
from utils.exceptions import IntegrityError, SchemaError


def test_default_registry_splits_financial_and_macro():
    registry = IndicatorRegistry.default()
    assert "AT" in registry.financial_codes
    assert "GDPG" in registry.macro_codes
    assert not set(registry.financial_codes) & set(registry.macro_codes)
    assert "EMP" not in registry.monetary_codes
    assert registry.transform_of("NI") == "linlog"


def test_registry_rejects_duplicate_codes():
    with pytest.raises(SchemaError):
        IndicatorRegistry([IndicatorSpec("AT"), IndicatorSpec("AT")])


def test_restrict_keeps_registry_order():
    registry = IndicatorRegistry.default().restrict(["NI", "AT", "LT"])
    assert registry.codes == ["AT", "LT", "NI"]


def test_save_and_load_preserve_values(tmp_path, raw_panel):
    path = save_panel(raw_panel, tmp_path / "panel.csv")
    loaded = load_panel(path)
    assert loaded.companies == raw_panel.companies
    assert loaded.n_records == raw_panel.n_records
    for cid in raw_panel.companies:
        for before, after in zip(raw_panel.records(cid), loaded.records(cid)):
            assert before.fiscal_year == after.fiscal_year
            assert before.sector == after.sector
            for code in raw_panel.registry.codes:
                assert before.value(code) == after.value(code)
    assert loaded.meta.transformed is False


def test_load_tab_delimited(tmp_path, raw_panel):
    path = save_panel(raw_panel, tmp_path / "panel.tsv", delimiter="\t")
    assert load_panel(path).n_records == raw_panel.n_records


def test_absent_and_unparseable_cells(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text(
        "company_id,fiscal_year,sector,AT,LT\n"
        "X,2001,retail,10,\n"
        "X,2002,retail,abc,4\n"
        "X,2003,retail,inf,5\n",
        encoding="utf-8",
    )
    panel = load_panel(path)
    records = panel.records("X")
    assert records[0].value("LT") is None
    assert records[1].value("AT") is None
    assert records[2].value("AT") is None
    assert records[0].flags["AT"] == FLAG_OBSERVED
    assert panel.meta.parse_warnings == 2


def test_missing_mandatory_column(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("company_id,fiscal_year,AT\nX,2001,1\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_panel(path)


def test_unregistered_header(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("company_id,fiscal_year,sector,FOO\nX,2001,a,1\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_panel(path)


def test_duplicate_company_year(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("company_id,fiscal_year,sector,AT\nX,2001,a,1\nX,2001,a,2\n", encoding="utf-8")
    with pytest.raises(IntegrityError):
        load_panel(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_panel(tmp_path / "nope.csv")


def test_records_are_sorted_by_year():
    panel = make_panel([
        {"company_id": "X", "fiscal_year": 2003, "AT": 3.0},
        {"company_id": "X", "fiscal_year": 2001, "AT": 1.0},
        {"company_id": "X", "fiscal_year": 2002, "AT": 2.0},
    ])
    assert list(panel.years("X")) == [2001, 2002, 2003]
    assert list(panel.series("X", "AT")) == [1.0, 2.0, 3.0]


def test_frame_round_trip_keeps_absent_values(raw_panel):
    rebuilt = panel_from_frame(panel_to_frame(raw_panel))
    assert rebuilt.records("A1")[3].value("REVT") is None
    assert rebuilt.fingerprint() == raw_panel.fingerprint()


def test_validate_clean_panel(raw_panel):
    assert validate_panel(raw_panel) == []


def test_validate_reports_every_violation():
    registry = IndicatorRegistry.default().restrict(["AT"])
    records = [
        CompanyRecord("X", 2001, {"AT": 1.0}),
        CompanyRecord("X", 2001, {"AT": 2.0}),
        CompanyRecord("X", 2002, {"AT": math.inf}),
        CompanyRecord("X", 2030, {"AT": 1.0, "LT": 2.0}),
    ]
    panel = CompanyPanel.from_records(records, registry)
    kinds = sorted(v.kind for v in validate_panel(panel, check_year_range=True))
    assert kinds == ["duplicate_year", "non_finite", "unregistered_indicator", "year_range"]


def test_validate_flags_registry_overlap():
    registry = IndicatorRegistry([IndicatorSpec("AT"), IndicatorSpec("GDP", macro=True)])
    panel = CompanyPanel({}, registry)
    assert validate_panel(panel) == []

    class Overlapping(IndicatorRegistry):
        @property
        def macro_codes(self):
            return ["AT"]

    assert [v.kind for v in validate_panel(CompanyPanel({}, Overlapping(registry)))] == ["registry_overlap"]


def test_subset_and_derive_do_not_share_records(raw_panel):
    part = raw_panel.subset(["A1"])
    part.records("A1")[0].values["AT"] = -5.0
    assert raw_panel.records("A1")[0].value("AT") == 1e6
    marked = raw_panel.derive(transformed=True)
    assert marked.meta.transformed and not raw_panel.meta.transformed
