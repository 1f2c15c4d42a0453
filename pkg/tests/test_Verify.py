import math

import pytest

from CubicMetrology import AnalyticMetrology as am
from CubicMetrology.Cli import load_schema
from CubicMetrology.Verify import VerifySettings, format_table, rows, verify, write_report
from CubicMetrology.Utils import FileHelper

QUICK = ["A1", "A2", "A3", "A6", "A7", "A13", "A14"]


def test_quick_criteria_pass():
    results = verify(criteria=QUICK)
    assert [result.criterion for result in results] == QUICK
    failed = [(result.criterion, result.detail) for result in results if not result.passed]
    assert failed == []


def test_broken_leading_coefficient_is_detected(monkeypatch):
    monkeypatch.setattr(am, "C2", 42.0)
    (result,) = verify(criteria=["A2"])
    assert not result.passed


def test_errors_become_failed_rows():
    (result,) = verify(VerifySettings(max_dim=10), criteria=["A4"])
    assert not result.passed
    assert math.isnan(result.measured)
    assert result.detail.startswith("TruncationError")


def test_reduced_dimension_cap_reports_errors():
    results = verify(VerifySettings(max_dim=30), criteria=["A8", "A9", "A15"])
    assert not any(result.passed for result in results)
    details = [result.detail.split(":")[0] for result in results]
    assert details == ["TruncationError", "TruncationError", "ConvergenceError"]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", ["A4", "A5", "A8", "A9", "A10", "A11", "A12", "A15"])
def test_numeric_criteria_pass(criterion):
    (result,) = verify(criteria=[criterion])
    assert result.passed, result.detail


def test_report_outputs(tmp_path):
    results = verify(criteria=["A1", "A14"])
    table = format_table(results)
    assert table.splitlines()[0].startswith("criterion")
    assert "A14" in table
    assert [sorted(row) for row in rows(results)] == [sorted(load_schema("verify"))] * 2
    filepath = str(tmp_path / "verify.json")
    write_report(results, filepath)
    assert [item["criterion"] for item in FileHelper.from_json(filepath)] == ["A1", "A14"]
