import logging

import pytest

from CubicMetrology.Errors import ConvergenceError, GridPointError, TruncationError
from CubicMetrology.GridHandler import GridHandler
from CubicMetrology.Report import SensitivityReport


def square_or_fail(x):
    if x == 3:
        raise TruncationError(1e-3, 40, 1e-8)
    if x == 5:
        raise ConvergenceError("not converged", [1.0, 2.0])
    if x == 7:
        raise ZeroDivisionError("boom")
    return x * x


def test_results_keep_grid_order():
    assert GridHandler("squares").map(lambda x: x * x, [4, 1, 2]) == [(4, 16), (1, 1), (2, 4)]


def test_soft_errors_are_skipped(caplog):
    with caplog.at_level(logging.WARNING):
        results = GridHandler("squares").map(square_or_fail, range(6))
    assert [point for point, _ in results] == [0, 1, 2, 4]
    assert "squares::skipped::3" in caplog.text
    assert "squares::skipped::5" in caplog.text


def test_skipped_points_are_kept_with_their_errors(caplog):
    handler = GridHandler("squares", workers=2)
    with caplog.at_level(logging.WARNING):
        handler.map(square_or_fail, range(6))
    assert [point for point, _ in handler.skipped] == [3, 5]
    assert isinstance(handler.skipped[0][1], TruncationError)
    assert isinstance(handler.skipped[1][1], ConvergenceError)
    assert "squares::2 of 6 points skipped" in caplog.text
    handler.map(square_or_fail, [1, 2])
    assert handler.skipped == []


def test_map_reports_carries_skipped_points():
    def report(x):
        return SensitivityReport(n=float(square_or_fail(x)) + 1, r=0.0, s=0.0, f_q=1.0,
                                 f_q_over_n=1.0)

    reports = GridHandler("reports").map_reports(report, range(6))
    assert [r.n for r in reports] == [1.0, 2.0, 5.0, 17.0]
    assert [point for point, _ in reports.skipped] == [3, 5]
    with pytest.raises(TruncationError):
        reports.raise_skipped()


def test_hard_errors_abort_with_point():
    with pytest.raises(GridPointError) as info:
        GridHandler("squares").map(square_or_fail, range(10))
    assert info.value.point == 7
    assert isinstance(info.value.__cause__, ZeroDivisionError)


def test_threaded_map_keeps_order():
    points = list(range(20))
    results = GridHandler("squares", workers=3).map(lambda x: x * x, points)
    assert results == [(x, x * x) for x in points]


def test_threaded_map_propagates_hard_errors():
    with pytest.raises(GridPointError):
        GridHandler("squares", workers=3).map(square_or_fail, range(10))


def test_invalid_arguments():
    with pytest.raises(ValueError):
        GridHandler("squares", workers=0)
    with pytest.raises(ValueError):
        GridHandler("squares").map(square_or_fail, [])
