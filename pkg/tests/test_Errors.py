import pytest

from CubicMetrology.Errors import (ConditioningError, ConfigError, ConvergenceError,
                                   CubicMetrologyError, GridPointError, InfeasiblePopulationError,
                                   IntegratorError, TruncationError, UndefinedRatioError,
                                   UnsupportedAnalyticOrderError)


def test_truncation_error_payload():
    error = TruncationError(1e-5, 40, 1e-8)
    assert error.tail_mass == 1e-5
    assert error.dim == 40
    assert "dim=40" in str(error)
    assert isinstance(error, CubicMetrologyError)
    assert isinstance(error, RuntimeError)


def test_value_error_subclasses_are_catchable_as_value_error():
    for error in (InfeasiblePopulationError(0.1, 0.2), UnsupportedAnalyticOrderError(7),
                  ConfigError("bad")):
        with pytest.raises(ValueError):
            raise error


def test_undefined_ratio_is_zero_division():
    with pytest.raises(ZeroDivisionError):
        raise UndefinedRatioError("n = 0")


def test_payloads():
    assert InfeasiblePopulationError(0.1, 0.2).floor == 0.2
    assert ConditioningError("singular", 1e14).condition_number == 1e14
    assert IntegratorError(1e-3, 200).steps == 200
    assert ConvergenceError("no", [1.0, 2.0]).values == [1.0, 2.0]
    assert UnsupportedAnalyticOrderError(6).n_iter == 6


def test_grid_point_error_keeps_context():
    cause = ZeroDivisionError("boom")
    error = GridPointError("scan", (0.1, 0.2), cause)
    assert error.point == (0.1, 0.2)
    assert "scan" in str(error) and "ZeroDivisionError" in str(error)
