import pytest

from CubicMetrology.FockCore import cubic_phase_state, squeezed_vacuum


@pytest.fixture(scope="session")
def cubic_state():
    """Converged cubic phase state at a moderate operating point."""
    return cubic_phase_state(0.05, 0.2, tolerance=1e-12)


@pytest.fixture(scope="session")
def squeezed_state():
    return squeezed_vacuum(0.3, tolerance=1e-12)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CUBIC_METROLOGY_OUTPUT_DIR", str(tmp_path))
    return tmp_path
