import numpy as np
import pytest

from CubicMetrology.Utils import FileHelper, ListHelper


def test_csv_uses_repr_floats_and_fixed_header(tmp_path):
    filepath = str(tmp_path / "out" / "table.csv")
    rows = [{"a": 0.1, "b": None, "c": True}, {"a": 1 / 3, "b": 2, "c": False}]
    FileHelper.to_csv(rows, ["a", "b", "c"], filepath)
    header, read = FileHelper.read_csv(filepath)
    assert header == ["a", "b", "c"]
    assert read[0] == {"a": "0.1", "b": "", "c": "true"}
    assert float(read[1]["a"]) == 1 / 3


def test_json_handles_numpy_and_complex(tmp_path):
    filepath = str(tmp_path / "data.json")
    FileHelper.to_json({"v": np.array([1.0, 2.0]), "z": 1 + 2j, "f": np.float64(0.5)}, filepath)
    data = FileHelper.from_json(filepath)
    assert data == {"v": [1.0, 2.0], "z": {"re": 1.0, "im": 2.0}, "f": 0.5}


def test_from_json_missing_file(tmp_path):
    with pytest.raises(ValueError):
        FileHelper.from_json(str(tmp_path / "absent.json"))


def test_amplitude_dump_layout(tmp_path):
    filepath = str(tmp_path / "state.bin")
    amplitudes = np.array([0.6, 0.8j, 0.0])
    FileHelper.dump_amplitudes(amplitudes, filepath)
    raw = (tmp_path / "state.bin").read_bytes()
    assert len(raw) == 8 + 16 * 3
    assert int(np.frombuffer(raw[:8], dtype="<i8")[0]) == 3
    np.testing.assert_array_equal(FileHelper.load_amplitudes(filepath), amplitudes)


def test_grids():
    assert ListHelper.linspace(0.0, 1.0, 3) == [0.0, 0.5, 1.0]
    np.testing.assert_allclose(ListHelper.geomspace(1.0, 100.0, 3), [1.0, 10.0, 100.0])
    with pytest.raises(ValueError):
        ListHelper.linspace(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        ListHelper.geomspace(1.0, 10.0, 0)
