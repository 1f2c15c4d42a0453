import json
import logging
import math

import pytest

from CubicMetrology.Cli import (COMMANDS, EXIT_COMPUTATION, EXIT_CONFIG, EXIT_OK, SCHEMA_DIR,
                                RunConfig, load_schema, main)
from CubicMetrology.FockCore import DEFAULT_MAX_DIM
from CubicMetrology.Utils import FileHelper
from CubicMetrology.Verify import ORACLE_MAX_DIM

CHEAP_RUNS = {
    "point": ["--r", "0.05", "--s", "0.2"],
    "fig1a": ["--r", "0.05", "--s", "0.2", "--resolution", "5"],
    "fig1b": ["--r-range", "0,0.2,3", "--s-range", "0,0.3,3"],
    "fig2": ["--n-range", "0.1,100,4"],
    "sm_fig_rus": ["--r-range", "0.05,0.1,2", "--s-range", "0.1,0.2,2", "--n-iters", "1,6"],
    "sm_fig_trisqueeze": ["--t-range", "0.05,0.3,3"],
    "sm_fig_displacement": ["--r-range", "0,0.2,2", "--s-range", "0.1,0.5,3"],
}


def test_every_command_has_a_schema():
    for command in COMMANDS:
        schema = json.loads((SCHEMA_DIR / f"{command}.json").read_text(encoding="utf-8"))
        assert schema["command"] == command
        assert schema["version"] == 1
        if command != "verify":
            assert load_schema(command)[-2:] == ["dim_used", "truncation_tail"]


def test_point_on_squeezed_vacuum(output_dir):
    assert main(["point", "--r", "0", "--s", "0.25"]) == EXIT_OK
    header, rows = FileHelper.read_csv(str(output_dir / "point.csv"))
    assert header == load_schema("point")
    assert abs(float(rows[0]["f_q"]) - (math.cosh(1.0) - 1)) <= 1e-10
    assert float(rows[0]["f_q_numeric"]) == pytest.approx(math.cosh(1.0) - 1, rel=1e-6)


@pytest.mark.parametrize("command", sorted(CHEAP_RUNS))
def test_headers_follow_schema(output_dir, command):
    assert main([command] + CHEAP_RUNS[command]) == EXIT_OK
    header, rows = FileHelper.read_csv(str(output_dir / f"{command}.csv"))
    assert header == load_schema(command)
    assert rows


def test_output_is_deterministic(output_dir):
    args = ["sm_fig_rus", "--r-range", "0.05,0.1,2", "--s-range", "0.1,0.2,2"]
    assert main(args + ["--output", "first.csv"]) == EXIT_OK
    assert main(args + ["--output", "second.csv", "--workers", "2"]) == EXIT_OK
    assert (output_dir / "first.csv").read_bytes() == (output_dir / "second.csv").read_bytes()


def test_json_format(output_dir):
    assert main(["point", "--r", "0.05", "--s", "0.2", "--format", "json"]) == EXIT_OK
    rows = FileHelper.from_json(str(output_dir / "point.json"))
    assert list(rows[0]) == load_schema("point")
    assert rows[0]["r"] == 0.05


def test_config_file_with_flag_override(output_dir, tmp_path):
    config_path = str(tmp_path / "run.json")
    RunConfig(command="point", r=0.3, s=0.2, output="from_config.csv").to_json(config_path)
    assert main(["point", "--config", config_path, "--r", "0.05"]) == EXIT_OK
    _, rows = FileHelper.read_csv(str(output_dir / "from_config.csv"))
    assert float(rows[0]["r"]) == 0.05
    assert float(rows[0]["s"]) == 0.2


def test_config_file_rejects_unknown_keys(tmp_path):
    config_path = str(tmp_path / "run.json")
    FileHelper.to_json({"command": "point", "r": 0.1, "s": 0.1, "colour": "red"}, config_path)
    assert main(["point", "--config", config_path]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["teleport"],
    ["fig1b", "--r-range", "0,1"],
    ["fig1b", "--r-range", "0,1,0"],
    ["fig2", "--n-range", "0,10,5"],
    ["point", "--s", "0.1"],
    ["point", "--r", "0.1", "--s", "-0.1"],
    ["sm_fig_kerr", "--lambdas", "0.5"],
    ["point", "--r", "0.1", "--s", "0.1", "--max-dim", "1"],
])
def test_bad_arguments_exit_with_config_status(output_dir, argv):
    assert main(argv) == EXIT_CONFIG


def test_skipped_points_exit_with_computation_status(output_dir, caplog):
    args = ["sm_fig_rus", "--r-range", "0.05,0.1,2", "--s-range", "0.1,0.2,2", "--n-iters", "1",
            "--max-dim", "8"]
    with caplog.at_level(logging.ERROR):
        assert main(args) == EXIT_COMPUTATION
    assert "sm_fig_rus::skipped" in caplog.text
    assert (output_dir / "sm_fig_rus.csv").exists()


@pytest.mark.parametrize("command,grid", [("fig3b", ["--gamma-range", "0,0.1,2"]),
                                          ("fig3c", ["--sigma-range", "0,0.5,2"])])
def test_dimension_cap_reaches_noise_scans(output_dir, command, grid):
    assert main([command, "--max-dim", "30"] + grid) == EXIT_COMPUTATION


def test_dimension_cap_defaults():
    assert RunConfig(command="verify").dim_cap() == ORACLE_MAX_DIM
    assert RunConfig(command="point", r=0.1, s=0.1).dim_cap() == DEFAULT_MAX_DIM
    assert RunConfig(command="verify", max_dim=64).dim_cap() == 64


def test_output_path_resolution(monkeypatch, tmp_path):
    monkeypatch.setenv("CUBIC_METROLOGY_OUTPUT_DIR", str(tmp_path))
    assert RunConfig(command="fig2").output_path() == str(tmp_path / "fig2.csv")
    assert RunConfig(command="fig2", format="json").output_path() == str(tmp_path / "fig2.json")
    absolute = str(tmp_path / "elsewhere" / "x.csv")
    assert RunConfig(command="fig2", output=absolute).output_path() == absolute
    assert RunConfig(command="verify").output_path() is None


def test_default_grids():
    config = RunConfig(command="fig2")
    grid = config.grid("n", geometric=True)
    assert len(grid) == 121
    assert grid[0] == pytest.approx(0.01) and grid[-1] == pytest.approx(1e4)
    assert RunConfig(command="fig1b", r_range=[0.0, 0.2, 3]).grid("r") == [0.0, 0.1, 0.2]
