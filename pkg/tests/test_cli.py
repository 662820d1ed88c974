"""Tests for the command-line interface."""

import json

import pytest
from typer.testing import CliRunner

from symmetry_reduction import __version__
from symmetry_reduction.cli import EXIT_CHECK_FAILED, EXIT_USAGE, app

ODE_FILE = """
[problem]
name = "oscillator"

[system]
kind = "ode"
n = 1
equations = ["u1'' = -u1"]

[symmetries]
phi = [["u1"]]
"""


@pytest.fixture
def runner():
    return CliRunner()


def test_version(runner):
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


def test_help_without_command(runner):
    result = runner.invoke(app, [])
    assert result.exit_code == 0
    assert "symred" in result.stdout
    assert "to-ode" in result.stdout


def test_unsupported_format(runner, temp_directory):
    args = ["--format", "yaml", "check", str(temp_directory / "example5.toml")]
    result = runner.invoke(app, args)
    assert result.exit_code == EXIT_USAGE


def test_machine_output_is_deterministic(runner, temp_directory):
    args = ["--seed", "42", "--format", "machine", "check", str(temp_directory / "example5.toml")]
    first = runner.invoke(app, args)
    second = runner.invoke(app, args)
    assert first.exit_code == 0
    assert first.stdout == second.stdout
    assert "example5.status=pass" in first.stdout.splitlines()
    assert "example5.seed=42" in first.stdout.splitlines()


def test_failed_check_exit_status(runner, temp_directory):
    args = ["--format", "machine", "check", str(temp_directory / "mutated.toml")]
    result = runner.invoke(app, args)
    assert result.exit_code == EXIT_CHECK_FAILED
    assert "example5.check.determining-equations.status=fail" in result.stdout.splitlines()


def test_verify_rejects_unparsable_file(runner, temp_directory):
    result = runner.invoke(app, ["verify", str(temp_directory / "broken.toml")])
    assert result.exit_code == EXIT_USAGE
    assert "Error" in result.stdout


def test_missing_file_is_a_usage_error(runner, temp_directory):
    result = runner.invoke(app, ["verify", str(temp_directory / "absent.toml")])
    assert result.exit_code == 2


def test_json_report_file(runner, temp_directory):
    target = temp_directory / "report.json"
    problem = str(temp_directory / "example5.toml")
    args = ["--format", "json", "--report", str(target), "check", problem]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    data = json.loads(target.read_text(encoding="utf-8"))
    assert data["total"] == 1
    assert data["reports"][0]["name"] == "example5"


def test_prolong_machine_output(runner, temp_directory):
    args = ["--format", "machine", "prolong", "--order", "1", str(temp_directory / "example5.toml")]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert "Y1.order0.u1=u1" in lines
    assert any(line.startswith("Y1.order1.u2=") for line in lines)


def test_companion_system(runner, tmp_path):
    path = tmp_path / "oscillator.toml"
    path.write_text(ODE_FILE, encoding="utf-8")
    result = runner.invoke(app, ["--format", "machine", "to-ds", str(path)])
    assert result.exit_code == 0
    assert result.stdout.splitlines()[0] == "f1=u2"


def test_companion_system_needs_an_ode(runner, temp_directory):
    result = runner.invoke(app, ["to-ds", str(temp_directory / "example5.toml")])
    assert result.exit_code == EXIT_USAGE
