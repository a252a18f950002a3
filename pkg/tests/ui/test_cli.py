"""Tests for the command-line front end."""

import json
from pathlib import Path

import pytest

from paneitzlab.ui.cli.cli import (
    EXIT_INVALID_CONFIG,
    build_parser,
    configs_from_args,
    convergence_table,
    main,
)
from paneitzlab.ui.cli.config import ExperimentConfig
from paneitzlab.ui.cli.report import RunReport


def _covariance_report(resolution: int, residual: float) -> RunReport:
    report = RunReport.start(ExperimentConfig(task="covariance-test", resolution=resolution))
    report.results = {"resolution": resolution, "covariance_residual": residual}
    return report


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["continue", "--resolution", "64", "--seed", "3"])
        assert args.command == "continue"
        assert args.resolution == 64
        assert args.seed == 3

    def test_sweep_resolutions(self):
        args = build_parser().parse_args(["sweep", "--resolutions", "16", "32"])
        assert args.resolutions == [16, 32]

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["plot"])


class TestConfigsFromArgs:
    def test_command_sets_task(self, tmp_path: Path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"task": "identities", "resolution": 32}))
        args = build_parser().parse_args(["curvature", "--config", str(path), "--seed", "4"])
        (config,) = configs_from_args(args)
        assert config.task == "curvature"
        assert config.resolution == 32
        assert config.seed == 4

    def test_sweep_expands_resolutions(self, tmp_path: Path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"task": "covariance-test"}))
        args = build_parser().parse_args(
            ["sweep", "--config", str(path), "--resolutions", "16", "24", "32"]
        )
        assert [c.resolution for c in configs_from_args(args)] == [16, 24, 32]

    def test_list_needs_sweep(self, tmp_path: Path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps([{"task": "curvature"}]))
        args = build_parser().parse_args(["curvature", "--config", str(path)])
        with pytest.raises(ValueError, match="single config"):
            configs_from_args(args)


class TestExitCodes:
    def test_resolution_out_of_window(self, tmp_path: Path):
        assert main(["curvature", "--resolution", "8", "--out", str(tmp_path)]) == EXIT_INVALID_CONFIG
        assert list(tmp_path.iterdir()) == []

    def test_malformed_config(self, tmp_path: Path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"background": {"kind": "klein_bottle"}}))
        assert main(["curvature", "--config", str(path)]) == EXIT_INVALID_CONFIG

    def test_missing_config_file(self, tmp_path: Path):
        assert main(["curvature", "--config", str(tmp_path / "missing.json")]) == EXIT_INVALID_CONFIG


def test_convergence_table():
    reports = [
        _covariance_report(32, 1e-9),
        _covariance_report(16, 1e-5),
        _covariance_report(24, 1e-7),
    ]
    reports.append(RunReport.start(ExperimentConfig(task="curvature")))
    table = convergence_table(reports)
    assert list(table["resolution"]) == [16, 24, 32]
    assert table["ratio"].isna()[0]
    assert list(table["ratio"][1:]) == pytest.approx([100.0, 100.0])
    assert table["converging"].all()


def test_convergence_table_flags_a_stall():
    reports = [_covariance_report(64, 1e-3), _covariance_report(128, 5e-4)]
    table = convergence_table(reports)
    assert list(table["converging"]) == [True, False]
    assert table["floor"][1] < 5e-4


def test_convergence_table_empty():
    assert convergence_table([]).empty
