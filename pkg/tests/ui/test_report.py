"""Tests for run reports and tolerance checks."""

import json
from pathlib import Path

import pytest

from paneitzlab import __version__
from paneitzlab.ui.cli.config import ExperimentConfig
from paneitzlab.ui.cli.report import ErrorPayload, RunReport, check


@pytest.mark.parametrize(
    "measured,tolerance,comparison,passed",
    [
        (1e-9, 1e-8, "at_most", True),
        (1e-8, 1e-8, "at_most", True),
        (2e-8, 1e-8, "at_most", False),
        (0.0, 0.0, "above", False),
        (1e-3, 0.0, "above", True),
        (0.0, 0.0, "at_least", True),
        (float("nan"), 1e-8, "at_most", False),
    ],
)
def test_check_comparisons(measured, tolerance, comparison, passed):
    result = check("name", "module: property", measured, tolerance, comparison)
    assert result.passed is passed
    assert result.comparison == comparison


class TestRunReport:
    def test_start_echoes_config(self):
        config = ExperimentConfig(task="curvature", resolution=32)
        report = RunReport.start(config)
        assert report.run_name == config.run_name
        assert report.tool_version == __version__
        assert report.config["resolution"] == 32
        assert report.config["background"]["kind"] == "round_sphere"
        assert report.timing is not None

    def test_success(self):
        report = RunReport.start(ExperimentConfig(task="curvature"))
        assert report.success
        report.checks = [check("a", "x", 0.0, 1.0), check("b", "x", 2.0, 1.0)]
        assert not report.success
        assert report.checks_passed == 1

        report.checks = [check("a", "x", 0.0, 1.0)]
        report.error = ErrorPayload(type="PathStuck", message="step below minimum")
        assert not report.success

    def test_payload_excludes_timing(self):
        config = ExperimentConfig(task="curvature")
        first = RunReport.start(config)
        second = RunReport.start(config)
        second.timing.duration_seconds = 12.5
        assert "timing" not in first.payload()
        assert first.payload_json() == second.payload_json()
        assert first.to_json() != second.to_json()

    def test_write(self, tmp_path: Path):
        report = RunReport.start(ExperimentConfig(task="curvature"))
        report.results = {"Q": {"min": 24.0, "max": 24.0}}
        path = report.write(tmp_path / "nested" / "run.json")
        data = json.loads(path.read_text())
        assert data["results"]["Q"]["min"] == 24.0
        assert data["schema_version"] == 1
        assert RunReport.model_validate(data).run_name == report.run_name
