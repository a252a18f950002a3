"""Tests for experiment configuration validation."""

import json
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from paneitzlab.geometry.background import FlatTorus, RoundSphere, SphereProduct
from paneitzlab.ui.cli.config import (
    OUT_DIR_ENV,
    TASK_NAMES,
    ExperimentConfig,
    FactorConfig,
    load_config_data,
    resolve_out_dir,
)


class TestExperimentConfig:
    """Parsing and window checks."""

    def test_defaults(self):
        config = ExperimentConfig(task="curvature")
        assert config.schema_version == 1
        assert config.resolution == 48
        assert config.background_spec() == RoundSphere(6)
        assert config.run_name.startswith("curvature-round_sphere-N48-s0-")

    def test_task_names(self):
        assert set(TASK_NAMES) == {
            "curvature",
            "covariance-test",
            "invariants",
            "starter",
            "continue",
            "identities",
        }
        with pytest.raises(ValidationError):
            ExperimentConfig(task="plot")

    @pytest.mark.parametrize(
        "background,expected",
        [
            ({"kind": "flat_torus", "n": 7}, FlatTorus(7)),
            (
                {"kind": "sphere_product", "p": 3, "a": 2.0, "q": 3, "b": 1.0},
                SphereProduct(3, 2.0, 3, 1.0),
            ),
        ],
    )
    def test_background_union(self, background, expected):
        config = ExperimentConfig.model_validate(
            {"task": "curvature", "background": background}
        )
        assert config.background_spec() == expected

    def test_unknown_fields_rejected(self):
        with pytest.raises(ValidationError, match="extra"):
            ExperimentConfig.model_validate({"task": "curvature", "resolutoin": 64})

    @pytest.mark.parametrize("resolution", [8, 15, 1025])
    def test_resolution_window(self, resolution):
        with pytest.raises(ValidationError, match=r"\[16, 1024\]"):
            ExperimentConfig(task="curvature", resolution=resolution)

    def test_invalid_background(self):
        with pytest.raises(ValidationError, match="at least 5"):
            ExperimentConfig.model_validate(
                {"task": "curvature", "background": {"kind": "round_sphere", "n": 4}}
            )

    def test_p_window(self):
        with pytest.raises(ValidationError, match=r"\(1\.5, 2\)"):
            ExperimentConfig(task="starter", p=2.5)
        assert ExperimentConfig(task="starter", p=1.6).p == 1.6

    def test_continue_needs_dimension_six(self):
        with pytest.raises(ValidationError, match="13 - 4 lambda"):
            ExperimentConfig.model_validate(
                {"task": "continue", "background": {"kind": "round_sphere", "n": 5}}
            )
        # the starter alone is available in dimension five
        ExperimentConfig.model_validate(
            {"task": "starter", "background": {"kind": "round_sphere", "n": 5}}
        )

    def test_continue_checks_q(self):
        with pytest.raises(ValidationError, match="q="):
            ExperimentConfig(task="continue", q=1.5)

    def test_factor_must_stay_positive(self):
        with pytest.raises(ValidationError, match="positive"):
            FactorConfig(constant=1.0, amplitude=1.0)

    def test_factor_values(self, sphere6_grid):
        factor = FactorConfig(constant=2.0, amplitude=0.5, mode=1)
        assert np.allclose(factor.values(sphere6_grid), 2.0 + 0.5 * np.cos(sphere6_grid.nodes))

    def test_perturbation_window(self):
        with pytest.raises(ValidationError, match=r"\[0, 1\)"):
            ExperimentConfig.model_validate(
                {"task": "curvature", "perturbation": {"amplitude": 1.0}}
            )

    def test_frozen(self):
        config = ExperimentConfig(task="curvature")
        with pytest.raises(ValidationError):
            config.resolution = 64

    def test_explicit_name(self):
        assert ExperimentConfig(task="curvature", name="baseline").run_name == "baseline"

    def test_run_names_separate_sweep_points(self):
        base = ExperimentConfig(task="continue")
        names = {
            base.run_name,
            ExperimentConfig(task="continue", delta=0.25).run_name,
            ExperimentConfig(task="continue", q=0.7).run_name,
            ExperimentConfig(task="continue", alpha=3.0).run_name,
            ExperimentConfig(task="continue", p=1.6).run_name,
        }
        assert len(names) == 5
        assert ExperimentConfig(task="continue").run_name == base.run_name
        moved = ExperimentConfig(task="continue", out_dir=Path("elsewhere"))
        assert moved.run_name == base.run_name


class TestOutDir:
    """Output directory precedence."""

    def test_override_wins(self, monkeypatch, tmp_path: Path):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        config = ExperimentConfig(task="curvature", out_dir=tmp_path / "file")
        assert resolve_out_dir(config, tmp_path / "cli") == tmp_path / "cli"

    def test_environment_beats_config(self, monkeypatch, tmp_path: Path):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        config = ExperimentConfig(task="curvature", out_dir=tmp_path / "file")
        assert resolve_out_dir(config) == tmp_path / "env"

    def test_config_default(self, monkeypatch, tmp_path: Path):
        monkeypatch.setenv(OUT_DIR_ENV, "")
        config = ExperimentConfig(task="curvature", out_dir=tmp_path / "file")
        assert resolve_out_dir(config) == tmp_path / "file"


class TestLoadConfigData:
    def test_object_and_list(self, tmp_path: Path):
        single = tmp_path / "single.json"
        single.write_text(json.dumps({"task": "curvature"}))
        assert load_config_data(single) == {"task": "curvature"}

        many = tmp_path / "many.json"
        many.write_text(json.dumps([{"task": "curvature"}, {"task": "identities"}]))
        assert len(load_config_data(many)) == 2

    def test_scalar_rejected(self, tmp_path: Path):
        path = tmp_path / "bad.json"
        path.write_text("3")
        with pytest.raises(ValueError, match="JSON object"):
            load_config_data(path)
