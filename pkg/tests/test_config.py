"""
Tests for Configuration Management

Run tests with: pytest tests/test_config.py
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from src.config import RunConfig, RunParams, Settings, get_settings, load_params, resolve_config
from src.errors import UsageError


# ============================================================================
# Settings Tests
# ============================================================================


class TestSettings:
    """Tests for environment-driven settings."""

    def test_defaults(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        settings = get_settings()

        assert settings.OUTPUT_DIR == Path("artifacts")
        assert settings.LOG_FORMAT == "text"
        assert settings.WORKERS == 1

    def test_environment_override(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("CORONA_WORKERS", "3")
        monkeypatch.setenv("CORONA_LOG_FORMAT", "json")

        settings = get_settings()

        assert settings.WORKERS == 3
        assert settings.LOG_FORMAT == "json"

    def test_dotenv_file(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        # registers cleanup for the variable load_dotenv sets
        monkeypatch.setenv("CORONA_OUTPUT_DIR", "unused")
        monkeypatch.delenv("CORONA_OUTPUT_DIR")
        (tmp_path / ".env").write_text("CORONA_OUTPUT_DIR=runs\n", encoding="utf-8")

        assert get_settings().OUTPUT_DIR == Path("runs")


# ============================================================================
# Parameter Tests
# ============================================================================


class TestRunParams:
    """Tests for range validation of run parameters."""

    def test_defaults(self):
        params = RunParams(seed=1)

        assert params.N == 8
        assert params.eta == 0.0625
        assert params.center == [0.0, 0.0]

    def test_delta_must_stay_below_a_third_of_eps(self):
        with pytest.raises(ValidationError):
            RunParams(seed=1, eps=0.1, delta=0.05)

    def test_cantor_ratios(self):
        with pytest.raises(ValidationError):
            RunParams(seed=1, lambdas=[0.2, 0.6])

    def test_center_is_planar(self):
        with pytest.raises(ValidationError):
            RunParams(seed=1, center=[0.0, 0.0, 0.0])

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            RunParams(seed=1, gamma=2.0)


# ============================================================================
# Resolution Tests
# ============================================================================


class TestResolveConfig:
    """Tests for the params.yaml and override precedence."""

    def test_precedence(self, params_file, tmp_path):
        settings = Settings(PARAMS_FILE=params_file, OUTPUT_DIR=tmp_path / "out")

        config = resolve_config("whitney", None, {"budget": 512, "min_side": None}, settings)

        assert config.params.seed == 7
        assert config.params.budget == 512
        assert config.params.min_side == 0.0625
        assert config.domain == {"kind": "halfplane"}
        assert config.output_dir == tmp_path / "out"

    def test_section_only_applies_to_its_command(self, params_file):
        config = resolve_config("cubes", None, {}, Settings(PARAMS_FILE=params_file))
        assert config.params.min_side == 2.0**-10

    def test_domain_argument_wins(self, params_file):
        config = resolve_config("whitney", {"kind": "slit"}, {}, Settings(PARAMS_FILE=params_file))
        assert config.domain == {"kind": "slit"}

    def test_out_of_range_value(self, params_file):
        with pytest.raises(UsageError) as excinfo:
            resolve_config("corona", None, {"kmax": 0}, Settings(PARAMS_FILE=params_file))

        assert excinfo.value.exit_code == 2
        assert any("kmax" in e for e in excinfo.value.diagnostics["errors"])

    def test_seed_is_required(self, tmp_path):
        with pytest.raises(UsageError):
            resolve_config("whitney", None, {}, Settings(PARAMS_FILE=tmp_path / "missing.yaml"))

    def test_serializes(self, params_file, tmp_path):
        config = resolve_config("whitney", None, {}, Settings(PARAMS_FILE=params_file, OUTPUT_DIR=tmp_path))

        data = config.to_dict()

        assert data["command"] == "whitney"
        assert data["output_dir"] == str(tmp_path)
        assert RunConfig(**{**data, "output_dir": Path(data["output_dir"])}) == config


class TestLoadParams:
    """Tests for reading params.yaml."""

    def test_missing_file(self, tmp_path):
        assert load_params(tmp_path / "missing.yaml") == {}

    def test_empty_file(self, tmp_path):
        path = tmp_path / "params.yaml"
        path.write_text("", encoding="utf-8")
        assert load_params(path) == {}

    def test_list_is_rejected(self, tmp_path):
        path = tmp_path / "params.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(UsageError):
            load_params(path)

    def test_sections(self, params_file):
        data = load_params(params_file)
        assert data["whitney"]["domain"] == {"kind": "halfplane"}
