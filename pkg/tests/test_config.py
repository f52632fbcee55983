"""Tests for configuration management."""

import json
import os
from unittest.mock import patch

import pytest
import yaml

from tactile_maps.config import ConfigError, ConfigParser, ConfigValidator, TactileMapsConfig
from tactile_maps.metrics import ModelId
from tactile_maps.palette import ClassId


class TestConfigDefaults:
    """Test the built-in defaults and typed views."""

    def test_defaults_are_valid(self, clean_env):
        """The defaults build every typed view."""
        config = TactileMapsConfig()
        assert config.is_valid
        assert config.train_config().model_id == ModelId.ZOOM_16
        assert config.generator_config().depth == 5
        assert config.augment_params().scale_range == (0.9, 1.1)
        assert config.fetch_settings().api_key is None

    def test_partial_initialization_uses_defaults(self):
        """Sections passed to the constructor merge into the defaults."""
        config = TactileMapsConfig(train={"epochs": 3})
        assert config.get("train", "epochs") == 3
        assert config.get("train", "lr") == 2e-4

    def test_unknown_section(self):
        """Unknown sections are rejected."""
        with pytest.raises(ConfigError, match="Unknown configuration section"):
            TactileMapsConfig().section("server")

    def test_synth_profile_view(self):
        """synth_profile takes zoom and seed overrides."""
        profile = TactileMapsConfig(synth={"size": 128}).synth_profile(zoom=18, seed=4)
        assert (profile.zoom_analog, profile.seed, profile.size) == (18, 4, 128)
        assert profile.include_buildings is True

    def test_palette_colors(self):
        """Per-class color overrides reach the palette."""
        config = TactileMapsConfig(palette={"colors": {"Water": "#123456"}})
        assert config.palette().color_of(ClassId.WATER) == (0x12, 0x34, 0x56)

    @pytest.mark.parametrize(
        "section,values,where",
        [
            ("train", {"zoom_set": [17]}, "train:"),
            ("generator", {"norm": "layer"}, "generator:"),
            ("augment", {"hflip_prob": 2.0}, "augment:"),
            ("synth", {"zoom": 12}, "synth:"),
            ("augment", {"scale_range": [0.9]}, "augment:"),
        ],
    )
    def test_invalid_views(self, section, values, where):
        """Invalid values surface as ConfigError naming the section."""
        config = TactileMapsConfig(**{section: values})
        assert not config.is_valid
        with pytest.raises(ConfigError, match=where):
            config.validate()


class TestConfigEnvironmentVariables:
    """Test configuration loading from environment variables."""

    def test_loads_from_environment(self, clean_env):
        """API key, live switch and seed come from TACTILE_* variables."""
        with patch.dict(
            os.environ,
            {"TACTILE_API_KEY": " secret-key ", "TACTILE_FETCH_LIVE": "yes", "TACTILE_SEED": "7"},
        ):
            config = TactileMapsConfig.from_environment()
        assert config.get("fetch", "api_key") == "secret-key"
        assert config.get("fetch", "live") is True
        assert config.get("synth", "seed") == 7
        assert config.get("augment", "seed") == 7
        assert config.get("train", "seed") == 7

    def test_invalid_boolean(self, clean_env):
        """Unparseable booleans are reported."""
        with patch.dict(os.environ, {"TACTILE_FETCH_LIVE": "maybe"}):
            with pytest.raises(ConfigError, match="Invalid boolean value 'maybe'"):
                TactileMapsConfig.from_environment()

    def test_invalid_integer(self, clean_env):
        """Decimal seeds get a targeted message."""
        with patch.dict(os.environ, {"TACTILE_SEED": "1.5"}):
            with pytest.raises(ConfigError, match="Remove decimal point"):
                TactileMapsConfig.from_environment()

    def test_prefix(self, clean_env):
        """A custom prefix selects other variables."""
        with patch.dict(os.environ, {"LAB_API_KEY": "k2"}):
            config = TactileMapsConfig.from_environment(prefix="LAB_")
        assert config.get("fetch", "api_key") == "k2"

    def test_repr_hides_key(self):
        """repr never shows the API key."""
        config = TactileMapsConfig(fetch={"api_key": "secret-key"})
        assert "secret-key" not in repr(config)
        assert "api_key=***" in repr(config)

    def test_to_dict_hides_key(self):
        """to_dict masks the API key."""
        config = TactileMapsConfig(fetch={"api_key": "secret-key"})
        assert config.to_dict()["fetch"]["api_key"] == "***"


class TestConfigFileLoading:
    """Test configuration loading from files."""

    def test_loads_yaml(self, tmp_path):
        """YAML files override the defaults per key."""
        path = tmp_path / "tactile-maps.yaml"
        path.write_text(
            "# training setup\ntrain:\n  epochs: 10\n  zoom_set: [16, 18]\naugment:\n  enabled: false\n",
            encoding="utf-8",
        )
        config = TactileMapsConfig.from_file(path)
        assert config.get("train", "epochs") == 10
        assert config.train_config().model_id == ModelId.ZOOM_16_18
        assert config.augment_enabled is False
        assert config.get("train", "lr") == 2e-4

    def test_loads_json(self, tmp_path):
        """JSON files are accepted too."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"generator": {"base_channels": 8}}), encoding="utf-8")
        assert TactileMapsConfig.from_file(path).generator_config().base_channels == 8

    def test_not_found(self, tmp_path):
        """Missing files raise ConfigError."""
        with pytest.raises(ConfigError, match="not found"):
            TactileMapsConfig.from_file(tmp_path / "none.yaml")

    def test_invalid_yaml(self, tmp_path):
        """Malformed YAML is reported."""
        path = tmp_path / "bad.yaml"
        path.write_text("train: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="Invalid YAML"):
            TactileMapsConfig.from_file(path)

    def test_unsupported_extension(self, tmp_path):
        """Only .json, .yaml and .yml are accepted."""
        path = tmp_path / "config.toml"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ConfigError, match="Unsupported file format '.toml'"):
            TactileMapsConfig.from_file(path)

    def test_unknown_key(self, tmp_path):
        """Unknown keys are rejected with their dotted name."""
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  epoch: 3\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="Unknown setting 'train.epoch'"):
            TactileMapsConfig.from_file(path)

    def test_wrong_type(self, tmp_path):
        """Values must match the default's type."""
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  epochs: many\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="expected integer"):
            TactileMapsConfig.from_file(path)

    def test_save_drops_secret(self, tmp_path):
        """Saved configurations never contain the API key."""
        config = TactileMapsConfig(fetch={"api_key": "secret-key"}, train={"epochs": 5})
        path = config.save_to_file(tmp_path / "resolved.yaml")
        text = path.read_text(encoding="utf-8")
        assert "secret-key" not in text
        data = yaml.safe_load(text)
        assert data["fetch"]["api_key"] is None
        assert TactileMapsConfig.from_file(path).get("train", "epochs") == 5

    def test_save_needs_format(self, tmp_path):
        """Unknown suffixes need an explicit format."""
        with pytest.raises(ConfigError, match="Cannot auto-detect format"):
            TactileMapsConfig().save_to_file(tmp_path / "config.cfg")


class TestConfigPriority:
    """Test the file < environment < overrides order."""

    def test_overrides(self):
        """section.key=value strings are parsed as YAML scalars."""
        config = TactileMapsConfig().apply_overrides(
            ["train.epochs=3", "train.lr=1e-3", "train.zoom_set=[16, 18]", "augment.enabled=false"]
        )
        assert config.get("train", "epochs") == 3
        assert config.get("train", "lr") == 1e-3
        assert config.get("train", "zoom_set") == [16, 18]
        assert config.get("augment", "enabled") is False

    @pytest.mark.parametrize(
        "item,message",
        [
            ("train.epochs", "must look like section.key=value"),
            ("epochs=3", "must name a section and a key"),
            ("train.epoch=3", "Unknown setting 'train.epoch'"),
            ("nosuch.key=1", "Unknown configuration section"),
        ],
    )
    def test_bad_overrides(self, item, message):
        """Malformed overrides are reported."""
        with pytest.raises(ConfigError, match=message):
            TactileMapsConfig().apply_overrides([item])

    def test_priority_order(self, tmp_path, clean_env):
        """Overrides beat the environment, which beats the file."""
        path = tmp_path / "c.yaml"
        path.write_text("train:\n  seed: 1\n  epochs: 9\nfetch:\n  api_key: from-file\n", encoding="utf-8")
        with patch.dict(os.environ, {"TACTILE_SEED": "2", "TACTILE_API_KEY": "from-env"}):
            config = TactileMapsConfig.load(path, overrides=["train.seed=3"])
        assert config.get("train", "seed") == 3
        assert config.get("synth", "seed") == 2
        assert config.get("train", "epochs") == 9
        assert config.get("fetch", "api_key") == "from-env"

    def test_config_file_variable(self, tmp_path, clean_env):
        """TACTILE_CONFIG_FILE names the file when none is given."""
        path = tmp_path / "c.yml"
        path.write_text("train:\n  epochs: 4\n", encoding="utf-8")
        with patch.dict(os.environ, {"TACTILE_CONFIG_FILE": str(path)}):
            assert TactileMapsConfig.load().get("train", "epochs") == 4

    def test_auto_discovery(self, tmp_path, clean_env):
        """The first existing default path is used."""
        path = tmp_path / "tactile-maps.yaml"
        path.write_text("eval:\n  batch_size: 2\n", encoding="utf-8")
        with patch.object(TactileMapsConfig, "get_default_config_paths", return_value=[tmp_path / "none.yaml", path]):
            assert TactileMapsConfig.auto_discover().get("eval", "batch_size") == 2

    def test_copy_is_independent(self):
        """Copies do not share section dictionaries."""
        config = TactileMapsConfig()
        other = config.copy(train={"epochs": 2})
        other.set("train", "batch_size", 4)
        assert config.get("train", "epochs") == 125
        assert config.get("train", "batch_size") == 1
        assert other.get("train", "epochs") == 2


class TestConfigHelpers:
    """Tests for the parser and validator helpers."""

    def test_parse_bool_strict(self):
        """Strict parsing refuses yes/no."""
        assert ConfigParser.parse_bool("on") is True
        with pytest.raises(ConfigError):
            ConfigParser.parse_bool("on", strict=True)

    def test_check_value_nullable(self):
        """Keys with a None default accept scalars and lists, not mappings."""
        assert ConfigValidator.check_value("x.y", [1, 2], None) == [1, 2]
        with pytest.raises(ConfigError, match="got a mapping"):
            ConfigValidator.check_value("x.y", {"a": 1}, None)

    def test_check_value_float_string(self):
        """Exponent strings count as numbers."""
        assert ConfigValidator.check_value("train.lr", "2e-4", 0.1) == 2e-4
        with pytest.raises(ConfigError, match="expected number"):
            ConfigValidator.check_value("train.lr", "fast", 0.1)
