"""Configuration management for tactile-maps."""

import copy as _copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import yaml

from .augment import AugmentParams
from .dataset.fetch import STATIC_MAPS_URL, FetchSettings
from .dataset.types import SOURCE_SIZE, DatasetError, SynthProfile
from .gan import DiscriminatorConfig, GeneratorConfig
from .palette import DEFAULT_TEXTURES, ClassId, ClassPalette, PaletteError, TexturePattern, parse_texture_map
from .train import TrainConfig, TrainError

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Configuration-related errors."""

    pass


class ConfigParser:
    """Helper class for parsing configuration values."""

    @staticmethod
    def parse_bool(value: str, strict: bool = False) -> bool:
        """Parse boolean value from string.

        Args:
            value: String value to parse
            strict: If True, only accept 'true'/'false' and '1'/'0'
        """
        value_lower = value.strip().lower()
        truthy = ("true", "1") if strict else ("true", "1", "yes", "on")
        falsy = ("false", "0") if strict else ("false", "0", "no", "off")
        if value_lower in truthy:
            return True
        if value_lower in falsy:
            return False
        raise ConfigError(f"Invalid boolean value '{value}'. Use 'true'/'false' or '1'/'0'")

    @staticmethod
    def parse_int(value: str, field_name: str) -> int:
        try:
            return int(value)
        except ValueError as e:
            if "." in value:
                raise ConfigError(
                    f"Invalid integer value for {field_name}: '{value}'. Remove decimal point - use whole numbers only"
                ) from e
            raise ConfigError(f"Invalid integer value for {field_name}: '{value}'") from e

    @staticmethod
    def parse_scalar(value: str) -> Any:
        """Parse a ``--set`` value the way it would read in a YAML file."""
        try:
            return yaml.safe_load(value)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse value '{value}': {e}") from e

    @staticmethod
    def get_env_var(name: str, prefix: str = "TACTILE_") -> Optional[str]:
        """Get environment variable and strip whitespace."""
        value = os.environ.get(f"{prefix}{name}")
        return value.strip() if value else None


class ConfigValidator:
    """Helper class for configuration validation."""

    @staticmethod
    def check_value(where: str, value: Any, default: Any) -> Any:
        """Check ``value`` against the type of its default and return it converted.

        Keys whose default is ``None`` accept any scalar or list.
        """
        if default is None:
            if isinstance(value, dict):
                raise ConfigError(f"Invalid data type for '{where}': got a mapping")
            return value
        if isinstance(default, bool):
            if isinstance(value, str):
                return ConfigParser.parse_bool(value, strict=True)
            if not isinstance(value, bool):
                raise ConfigError(f"Invalid data type for '{where}': expected boolean, got {type(value).__name__}")
            return value
        if isinstance(default, int):
            if isinstance(value, str) and value.strip().lstrip("-").isdigit():
                return int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"Invalid data type for '{where}': expected integer, got {type(value).__name__}")
            return value
        if isinstance(default, float):
            if isinstance(value, str):
                # YAML 1.1 reads "1e-3" as a string
                try:
                    return float(value)
                except ValueError:
                    pass
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"Invalid data type for '{where}': expected number, got {type(value).__name__}")
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"Invalid data type for '{where}': expected string, got {type(value).__name__}")
            return value
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"Invalid data type for '{where}': expected list, got {type(value).__name__}")
            return list(value)
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Invalid data type for '{where}': expected mapping, got {type(value).__name__}")
            return dict(value)
        return value


class TactileMapsConfig:
    """Configuration for the tactile-maps toolkit.

    Settings live in named sections, each starting from its ``DEFAULT_*``
    dictionary. Typed views (:meth:`palette`, :meth:`train_config`, ...)
    build the validated objects the modules consume.
    """

    DEFAULT_CONFIG_PATHS = [
        Path("tactile-maps.yaml"),
        Path("tactile-maps.yml"),
        Path("tactile-maps.json"),
        Path.home() / ".config" / "tactile-maps" / "config.yaml",
        Path.home() / ".config" / "tactile-maps" / "config.yml",
        Path.home() / ".config" / "tactile-maps" / "config.json",
    ]

    DEFAULT_PALETTE = {
        "file": None,  # name = RRGGBB text file; replaces `colors` when set
        "colors": {},  # per-class overrides, e.g. {"Water": "#0000ff"}
        "background_threshold": 230,
    }

    DEFAULT_TEXTURES = {c.display_name: str(p) for c, p in DEFAULT_TEXTURES.items()}

    DEFAULT_SYNTH = {
        "n": 100,
        "zoom": 16,
        "size": SOURCE_SIZE,
        "seed": 0,
        "include_buildings": None,
        "street_width": None,
        "text_density": 1.0,
        "icon_density": 1.0,
        "highway_prob": 0.6,
        "water_prob": 0.45,
        "park_prob": 0.8,
        "hospital_prob": 0.5,
        "max_attempts": 20,
    }

    DEFAULT_FETCH = {
        "live": False,  # live requests also need TACTILE_API_KEY
        "api_key": None,
        "base_url": STATIC_MAPS_URL,
        "max_concurrency": 4,
        "min_interval": 0.1,
        "max_attempts": 3,
        "backoff_base": 0.5,
        "timeout": 30.0,
    }

    DEFAULT_AUGMENT = {
        "enabled": True,
        "hflip_prob": 0.5,
        "max_shift": 0.1,
        "scale_range": [0.9, 1.1],
        "max_rotation_deg": 15.0,
        "grey_recolor_prob": 0.5,
        "grey_value": [200, 200, 200],
        "seed": 0,
    }

    DEFAULT_GENERATOR = {
        "depth": 5,
        "base_channels": 64,
        "max_channels": 512,
        "nested_skips": True,
        "norm": "instance",
    }

    DEFAULT_DISCRIMINATOR = {
        "base_channels": 64,
        "max_channels": 512,
        "n_strided": 3,
        "kernel_size": 4,
        "norm": "batch",
    }

    DEFAULT_TRAIN = {
        "epochs": 125,
        "batch_size": 1,
        "lr": 2e-4,
        "beta1": 0.5,
        "beta2": 0.999,
        "lambda_l1": 100.0,
        "seed": 0,
        "zoom_set": [16],
        "grey_recolor": None,  # None: on for the Zoom-16/18 model only
        "checkpoint_every": 25,
        "deterministic": False,
        "device": "cpu",
        "log_every": 50,
        "num_workers": 0,
    }

    DEFAULT_EVAL = {
        "max_workers": None,
        "batch_size": 4,
        "device": "cpu",
        "formats": ["csv", "markdown"],
    }

    SECRET_KEYS = {("fetch", "api_key")}

    def __init__(
        self,
        palette: Optional[Dict[str, Any]] = None,
        textures: Optional[Dict[str, Any]] = None,
        synth: Optional[Dict[str, Any]] = None,
        fetch: Optional[Dict[str, Any]] = None,
        augment: Optional[Dict[str, Any]] = None,
        generator: Optional[Dict[str, Any]] = None,
        discriminator: Optional[Dict[str, Any]] = None,
        train: Optional[Dict[str, Any]] = None,
        eval: Optional[Dict[str, Any]] = None,
    ):
        """Initialize configuration with default values."""
        updates = {
            "palette": palette,
            "textures": textures,
            "synth": synth,
            "fetch": fetch,
            "augment": augment,
            "generator": generator,
            "discriminator": discriminator,
            "train": train,
            "eval": eval,
        }
        self.sections: Dict[str, Dict[str, Any]] = {}
        for name, defaults in self.defaults().items():
            section = _copy.deepcopy(defaults)
            if updates[name]:
                section.update(_copy.deepcopy(updates[name]))
            self.sections[name] = section

    @classmethod
    def defaults(cls) -> Dict[str, Dict[str, Any]]:
        return {
            "palette": cls.DEFAULT_PALETTE,
            "textures": cls.DEFAULT_TEXTURES,
            "synth": cls.DEFAULT_SYNTH,
            "fetch": cls.DEFAULT_FETCH,
            "augment": cls.DEFAULT_AUGMENT,
            "generator": cls.DEFAULT_GENERATOR,
            "discriminator": cls.DEFAULT_DISCRIMINATOR,
            "train": cls.DEFAULT_TRAIN,
            "eval": cls.DEFAULT_EVAL,
        }

    def section(self, name: str) -> Dict[str, Any]:
        if name not in self.sections:
            raise ConfigError(f"Unknown configuration section: {name}")
        return self.sections[name]

    def get(self, name: str, key: str) -> Any:
        return self.section(name)[key]

    def set(self, name: str, key: str, value: Any) -> None:
        validated = self._validate_section(name, {key: value}, keep_nulls=True)
        self.section(name).update(validated)

    # === LOADING ===

    @classmethod
    def from_file(cls, file_path: Union[str, Path]) -> "TactileMapsConfig":
        """Load configuration from a JSON or YAML file."""
        file_path = Path(file_path)

        if not file_path.exists():
            raise ConfigError(f"Configuration file not found: {file_path}")

        try:
            content = file_path.read_text(encoding="utf-8")
        except OSError as os_error:
            raise ConfigError(
                f"Error reading configuration file {file_path}: {os_error}"
            ) from os_error

        suffix = file_path.suffix.lower()
        if suffix == ".json":
            try:
                data = json.loads(content)
            except json.JSONDecodeError as json_error:
                raise ConfigError(f"Invalid JSON in file {file_path}: {json_error}") from json_error
        elif suffix in (".yaml", ".yml"):
            try:
                data = yaml.safe_load(content)
            except yaml.YAMLError as yaml_error:
                raise ConfigError(f"Invalid YAML in file {file_path}: {yaml_error}") from yaml_error
        else:
            raise ConfigError(
                f"Unsupported file format '{file_path.suffix}' for file {file_path}. Use .json, .yaml, or .yml files."
            )

        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(
                f"Configuration file {file_path} must contain a mapping, got {type(data).__name__}"
            )

        try:
            validated = cls._validate_file_data(data)
        except ConfigError as config_error:
            raise ConfigError(f"Error in file {file_path}: {config_error}") from config_error

        logger.debug(f"Loaded configuration from {file_path}")
        return cls(**validated)

    @classmethod
    def _validate_section(
        cls, name: str, values: Dict[str, Any], keep_nulls: bool = False
    ) -> Dict[str, Any]:
        defaults = cls.defaults().get(name)
        if defaults is None:
            raise ConfigError(
                f"Unknown configuration section: '{name}'. Known sections: {', '.join(cls.defaults())}"
            )
        validated = {}
        for key, value in values.items():
            if not isinstance(key, str) or key not in defaults:
                raise ConfigError(f"Unknown setting '{name}.{key}'")
            default = defaults[key]
            if value is None:
                # null resets to the default unless the caller wants to keep it
                if keep_nulls and default is None:
                    validated[key] = None
                continue
            validated[key] = ConfigValidator.check_value(f"{name}.{key}", value, default)
        return validated

    @classmethod
    def _validate_file_data(cls, data: Dict[str, Any]) -> Dict[str, Any]:
        """Validate and convert data types from configuration file."""
        validated = {}
        for name, values in data.items():
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError(
                    f"Invalid data type for section '{name}': expected mapping, got {type(values).__name__}"
                )
            validated[name] = cls._validate_section(name, values)
        return validated

    def apply_environment(self, prefix: str = "TACTILE_") -> "TactileMapsConfig":
        api_key = ConfigParser.get_env_var("API_KEY", prefix)
        if api_key:
            self.sections["fetch"]["api_key"] = api_key
        live = ConfigParser.get_env_var("FETCH_LIVE", prefix)
        if live is not None:
            self.sections["fetch"]["live"] = ConfigParser.parse_bool(live)
        seed = ConfigParser.get_env_var("SEED", prefix)
        if seed is not None:
            self.apply_seed(ConfigParser.parse_int(seed, f"{prefix}SEED"))
        return self

    @classmethod
    def from_environment(cls, prefix: str = "TACTILE_") -> "TactileMapsConfig":
        """Defaults plus environment variables."""
        return cls().apply_environment(prefix)

    def apply_seed(self, seed: int) -> "TactileMapsConfig":
        """One seed for synthesis, augmentation and training."""
        for name in ("synth", "augment", "train"):
            self.sections[name]["seed"] = int(seed)
        return self

    def apply_overrides(self, overrides: Iterable[str]) -> "TactileMapsConfig":
        """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"Override '{item}' must look like section.key=value")
            path, raw = item.split("=", 1)
            if "." not in path:
                raise ConfigError(f"Override '{item}' must name a section and a key")
            name, key = (part.strip() for part in path.split(".", 1))
            self.set(name, key, ConfigParser.parse_scalar(raw))
            logger.debug(f"Override {name}.{key} = {raw}")
        return self

    @classmethod
    def get_default_config_paths(cls) -> List[Path]:
        """Get list of default configuration file paths to search."""
        return cls.DEFAULT_CONFIG_PATHS.copy()

    @classmethod
    def auto_discover(cls) -> "TactileMapsConfig":
        """Load the first configuration file found in the standard locations."""
        for path in cls.get_default_config_paths():
            if path.exists():
                logger.info(f"Using configuration from {path}")
                return cls.from_file(path)
        logger.debug("No configuration file found, using defaults")
        return cls()

    @classmethod
    def load(
        cls,
        config_file: Optional[Union[str, Path]] = None,
        overrides: Optional[Iterable[str]] = None,
        prefix: str = "TACTILE_",
    ) -> "TactileMapsConfig":
        """Priority: overrides > environment > config file > defaults.

        Without ``config_file``, ``TACTILE_CONFIG_FILE`` or auto-discovery
        supplies the file.
        """
        path = config_file or ConfigParser.get_env_var("CONFIG_FILE", prefix)
        config = cls.from_file(path) if path else cls.auto_discover()
        config.apply_environment(prefix)
        config.apply_overrides(overrides or [])
        return config

    def copy(self, **overrides: Dict[str, Any]) -> "TactileMapsConfig":
        """Create a copy of this configuration with optional per-section updates."""
        values = _copy.deepcopy(self.sections)
        for name, updates in overrides.items():
            values.setdefault(name, {}).update(updates)
        return self.__class__(**values)

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary, hiding sensitive data."""
        data = _copy.deepcopy(self.sections)
        for name, key in self.SECRET_KEYS:
            if data[name].get(key):
                data[name][key] = "***"
        return data

    def __repr__(self) -> str:
        return (
            f"TactileMapsConfig(zoom_set={self.sections['train']['zoom_set']}, "
            f"epochs={self.sections['train']['epochs']}, "
            f"live_fetch={self.sections['fetch']['live']}, "
            f"api_key={'***' if self.sections['fetch']['api_key'] else None})"
        )

    def save_to_file(self, file_path: Union[str, Path], format: str = "auto") -> Path:
        """Write the resolved configuration; secrets are never written."""
        file_path = Path(file_path)
        if format == "auto":
            if file_path.suffix.lower() == ".json":
                format = "json"
            elif file_path.suffix.lower() in (".yaml", ".yml"):
                format = "yaml"
            else:
                raise ConfigError(
                    f"Cannot auto-detect format for {file_path}. Use explicit format parameter."
                )

        data = _copy.deepcopy(self.sections)
        for name, key in self.SECRET_KEYS:
            data[name][key] = None

        file_path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(file_path, "w", encoding="utf-8") as f:
                if format == "json":
                    json.dump(data, f, indent=2, sort_keys=True)
                elif format == "yaml":
                    yaml.safe_dump(data, f, default_flow_style=False, sort_keys=True)
                else:
                    raise ConfigError(f"Unsupported format: {format}")
        except OSError as os_error:
            raise ConfigError(
                f"Error writing configuration file {file_path}: {os_error}"
            ) from os_error
        return file_path

    # === TYPED VIEWS ===

    def palette(self) -> ClassPalette:
        settings = self.sections["palette"]
        try:
            if settings["file"]:
                return ClassPalette.from_file(settings["file"])
            return ClassPalette.from_mapping(settings["colors"], settings["background_threshold"])
        except PaletteError as e:
            raise ConfigError(f"palette: {e}") from e

    def texture_map(self) -> Dict[ClassId, TexturePattern]:
        try:
            return parse_texture_map(self.sections["textures"])
        except PaletteError as e:
            raise ConfigError(f"textures: {e}") from e

    def synth_profile(self, zoom: Optional[int] = None, seed: Optional[int] = None) -> SynthProfile:
        s = self.sections["synth"]
        try:
            return SynthProfile(
                zoom_analog=int(zoom if zoom is not None else s["zoom"]),
                seed=int(seed if seed is not None else s["seed"]),
                size=s["size"],
                include_buildings=s["include_buildings"],
                text_density=s["text_density"],
                icon_density=s["icon_density"],
                highway_prob=s["highway_prob"],
                water_prob=s["water_prob"],
                park_prob=s["park_prob"],
                hospital_prob=s["hospital_prob"],
                street_width=s["street_width"],
                max_attempts=s["max_attempts"],
            )
        except (DatasetError, ValueError) as e:
            raise ConfigError(f"synth: {e}") from e

    def fetch_settings(self) -> FetchSettings:
        s = {k: v for k, v in self.sections["fetch"].items() if k != "live"}
        try:
            return FetchSettings(**s)
        except (DatasetError, TypeError) as e:
            raise ConfigError(f"fetch: {e}") from e

    @property
    def augment_enabled(self) -> bool:
        return bool(self.sections["augment"]["enabled"])

    def augment_params(self) -> AugmentParams:
        s = {k: v for k, v in self.sections["augment"].items() if k != "enabled"}
        try:
            s["scale_range"] = _pair(s["scale_range"], "scale_range")
            s["grey_value"] = tuple(int(v) for v in s["grey_value"])
            return AugmentParams(**s)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"augment: {e}") from e

    def generator_config(self) -> GeneratorConfig:
        try:
            return GeneratorConfig(**self.sections["generator"])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"generator: {e}") from e

    def discriminator_config(self) -> DiscriminatorConfig:
        try:
            return DiscriminatorConfig(**self.sections["discriminator"])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"discriminator: {e}") from e

    def train_config(self) -> TrainConfig:
        s = dict(self.sections["train"])
        try:
            s["zoom_set"] = tuple(int(z) for z in s["zoom_set"])
            return TrainConfig(**s)
        except (TrainError, ValueError, TypeError) as e:
            raise ConfigError(f"train: {e}") from e

    def validate(self) -> None:
        """Build every typed view; raises ConfigError for the first invalid one."""
        self.palette()
        self.texture_map()
        self.synth_profile()
        self.fetch_settings()
        self.augment_params()
        self.generator_config()
        self.discriminator_config()
        self.train_config()

    @property
    def is_valid(self) -> bool:
        try:
            self.validate()
            return True
        except ConfigError:
            return False


def _pair(value: Any, name: str) -> Tuple[float, float]:
    values = list(value)
    if len(values) != 2:
        raise ValueError(f"{name} needs exactly two values, got {values}")
    return float(values[0]), float(values[1])
