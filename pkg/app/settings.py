import yaml

from pathlib import Path
from functools import lru_cache
from dataclasses import dataclass, field, fields, replace

from app.augment import AugmentConfig
from app.core.model import InstanceClassifierConfig
from app.core.pooling import PoolingConfig
from app.data.manifest import DatasetLayout
from app.errors import ConfigurationError
from app.filters.threshold import WhiteThresholdFilter
from app.train.trainer import TrainConfig


DEFAULT_PATH = Path(__file__).resolve().parent.parent / "settings.yaml"


@dataclass(frozen=True)
class DataSettings:
    patch_size: int = 96
    subimage_size: int = 768
    train_subimages: int = 8
    white_level: int = 240
    max_white_fraction: float = 0.75
    folds: int = 4
    validation_fraction: float = 0.1
    jobs: int = 1

    @property
    def layout(self) -> DatasetLayout:
        return DatasetLayout(self.patch_size, self.subimage_size, self.train_subimages)

    def detector(self) -> WhiteThresholdFilter:
        try:
            return WhiteThresholdFilter(self.white_level, self.max_white_fraction)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

    def with_layout(self, layout: DatasetLayout | None) -> "DataSettings":
        """
        Copy with geometry taken from a dataset's own layout, if it declares one.
        """
        if layout is None:
            return self
        return replace(self, **layout.to_dict())


@dataclass(frozen=True)
class ModelSettings:
    conv_channels: tuple[int, ...] = (16, 32, 32)
    conv_kernels: tuple[int, ...] = (5, 3, 3)
    hidden_units: int = 128
    dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "conv_kernels", tuple(int(k) for k in self.conv_kernels))

    def classifier(self, patch_size: int) -> InstanceClassifierConfig:
        return InstanceClassifierConfig.default(
            (3, patch_size, patch_size), self.conv_channels, self.conv_kernels, self.hidden_units, self.dropout
        )


@dataclass(frozen=True)
class Settings:
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def pooling(self) -> PoolingConfig:
        return self.train.pooling

    @property
    def augment(self) -> AugmentConfig:
        return self.train.augment


SECTIONS = ("data", "model", "pooling", "augment", "train")


def _section(cls, raw: dict, name: str, base=None):
    """
    Build a settings dataclass from one YAML section, rejecting unknown keys.
    """
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Section '{name}' must be a mapping")
    known = {f.name for f in fields(cls)} - {"pooling", "augment"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"Unknown key(s) in section '{name}': {', '.join(sorted(unknown))}")
    base = base if base is not None else cls()
    return replace(base, **raw)


def load_settings(path: str | Path | None = None, overrides: dict[str, dict] | None = None) -> Settings:
    """
    Load the run configuration.

    Precedence: dataclass defaults, then the YAML file, then `overrides`
    (command-line flags, keyed by section).

    Args:
        path (str | Path | None): YAML file; None means defaults only.
        overrides (dict): {section: {key: value}} applied last; None values are ignored.

    Returns:
        Settings: Fully parsed and validated configuration object.

    Raises:
        ConfigurationError: On unknown sections or keys, or invalid values.
    """
    raw = {}
    if path is not None:
        try:
            with open(path, "r") as f:
                raw = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigurationError(f"Cannot read settings file '{path}': {e}") from e
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in '{path}': {e}") from e
        if not isinstance(raw, dict):
            raise ConfigurationError(f"Settings file '{path}' must be a mapping of sections")

    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"Unknown settings section(s): {', '.join(sorted(unknown))}")

    for section, values in (overrides or {}).items():
        merged = dict(raw.get(section) or {})
        merged.update({k: v for k, v in values.items() if v is not None})
        raw[section] = merged

    try:
        pooling = _section(PoolingConfig, raw.get("pooling"), "pooling")
        augment = _section(AugmentConfig, raw.get("augment"), "augment")
        train = _section(TrainConfig, raw.get("train"), "train", TrainConfig(pooling=pooling, augment=augment))
        return Settings(
            data=_section(DataSettings, raw.get("data"), "data"),
            model=_section(ModelSettings, raw.get("model"), "model"),
            train=train,
        )
    except TypeError as e:
        raise ConfigurationError(f"Invalid settings: {e}") from e


@lru_cache(maxsize=1)
def get_settings(path: str = str(DEFAULT_PATH)) -> Settings:
    """
    Load the repository settings file and cache the result.
    """
    return load_settings(path)
