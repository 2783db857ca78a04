"""Run configuration: INI-style file with sections, strict key validation,
CLI-flag overrides on top."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .descriptor import DescriptorParams
from .pipeline import TrainConfig
from .superpixel import SlicParams


class ConfigError(ValueError):
    """Unknown keys, unparsable values, or out-of-range settings."""


@dataclass(frozen=True)
class CameraConfig:
    focal_length_px: float = 700.0
    baseline_m: float = 0.54
    camera_height_m: float = 1.65

    def __post_init__(self):
        if min(self.focal_length_px, self.baseline_m, self.camera_height_m) <= 0:
            raise ConfigError("camera parameters must be positive")


@dataclass(frozen=True)
class SceneConfig:
    width: int = 256
    height: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ConfigError("scene dimensions must be at least 32x32")


@dataclass(frozen=True)
class BaselineConfig:
    bin_width: float = 1.0
    tolerance_px: float = 1.0

    def __post_init__(self):
        if self.bin_width <= 0 or self.tolerance_px < 0:
            raise ConfigError("baseline bin_width must be > 0 and tolerance >= 0")


@dataclass
class RunConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    descriptor: DescriptorParams = field(default_factory=DescriptorParams)
    slic: SlicParams = field(default_factory=SlicParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)


_SECTIONS = {
    "camera": CameraConfig,
    "scene": SceneConfig,
    "descriptor": DescriptorParams,
    "slic": SlicParams,
    "train": TrainConfig,
    "baseline": BaselineConfig,
}


def _coerce(text: str, target_type) -> object:
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def load_config(path: str | Path | None = None) -> RunConfig:
    """Defaults, overlaid with the sections of an INI file when given.

    Unknown sections or keys are rejected; every value passes through the
    owning dataclass validator.
    """
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        cls = _SECTIONS[section]
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        types = {f.name: type(getattr(getattr(RunConfig(), section), f.name))
                 for f in dataclasses.fields(cls)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                updates[key] = _coerce(raw, types[key])
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {exc}") from exc
        try:
            setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **updates))
        except ValueError as exc:
            raise ConfigError(f"{path}: invalid [{section}] settings: {exc}") from exc
    return cfg


def apply_overrides(cfg: RunConfig, seed: int | None = None,
                    block_size: int | None = None) -> RunConfig:
    """CLI flags win over file values."""
    try:
        if seed is not None:
            cfg.train = dataclasses.replace(cfg.train, seed=seed)
            cfg.scene = dataclasses.replace(cfg.scene, seed=seed)
        if block_size is not None:
            cfg.descriptor = dataclasses.replace(cfg.descriptor, block_size=block_size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
