"""Run configuration: one INI file with a section per pipeline stage."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .losses import LossConfig
from .quality import QualityConfig
from .restoration.network import RestoreNetConfig
from .restoration.train import RestoreTrainConfig
from .translation.model import TranslationConfig


@dataclass
class FormationConfig:
    water_config: str = ""  # optional override file for the shipped water types
    water_types: str = "type-I,type-III"
    assignment: str = "round_robin"  # round_robin | product
    ambient_jitter: float = 0.0  # 0.05 enables the +-0.05 per-image jitter

    def labels(self) -> list[str]:
        return [s.strip() for s in self.water_types.split(",") if s.strip()]


@dataclass
class DatasetGenConfig:
    styles_per_image: int = 6
    stratify: bool = False
    min_translation_steps: int = 1000
    val_fraction: float = 0.0

    def __post_init__(self):
        if self.styles_per_image < 1:
            raise ValueError("styles_per_image must be >= 1")


@dataclass
class RunSection:
    seed: int = 0
    deterministic: bool = True
    output_root: str = "runs"
    device: str = "cpu"


SECTIONS = {
    "run": RunSection,
    "formation": FormationConfig,
    "losses": LossConfig,
    "translation": TranslationConfig,
    "datasetgen": DatasetGenConfig,
    "restoration": RestoreNetConfig,
    "restoration_train": RestoreTrainConfig,
    "quality": QualityConfig,
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, default):
    if isinstance(default, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    formation: FormationConfig = field(default_factory=FormationConfig)
    losses: LossConfig = field(default_factory=LossConfig)
    translation: TranslationConfig = field(default_factory=TranslationConfig)
    datasetgen: DatasetGenConfig = field(default_factory=DatasetGenConfig)
    restoration: RestoreNetConfig = field(default_factory=RestoreNetConfig)
    restoration_train: RestoreTrainConfig = field(default_factory=RestoreTrainConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            section = getattr(self, name)
            parser[name] = {f.name: _format(getattr(section, f.name)) for f in dataclasses.fields(section)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(text)
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise ValueError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, kind in SECTIONS.items():
            defaults = kind()
            values = {}
            if parser.has_section(name):
                names = {f.name for f in dataclasses.fields(kind)}
                for key, raw in parser[name].items():
                    if key not in names:
                        raise ValueError(f"unknown key [{name}] {key}")
                    values[key] = _parse(raw, getattr(defaults, key))
            kwargs[name] = kind(**values)
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def with_overrides(self, overrides) -> "RunConfig":
        """Apply ``section.key=value`` strings, returning a new config."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(self.to_text())
        for item in overrides or ():
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ValueError(f"override must look like section.key=value, got {item!r}")
            lhs, value = item.split("=", 1)
            section, key = lhs.strip().split(".", 1)
            if section not in SECTIONS:
                raise ValueError(f"unknown config section {section!r}")
            parser[section][key.strip()] = value.strip()
        buf = io.StringIO()
        parser.write(buf)
        return RunConfig.from_text(buf.getvalue())

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def seed_everything(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False
