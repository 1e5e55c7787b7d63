"""Run configuration: JSON document with dataset/field/train/eval/paths
sections, strict about unknown keys, with flag overrides applied on top.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .errors import ConfigError
from .glyphs import DEFAULT_ALPHABET, DEFAULT_MARGIN


@dataclass
class DatasetSettings:
    manifest: str | None = None
    alphabet: str = DEFAULT_ALPHABET
    margin: float = DEFAULT_MARGIN


@dataclass
class FieldSettings:
    channels: int = 3
    aa_k: float = 4.0
    train_width: int = 64
    corner_threshold: float = 3.0

    @property
    def gamma_final(self):
        return self.aa_k / self.train_width


@dataclass
class TrainSettings:
    epochs: int = 2000
    lr: float = 1e-3
    seed: int = 0
    freeze_epoch: int | None = None
    alpha: float = 1.0           # corner template loss weight
    beta: float = 0.01           # gradient-norm (eikonal) loss weight
    gamma_reg: float = 1e-4      # latent norm weight
    gamma_start: float = 1.0     # warm-up anti-alias range (full field range)
    anneal_epochs: int | None = None  # None -> epochs // 2; 0 disables warm-up
    supervision: str = "sdf"     # "sdf" | "pixel"
    eikonal_ratio: float = 0.15  # fraction of samples carrying the stencil
    rho: float = 0.25            # homogeneous samples per edge sample
    min_homogeneous: int = 64
    # per-step cap on edge+homogeneous samples (seeded subset per epoch;
    # corner windows always kept); None trains on every sample each step
    samples_cap: int | None = 1024
    fit_lr: float = 1e-2
    fit_steps: int = 500
    hidden_layers: int = 8       # network depth (production default)
    hidden_width: int = 384      # units per hidden layer
    threads: int | None = None   # 1 forces the bit-reproducible mode

    def __post_init__(self):
        if self.supervision not in ("sdf", "pixel"):
            raise ConfigError(f"supervision must be 'sdf' or 'pixel', got {self.supervision!r}")
        if min(self.alpha, self.beta, self.gamma_reg) < 0:
            raise ConfigError("loss weights must be non-negative")
        if not 0.0 <= self.eikonal_ratio <= 1.0:
            raise ConfigError("eikonal_ratio must be in [0, 1]")


@dataclass
class EvalSettings:
    resolutions: list = dc_field(default_factory=lambda: [128, 256, 512, 1024])
    methods: list = dc_field(default_factory=lambda: ["implicit", "bilateral"])


@dataclass
class PathsSettings:
    output_dir: str = "out"


_SECTIONS = {
    "dataset": DatasetSettings,
    "field": FieldSettings,
    "train": TrainSettings,
    "eval": EvalSettings,
    "paths": PathsSettings,
}


@dataclass
class RunConfig:
    dataset: DatasetSettings = dc_field(default_factory=DatasetSettings)
    field: FieldSettings = dc_field(default_factory=FieldSettings)
    train: TrainSettings = dc_field(default_factory=TrainSettings)
    eval: EvalSettings = dc_field(default_factory=EvalSettings)
    paths: PathsSettings = dc_field(default_factory=PathsSettings)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            section = doc.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f"config section {name!r} must be an object")
            valid = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(section) - valid
            if bad:
                raise ConfigError(f"unknown keys in section {name!r}: {sorted(bad)}")
            try:
                kwargs[name] = section_cls(**section)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad config section {name!r}: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def apply_overrides(self, pairs):
        """Apply ``section.key=value`` overrides (values parsed as JSON)."""
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} must look like section.key=value")
            target, _, raw = pair.partition("=")
            if "." not in target:
                raise ConfigError(f"override target {target!r} must be section.key")
            section_name, _, key = target.partition(".")
            if section_name not in _SECTIONS:
                raise ConfigError(f"unknown config section {section_name!r}")
            section = getattr(self, section_name)
            if key not in {f.name for f in dataclasses.fields(section)}:
                raise ConfigError(f"unknown key {key!r} in section {section_name!r}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw  # bare strings are convenient on the command line
            setattr(section, key, value)
        return self

    def echo(self, path):
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
