"""Experiment configuration.

Config files are YAML whose sections and keys mirror the dataclass fields
below exactly; unknown keys are rejected so typos cannot silently fall back
to defaults. Numeric defaults follow the full-scale evaluation settings
(30 clients, 30 rounds, 10 local epochs, batch 32, lr 0.01, 100 shadow
models, 100-fold replication, Dirichlet alpha 0.01).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .attacks import ALL_ATTACKS, AttackSpec, Trigger
from .errors import ConfigurationError
from .nn import ModelArch, conv_arch, mlp_arch

__all__ = [
    "DatasetConfig",
    "ModelConfig",
    "PartitionSection",
    "TrainingSection",
    "DefenseSection",
    "AttackSection",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
]

AGGREGATORS = ("fedavg", "median", "bulyan", "lfr", "fltrust", "fedguard")


@dataclass
class DatasetConfig:
    kind: str = "synthetic"  # "synthetic" or "idx"
    # synthetic
    classes: int = 10
    per_class_train: int = 200
    per_class_test: int = 50
    height: int = 12
    width: int = 12
    noise: float = 0.08
    blob_sigma: float = 0.0  # 0 = auto (min(h, w)/8)
    # idx
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_limit: int = 0  # 0 = use everything
    test_limit: int = 0


@dataclass
class ModelConfig:
    kind: str = "mlp"  # "mlp" or "cnn"
    hidden: list = field(default_factory=lambda: [32])
    channels: list = field(default_factory=lambda: [32, 64])
    dense_width: int = 128
    relu: bool = True


@dataclass
class PartitionSection:
    mode: str = "dirichlet"
    alpha: float = 0.01
    clients: int = 30


@dataclass
class TrainingSection:
    rounds: int = 30
    local_epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.01


@dataclass
class DefenseSection:
    seed_fraction: float = 0.0001  # 0.01% of the training set
    replication: int = 100
    shadow_count: int = 100
    shadow_epochs: int = 100
    svm_lambda: float = 0.001
    svm_eta: float = 0.01
    svm_epochs: int = 300


@dataclass
class AttackSection:
    byz_fraction: float = 0.0
    catalog: list = field(default_factory=lambda: list(ALL_ATTACKS))
    poison_fraction: float = 0.5
    bit_index: int = 10
    noise_scale: float = 1.0
    uniform_low: float = -1.0
    uniform_high: float = 1.0
    krum_factor: float = 0.5
    trigger_size: int = 3
    trigger_value: float = 1.0
    target_label: int = 0


@dataclass
class ExperimentConfig:
    seed: int = 0
    aggregator: str = "fedavg"
    f_estimate: int = -1  # -1: bulyan/lfr use the true byzantine count
    out_dir: str = "runs"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    partition: PartitionSection = field(default_factory=PartitionSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    defense: DefenseSection = field(default_factory=DefenseSection)
    attacks: AttackSection = field(default_factory=AttackSection)

    def validate(self) -> "ExperimentConfig":
        if self.aggregator not in AGGREGATORS:
            raise ConfigurationError(f"unknown aggregator {self.aggregator!r}, pick one of {AGGREGATORS}")
        if not 0 <= self.attacks.byz_fraction <= 1:
            raise ConfigurationError(f"byz_fraction must be in [0, 1], got {self.attacks.byz_fraction}")
        if self.training.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if self.dataset.kind not in ("synthetic", "idx"):
            raise ConfigurationError(f"unknown dataset kind {self.dataset.kind!r}")
        if self.dataset.kind == "idx":
            missing = [k for k in ("train_images", "train_labels", "test_images", "test_labels")
                       if not getattr(self.dataset, k)]
            if missing:
                raise ConfigurationError(f"idx dataset needs paths for: {', '.join(missing)}")
        if self.model.kind not in ("mlp", "cnn"):
            raise ConfigurationError(f"unknown model kind {self.model.kind!r}")
        unknown = [k for k in self.attacks.catalog if k not in ALL_ATTACKS]
        if unknown:
            raise ConfigurationError(f"unknown attack kinds in catalog: {unknown}")
        if not self.attacks.catalog:
            raise ConfigurationError("attack catalog must not be empty")
        return self

    # ---- derived objects -------------------------------------------------

    def input_shape(self) -> tuple:
        if self.dataset.kind == "synthetic":
            return (1, self.dataset.height, self.dataset.width)
        return (1, 28, 28)

    def arch(self, class_count: int) -> ModelArch:
        shape = self.input_shape()
        if self.model.kind == "mlp":
            return mlp_arch(shape, tuple(self.model.hidden), class_count, relu=self.model.relu)
        return conv_arch(shape, class_count, tuple(self.model.channels),
                         self.model.dense_width, relu=self.model.relu)

    def attack_specs(self) -> list:
        """One AttackSpec per cataloged kind, carrying this config's constants."""
        a = self.attacks
        trigger = Trigger(height=a.trigger_size, width=a.trigger_size, value=a.trigger_value)
        return [
            AttackSpec(
                kind=kind,
                poison_fraction=a.poison_fraction,
                bit_index=a.bit_index,
                noise_scale=a.noise_scale,
                uniform_range=(a.uniform_low, a.uniform_high),
                krum_factor=a.krum_factor,
                trigger=trigger,
                target_label=a.target_label,
            )
            for kind in a.catalog
        ]


_SECTIONS = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "partition": PartitionSection,
    "training": TrainingSection,
    "defense": DefenseSection,
    "attacks": AttackSection,
}


def _fill(cls, mapping: dict, where: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(mapping) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return cls(**mapping)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = raw.pop(name, None)
        if section is None:
            continue
        if not isinstance(section, dict):
            raise ConfigurationError(f"section {name!r} must be a mapping")
        kwargs[name] = _fill(cls, section, f"section {name!r}")
    top_fields = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(_SECTIONS)
    unknown = set(raw) - top_fields
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    kwargs.update(raw)
    return ExperimentConfig(**kwargs).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: config root must be a mapping")
    return config_from_dict(raw)
