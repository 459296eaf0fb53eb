"""Byzantine client behaviors.

Two families: data poisoning (rewrites the private dataset, training stays
honest) and model poisoning (rewrites the uploaded parameter vector after
training). Every randomized attack is a pure function of its rng_seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import LabeledDataset
from .errors import ConfigurationError
from .nn import ParamVector

__all__ = [
    "DATA_ATTACKS",
    "MODEL_ATTACKS",
    "ALL_ATTACKS",
    "Trigger",
    "AttackSpec",
    "label_flip",
    "backdoor_inject",
    "sign_flip",
    "random_params",
    "bit_flip",
    "lie_attack",
    "krum_attack",
    "apply_data_attack",
    "apply_model_attack",
    "spread_attack_kinds",
]

DATA_ATTACKS = ("label_flip", "backdoor")
MODEL_ATTACKS = ("sign_flip", "random_params", "bit_flip", "lie", "krum_scale")
ALL_ATTACKS = DATA_ATTACKS + MODEL_ATTACKS


@dataclass(frozen=True)
class Trigger:
    """Pixel block stamped onto backdoored images.

    row/col of None anchor the block to the bottom-right corner.
    """
    height: int = 3
    width: int = 3
    row: Optional[int] = None
    col: Optional[int] = None
    value: float = 1.0

    def resolve(self, img_h: int, img_w: int):
        r = self.row if self.row is not None else img_h - self.height
        c = self.col if self.col is not None else img_w - self.width
        if r < 0 or c < 0 or r + self.height > img_h or c + self.width > img_w:
            raise ConfigurationError(
                f"trigger {self.height}x{self.width} at ({r},{c}) leaves the {img_h}x{img_w} image")
        return r, c


@dataclass(frozen=True)
class AttackSpec:
    """One attack kind plus its constants. Defaults follow the evaluated
    settings: 50% of local data poisoned, bit 10 flipped (counting from the
    sign bit as 0), noise amplification 1, uniform range [-1, 1], scaling
    factor 0.5."""

    kind: str
    poison_fraction: float = 0.5
    bit_index: int = 10
    noise_scale: float = 1.0
    uniform_range: tuple = (-1.0, 1.0)
    krum_factor: float = 0.5
    trigger: Trigger = field(default_factory=Trigger)
    target_label: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ALL_ATTACKS:
            raise ConfigurationError(f"unknown attack kind {self.kind!r}")
        if self.kind in DATA_ATTACKS and not 0 < self.poison_fraction <= 1:
            raise ConfigurationError(f"poison_fraction must be in (0, 1], got {self.poison_fraction}")
        if not self.uniform_range[0] < self.uniform_range[1]:
            raise ConfigurationError(f"uniform range must satisfy lo < hi, got {self.uniform_range}")
        if not 0 <= self.bit_index <= 31:
            raise ConfigurationError(f"bit_index must be in [0, 31], got {self.bit_index}")

    def with_seed(self, rng_seed: int) -> "AttackSpec":
        return replace(self, rng_seed=rng_seed)


# --------------------------------------------------------------------------
# Data poisoning
# --------------------------------------------------------------------------

def _poison_count(fraction: float, n: int) -> int:
    return int(round(fraction * n))

def label_flip(ds: LabeledDataset, fraction: float, rng_seed: int) -> LabeledDataset:
    """Give round(fraction*N) samples a uniformly random wrong label."""
    rng = np.random.default_rng(rng_seed)
    n = len(ds)
    k = _poison_count(fraction, n)
    labels = ds.labels.copy()
    chosen = rng.choice(n, size=k, replace=False)
    wrong = rng.integers(0, ds.class_count - 1, size=k)
    wrong += wrong >= labels[chosen]  # skip over the true label
    labels[chosen] = wrong
    return LabeledDataset(ds.images.copy(), labels, ds.class_count)


def backdoor_inject(ds: LabeledDataset, fraction: float, trigger: Trigger,
                    target_label: int, rng_seed: int) -> LabeledDataset:
    """Stamp the trigger block onto round(fraction*N) samples and point their
    labels at target_label. Untouched samples stay bitwise identical."""
    h, w = ds.images.shape[2], ds.images.shape[3]
    r, c = trigger.resolve(h, w)
    rng = np.random.default_rng(rng_seed)
    k = _poison_count(fraction, len(ds))
    chosen = rng.choice(len(ds), size=k, replace=False)
    images = ds.images.copy()
    labels = ds.labels.copy()
    images[chosen, :, r:r + trigger.height, c:c + trigger.width] = np.float32(trigger.value)
    labels[chosen] = target_label
    return LabeledDataset(images, labels, ds.class_count)


# --------------------------------------------------------------------------
# Model poisoning
# --------------------------------------------------------------------------

def sign_flip(p: ParamVector) -> ParamVector:
    """Negate every parameter."""
    return ParamVector(-p.values, p.arch)


def random_params(p: ParamVector, lo: float, hi: float, rng_seed: int) -> ParamVector:
    """Replace every parameter with an i.i.d. uniform draw on [lo, hi)."""
    if not lo < hi:
        raise ConfigurationError(f"need lo < hi, got [{lo}, {hi}]")
    rng = np.random.default_rng(rng_seed)
    return ParamVector(rng.uniform(lo, hi, size=len(p)).astype(np.float32), p.arch)


def bit_flip(p: ParamVector, bit_index: int) -> ParamVector:
    """XOR one bit of every parameter's IEEE-754 encoding.

    bit_index counts from the most significant bit: 0 is the sign, 1-8 the
    exponent, 9-31 the mantissa. Results may be NaN/Inf; downstream code
    must tolerate that.
    """
    if not 0 <= bit_index <= 31:
        raise ConfigurationError(f"bit_index must be in [0, 31], got {bit_index}")
    mask = np.uint32(1) << np.uint32(31 - bit_index)
    bits = p.values.view(np.uint32) ^ mask
    return ParamVector(bits.view(np.float32).copy(), p.arch)


def lie_attack(p: ParamVector, z: float, rng_seed: int) -> ParamVector:
    """Add z-scaled standard Gaussian noise to every parameter."""
    if z < 0:
        raise ConfigurationError(f"noise scale must be >= 0, got {z}")
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(len(p), dtype=np.float32)
    return ParamVector(p.values + np.float32(z) * noise, p.arch)


def krum_attack(p: ParamVector, factor: float) -> ParamVector:
    """Scale every parameter by a constant factor."""
    if not np.isfinite(factor):
        raise ConfigurationError(f"scaling factor must be finite, got {factor}")
    return ParamVector(p.values * np.float32(factor), p.arch)


# --------------------------------------------------------------------------
# Dispatch helpers
# --------------------------------------------------------------------------

def apply_data_attack(spec: AttackSpec, ds: LabeledDataset, rng_seed=None) -> LabeledDataset:
    seed = spec.rng_seed if rng_seed is None else rng_seed
    if spec.kind == "label_flip":
        return label_flip(ds, spec.poison_fraction, seed)
    if spec.kind == "backdoor":
        return backdoor_inject(ds, spec.poison_fraction, spec.trigger, spec.target_label, seed)
    raise ConfigurationError(f"{spec.kind!r} is not a data attack")


def apply_model_attack(spec: AttackSpec, p: ParamVector, rng_seed=None) -> ParamVector:
    seed = spec.rng_seed if rng_seed is None else rng_seed
    if spec.kind == "sign_flip":
        return sign_flip(p)
    if spec.kind == "random_params":
        return random_params(p, spec.uniform_range[0], spec.uniform_range[1], seed)
    if spec.kind == "bit_flip":
        return bit_flip(p, spec.bit_index)
    if spec.kind == "lie":
        return lie_attack(p, spec.noise_scale, seed)
    if spec.kind == "krum_scale":
        return krum_attack(p, spec.krum_factor)
    raise ConfigurationError(f"{spec.kind!r} is not a model attack")


def spread_attack_kinds(count: int, catalog, rng: np.random.Generator) -> list:
    """Assign attack kinds to `count` attackers.

    Fewer attackers than kinds: a random subset without repetition. At least
    as many: every kind appears once, the remainder drawn uniformly.
    """
    catalog = list(catalog)
    if count == 0 or not catalog:
        return []
    if count < len(catalog):
        picks = rng.choice(len(catalog), size=count, replace=False)
        kinds = [catalog[i] for i in picks]
    else:
        extra = rng.integers(0, len(catalog), size=count - len(catalog))
        kinds = list(catalog) + [catalog[i] for i in extra]
    order = rng.permutation(count)
    return [kinds[i] for i in order]
