"""Membership-inference-driven client filter.

Offline, the server trains shadow models on the shared public dataset to
imitate benign and attacked clients, picks one benign shadow as the
reference model, and summarizes every shadow by two features measured on
the public dataset: MSE (mean squared confidence deviation from the
reference) and TCD (mean absolute true-class confidence difference). A
linear SVM trained on those labeled features becomes the defense model.

Online, each uploaded client model is mapped to the same two features and
classified; only clients judged benign enter the round's average. If a
round yields no benign verdicts, the single smallest-MSE client survives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import seeding
from .attacks import DATA_ATTACKS, apply_data_attack, apply_model_attack, spread_attack_kinds
from .data import LabeledDataset, replicate
from .errors import ConfigurationError, DimensionError, FormatError, TrainingError
from .nn import ModelArch, ParamVector, arch_from_dict, arch_to_dict, forward, init_model, train_local

__all__ = [
    "LocalTrainConfig",
    "ShadowSet",
    "DefenseModel",
    "build_shadow_set",
    "extract_features",
    "shadow_features",
    "train_defense_svm",
    "classify_client",
    "score_round",
    "filter_round",
    "save_defense_checkpoint",
    "load_defense_checkpoint",
]

CHECKPOINT_VERSION = 1

BENIGN, MALICIOUS = 1, 0


@dataclass(frozen=True)
class LocalTrainConfig:
    """SGD settings shared by shadow training and client training."""
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.01


@dataclass
class ShadowSet:
    """Shadow models with identity labels (1 benign, 0 malicious), the kind
    of attack each malicious shadow ran, and the index of the benign shadow
    serving as reference model."""

    models: list
    labels: np.ndarray
    attack_kinds: list
    reference_index: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if BENIGN not in self.labels or MALICIOUS not in self.labels:
            raise ConfigurationError("shadow set needs at least one benign and one malicious model")
        if self.labels[self.reference_index] != BENIGN:
            raise ConfigurationError("reference model must be a benign shadow")

    @property
    def reference_model(self) -> ParamVector:
        return self.models[self.reference_index]


def build_shadow_set(pub_ds: LabeledDataset, k: int, arch: ModelArch, attack_catalog,
                     train_cfg: LocalTrainConfig, rng_seed: int) -> ShadowSet:
    """Train k shadow models on the public dataset.

    Half are benign (rounded up), trained straight on pub_ds from distinct
    seeds. The rest imitate attackers: data-poisoning kinds train on a
    poisoned copy of pub_ds, model-poisoning kinds corrupt a benignly
    trained shadow afterwards. Every cataloged kind appears at least once
    when the malicious count allows. The reference model is drawn uniformly
    from the benign half.
    """
    if k < 2:
        raise ConfigurationError(f"need at least 2 shadow models, got {k}")
    catalog = list(attack_catalog)
    if not catalog:
        raise ConfigurationError("attack catalog is empty")
    n_benign = (k + 1) // 2
    n_mal = k - n_benign
    kinds = spread_attack_kinds(n_mal, [s.kind for s in catalog], seeding.rng_for(rng_seed, "shadow-kinds"))
    by_kind = {s.kind: s for s in catalog}

    models, labels, attack_kinds = [], [], []
    for i in range(n_benign):
        start = init_model(arch, seeding.derive(rng_seed, "shadow-init", i))
        model = train_local(start, pub_ds, train_cfg.epochs, train_cfg.batch_size,
                            train_cfg.learning_rate, seeding.derive(rng_seed, "shadow-train", i))
        models.append(model)
        labels.append(BENIGN)
        attack_kinds.append(None)
    for j in range(n_mal):
        i = n_benign + j
        spec = by_kind[kinds[j]]
        start = init_model(arch, seeding.derive(rng_seed, "shadow-init", i))
        train_seed = seeding.derive(rng_seed, "shadow-train", i)
        attack_seed = seeding.derive(rng_seed, "shadow-attack", i)
        if spec.kind in DATA_ATTACKS:
            poisoned = apply_data_attack(spec, pub_ds, attack_seed)
            model = train_local(start, poisoned, train_cfg.epochs, train_cfg.batch_size,
                                train_cfg.learning_rate, train_seed)
        else:
            model = train_local(start, pub_ds, train_cfg.epochs, train_cfg.batch_size,
                                train_cfg.learning_rate, train_seed)
            model = apply_model_attack(spec, model, attack_seed)
        models.append(model)
        labels.append(MALICIOUS)
        attack_kinds.append(spec.kind)

    ref = int(seeding.rng_for(rng_seed, "reference").integers(n_benign))
    return ShadowSet(models, np.array(labels), attack_kinds, ref)


# --------------------------------------------------------------------------
# Features
# --------------------------------------------------------------------------

def extract_features(c_model: np.ndarray, c_ref: np.ndarray, labels) -> np.ndarray:
    """[MSE, TCD] between two confidence matrices.

    MSE = mean over samples and classes of the squared confidence gap;
    TCD = mean over samples of |true-class confidence difference|.
    """
    c_model = np.asarray(c_model, dtype=np.float64)
    c_ref = np.asarray(c_ref, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if c_model.shape != c_ref.shape or c_model.ndim != 2:
        raise DimensionError(f"confidence shapes differ: {c_model.shape} vs {c_ref.shape}")
    n, l = c_model.shape
    if len(labels) != n:
        raise DimensionError(f"{len(labels)} labels for {n} confidence rows")
    diff = c_model - c_ref
    mse = float(np.sum(diff * diff) / (n * l))
    rows = np.arange(n)
    tcd = float(np.mean(np.abs(c_model[rows, labels] - c_ref[rows, labels])))
    return np.array([mse, tcd])


def shadow_features(shadow_set: ShadowSet, pub_ds: LabeledDataset):
    """Feature matrix (k, 2) and identity labels for defense training."""
    c_ref = forward(shadow_set.reference_model, pub_ds.images)
    feats = np.stack([
        extract_features(forward(m, pub_ds.images), c_ref, pub_ds.labels)
        for m in shadow_set.models
    ])
    return feats, shadow_set.labels.copy()


# --------------------------------------------------------------------------
# Defense model (linear SVM, primal SGD on hinge loss)
# --------------------------------------------------------------------------

_LOG_FLOOR = 1e-12


def _log_features(features) -> np.ndarray:
    """Features are nonnegative and span orders of magnitude; compare them on
    a log scale (floored so an exact-zero feature stays finite)."""
    x = np.asarray(features, dtype=np.float64)
    return np.log(np.maximum(x, 0.0) + _LOG_FLOOR)


@dataclass
class DefenseModel:
    """Linear decision rule over log-scaled, normalized [MSE, TCD] features.

    Benign models differ from the reference by 1e-5-ish while gross attacks
    reach O(1); a plain affine rescaling of raw features collapses that
    spread to a sliver no linear boundary can thread, so normalization runs
    in log space. The stored scaling stays invertible.
    """

    w: np.ndarray
    b: float
    feature_mean: np.ndarray   # mean of log-features over the training set
    feature_scale: np.ndarray  # std of log-features over the training set
    lam: float
    eta: float
    epochs: int

    def decision_value(self, features) -> float:
        x = (_log_features(features) - self.feature_mean) / self.feature_scale
        return float(self.w @ x + self.b)

    def is_benign(self, features) -> bool:
        # a score of exactly 0 counts as malicious: rejecting costs one
        # round's contribution, accepting poisons the global model
        return self.decision_value(features) > 0.0


def train_defense_svm(features: np.ndarray, labels: np.ndarray, lam: float, eta: float,
                      epochs: int, rng_seed: int) -> DefenseModel:
    """Hinge-loss SGD over the labeled feature set.

    Features are log-scaled and normalized to zero mean and unit variance
    (constants kept for inference); identity labels map {0 -> -1, 1 -> +1}.
    Each epoch visits every sample once in an order shuffled by a seeded
    generator: margin violations update w and b, everything else only
    decays w. The decay factor (1 - eta*lam) is floored at 0 so extreme
    regularization collapses w instead of oscillating divergently.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) != len(labels):
        raise DimensionError(f"bad feature matrix {features.shape} for {len(labels)} labels")
    if len(np.unique(labels)) < 2:
        raise TrainingError("defense training set must contain both classes")
    if lam <= 0 or eta <= 0 or epochs < 1:
        raise ConfigurationError("need lam > 0, eta > 0, epochs >= 1")
    logx = _log_features(features)
    mean = logx.mean(axis=0)
    scale = logx.std(axis=0)
    scale[scale < 1e-12] = 1.0
    xs = (logx - mean) / scale
    ys = np.where(labels == BENIGN, 1.0, -1.0)
    w = np.zeros(features.shape[1])
    b = 0.0
    decay = max(0.0, 1.0 - eta * lam)
    rng = np.random.default_rng(rng_seed)
    for _ in range(epochs):
        for i in rng.permutation(len(xs)):
            if ys[i] * (w @ xs[i] + b) < 1.0:
                w = decay * w + eta * ys[i] * xs[i]
                b += eta * ys[i]
            else:
                w = decay * w
    return DefenseModel(w, b, mean, scale, lam, eta, epochs)


# --------------------------------------------------------------------------
# Online filtering
# --------------------------------------------------------------------------

def classify_client(client_model: ParamVector, pub_ds: LabeledDataset,
                    ref_model: ParamVector, def_model: DefenseModel):
    """(is_benign, [MSE, TCD]) for one uploaded model."""
    c_ref = forward(ref_model, pub_ds.images)
    feats = extract_features(forward(client_model, pub_ds.images), c_ref, pub_ds.labels)
    return def_model.is_benign(feats), feats


def score_round(client_models, pub_ds: LabeledDataset, ref_model: ParamVector,
                def_model: DefenseModel):
    """Per-client features (n, 2) and benign verdicts (n,) for one round."""
    c_ref = forward(ref_model, pub_ds.images)
    feats = np.stack([
        extract_features(forward(m, pub_ds.images), c_ref, pub_ds.labels)
        for m in client_models
    ])
    verdicts = np.array([def_model.is_benign(x) for x in feats])
    return feats, verdicts


def filter_round(client_models, pub_ds: LabeledDataset, ref_model: ParamVector,
                 def_model: DefenseModel) -> list:
    """Indices of clients allowed into this round's aggregation.

    All benign-classified clients are selected; an all-malicious verdict
    falls back to the single client with the smallest MSE (lowest index on
    ties), so the result is never empty.
    """
    feats, verdicts = score_round(client_models, pub_ds, ref_model, def_model)
    selected = [i for i, ok in enumerate(verdicts) if ok]
    if not selected:
        mse = np.where(np.isnan(feats[:, 0]), np.inf, feats[:, 0])
        selected = [int(np.argmin(mse))]
    return selected


# --------------------------------------------------------------------------
# Offline-artifact checkpoint
# --------------------------------------------------------------------------

def save_defense_checkpoint(path, *, arch: ModelArch, seed_ds: LabeledDataset, d: int,
                            features: np.ndarray, labels: np.ndarray,
                            ref_model: ParamVector, def_model: DefenseModel) -> None:
    """Persist everything the online phase needs as a versioned npz bundle."""
    np.savez(
        path,
        format_version=np.int64(CHECKPOINT_VERSION),
        arch_json=np.frombuffer(json.dumps(arch_to_dict(arch)).encode("utf-8"), dtype=np.uint8),
        seed_images=seed_ds.images,
        seed_labels=seed_ds.labels,
        class_count=np.int64(seed_ds.class_count),
        replication=np.int64(d),
        features=features,
        feature_labels=labels,
        ref_values=ref_model.values,
        svm_w=def_model.w,
        svm_b=np.float64(def_model.b),
        svm_feature_mean=def_model.feature_mean,
        svm_feature_scale=def_model.feature_scale,
        svm_lam=np.float64(def_model.lam),
        svm_eta=np.float64(def_model.eta),
        svm_epochs=np.int64(def_model.epochs),
    )


def load_defense_checkpoint(path):
    """Rebuild (arch, seed_ds, pub_ds, features, labels, ref_model, def_model)."""
    with np.load(path) as bundle:
        version = int(bundle["format_version"])
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        arch = arch_from_dict(json.loads(bytes(bundle["arch_json"]).decode("utf-8")))
        seed_ds = LabeledDataset(bundle["seed_images"], bundle["seed_labels"], int(bundle["class_count"]))
        d = int(bundle["replication"])
        features = bundle["features"]
        labels = bundle["feature_labels"]
        ref_model = ParamVector(bundle["ref_values"], arch)
        def_model = DefenseModel(
            w=bundle["svm_w"],
            b=float(bundle["svm_b"]),
            feature_mean=bundle["svm_feature_mean"],
            feature_scale=bundle["svm_feature_scale"],
            lam=float(bundle["svm_lam"]),
            eta=float(bundle["svm_eta"]),
            epochs=int(bundle["svm_epochs"]),
        )
    return arch, seed_ds, replicate(seed_ds, d), features, labels, ref_model, def_model
