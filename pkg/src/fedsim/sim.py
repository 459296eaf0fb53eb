"""Experiment orchestration: role assignment, the round loop, metrics, CSV.

One experiment = one config + one master seed. All randomness (dataset
synthesis, partitioning, role assignment, per-client training, per-round
attack draws) flows through named seed derivations, so adding clients or
rounds never disturbs anything else and re-runs are bit-identical. Client
uploads depend only on data and seeds, never on the aggregator, so runs
that differ only in the aggregation rule see identical local models.
"""

from __future__ import annotations

import csv
import datetime
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import aggregation, fedguard, seeding
from .attacks import ALL_ATTACKS, DATA_ATTACKS, AttackSpec, apply_data_attack, apply_model_attack, spread_attack_kinds
from .config import ExperimentConfig
from .data import (LabeledDataset, PartitionConfig, concat, load_idx, partition,
                   replicate, sample_seed_indices, synth_dataset)
from .errors import ConfigurationError
from .nn import ParamVector, evaluate, init_model, train_local

__all__ = [
    "RoundRecord",
    "ExperimentReport",
    "RoundEnv",
    "assign_roles",
    "run_round",
    "compute_aer",
    "run_experiment",
    "build_environment",
    "run_offline_phase",
    "CSV_COLUMNS",
]

# aggregators that pick a subset of clients; for the rest every byzantine
# update reaches the aggregate, so N_m is defined as N_b
SELECTING_AGGREGATORS = ("bulyan", "lfr", "fltrust", "fedguard")

CSV_COLUMNS = (
    ["round", "aggregator", "byz_fraction", "alpha", "accuracy", "n_b", "n_m", "selected_count"]
    + [f"mistaken_{kind}" for kind in ALL_ATTACKS]
    + ["aer"]
)

log = logging.getLogger(__name__)


@dataclass
class RoundRecord:
    round_index: int
    selected: tuple
    n_b: int
    n_m: int
    mistaken_by_attack: dict
    accuracy: float


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    aer: float
    final_accuracy: float
    csv_path: Optional[str] = None
    roles: list = field(default_factory=list)


def assign_roles(n: int, byz_fraction: float, attack_catalog, rng_seed: int) -> list:
    """Per-client role list: None for benign, an AttackSpec for byzantine.

    round(byz_fraction * n) clients turn byzantine (a seeded random subset).
    With fewer attackers than cataloged kinds, kinds are drawn without
    repetition; otherwise every kind appears at least once and the surplus
    is drawn uniformly. Fixed for the whole experiment.
    """
    if n < 1:
        raise ConfigurationError("need at least one client")
    catalog = list(attack_catalog)
    byz_count = int(round(byz_fraction * n))
    rng = np.random.default_rng(rng_seed)
    byz_clients = sorted(rng.choice(n, size=byz_count, replace=False).tolist())
    kinds = spread_attack_kinds(byz_count, [s.kind for s in catalog], rng)
    by_kind = {s.kind: s for s in catalog}
    roles: list = [None] * n
    for client, kind in zip(byz_clients, kinds):
        roles[client] = by_kind[kind]
    return roles


@dataclass
class RoundEnv:
    """Everything a round needs besides the global model."""

    config: ExperimentConfig
    roles: list
    client_datasets: list
    pub_ds: LabeledDataset
    test_ds: LabeledDataset
    val_ds: LabeledDataset   # server-side clean data for LFR ranking
    root_ds: LabeledDataset  # server-side clean data for FLTrust
    ref_model: Optional[ParamVector] = None
    def_model: Optional[fedguard.DefenseModel] = None

    @property
    def f_estimate(self) -> int:
        if self.config.f_estimate >= 0:
            return self.config.f_estimate
        return sum(1 for r in self.roles if r is not None)


def _client_upload(env: RoundEnv, global_model: ParamVector, client: int,
                   round_index: int) -> ParamVector:
    cfg = env.config
    spec: Optional[AttackSpec] = env.roles[client]
    private = env.client_datasets[client]
    attack_seed = seeding.derive(cfg.seed, "round", round_index, "attack", client)
    if spec is not None and spec.kind in DATA_ATTACKS:
        private = apply_data_attack(spec, private, attack_seed)
    local = concat([env.pub_ds, private])
    trained = train_local(global_model, local, cfg.training.local_epochs,
                          cfg.training.batch_size, cfg.training.learning_rate,
                          seeding.derive(cfg.seed, "round", round_index, "client", client))
    if spec is not None and spec.kind not in DATA_ATTACKS:
        trained = apply_model_attack(spec, trained, attack_seed)
    return trained


def run_round(env: RoundEnv, global_model: ParamVector, round_index: int):
    """One communication round: local training, attacks, aggregation.

    Returns (new global model, RoundRecord). For non-selecting aggregators
    (fedavg, median) the record counts every byzantine client as mistakenly
    selected; for selecting rules it counts byzantine clients in the
    selected / positively-weighted set.
    """
    cfg = env.config
    n = len(env.roles)
    uploads = [_client_upload(env, global_model, i, round_index) for i in range(n)]
    for i, upload in enumerate(uploads):
        # attacks may legitimately produce NaN/Inf; note it, keep the update
        if not np.all(np.isfinite(upload.values)):
            log.warning("round %d: client %d uploaded non-finite parameters", round_index, i)

    name = cfg.aggregator
    if name == "fedavg":
        new_model, selected = aggregation.fedavg(uploads), list(range(n))
    elif name == "median":
        new_model, selected = aggregation.coordinate_median(uploads), list(range(n))
    elif name == "bulyan":
        new_model, selected = aggregation.bulyan_detail(uploads, env.f_estimate)
    elif name == "lfr":
        new_model, selected = aggregation.lfr_detail(uploads, global_model, env.val_ds, env.f_estimate)
    elif name == "fltrust":
        server_update = train_local(global_model, env.root_ds, cfg.training.local_epochs,
                                    cfg.training.batch_size, cfg.training.learning_rate,
                                    seeding.derive(cfg.seed, "round", round_index, "server"))
        new_model, selected = aggregation.fltrust_detail(uploads, server_update, global_model)
    elif name == "fedguard":
        selected = fedguard.filter_round(uploads, env.pub_ds, env.ref_model, env.def_model)
        new_model = aggregation.fedavg([uploads[i] for i in selected])
    else:
        raise ConfigurationError(f"unknown aggregator {name!r}")

    byz = {i for i, r in enumerate(env.roles) if r is not None}
    if name in SELECTING_AGGREGATORS:
        mistaken = [i for i in selected if i in byz]
    else:
        mistaken = sorted(byz)
    counts = {kind: 0 for kind in ALL_ATTACKS}
    for i in mistaken:
        counts[env.roles[i].kind] += 1
    record = RoundRecord(
        round_index=round_index,
        selected=tuple(selected),
        n_b=len(byz),
        n_m=len(mistaken),
        mistaken_by_attack=counts,
        accuracy=evaluate(new_model, env.test_ds),
    )
    return new_model, record


def compute_aer(records) -> float:
    """Mean over rounds of (mistakenly selected byzantine) / (byzantine).

    Rounds without byzantine participants are excluded; an all-benign
    experiment reports 0.
    """
    ratios = [r.n_m / r.n_b for r in records if r.n_b >= 1]
    return float(np.mean(ratios)) if ratios else 0.0


# --------------------------------------------------------------------------
# Experiment assembly
# --------------------------------------------------------------------------

def _limit(ds: LabeledDataset, cap: int, rng_seed: int) -> LabeledDataset:
    if cap <= 0 or cap >= len(ds):
        return ds
    rng = np.random.default_rng(rng_seed)
    return ds.subset(np.sort(rng.choice(len(ds), size=cap, replace=False)))


def _load_datasets(cfg: ExperimentConfig):
    d = cfg.dataset
    if d.kind == "synthetic":
        dims = (1, d.height, d.width)
        train = synth_dataset(d.classes, d.per_class_train, dims,
                              seeding.derive(cfg.seed, "synth-train"), d.noise, d.blob_sigma)
        test = synth_dataset(d.classes, d.per_class_test, dims,
                             seeding.derive(cfg.seed, "synth-test"), d.noise, d.blob_sigma)
        return train, test
    train = _limit(load_idx(d.train_images, d.train_labels), d.train_limit,
                   seeding.derive(cfg.seed, "train-limit"))
    test = _limit(load_idx(d.test_images, d.test_labels), d.test_limit,
                  seeding.derive(cfg.seed, "test-limit"))
    return train, test


def build_environment(cfg: ExperimentConfig) -> RoundEnv:
    """Materialize datasets, partitions, and roles for one experiment.

    The seed dataset is drawn stratified from the training pool and removed
    from it before partitioning, so no private sample duplicates the shared
    public data. The server's clean data for LFR and FLTrust is that same
    seed dataset (matching root-dataset sizes across methods).
    """
    train, test = _load_datasets(cfg)
    seed_idx = sample_seed_indices(train, cfg.defense.seed_fraction,
                                   seeding.derive(cfg.seed, "seed-sample"))
    seed_ds = train.subset(seed_idx)
    rest = train.subset(np.setdiff1d(np.arange(len(train)), seed_idx))
    pub_ds = replicate(seed_ds, cfg.defense.replication)
    parts = partition(rest, PartitionConfig(
        mode=cfg.partition.mode, client_count=cfg.partition.clients,
        alpha=cfg.partition.alpha, rng_seed=seeding.derive(cfg.seed, "partition")))
    roles = assign_roles(cfg.partition.clients, cfg.attacks.byz_fraction,
                         cfg.attack_specs(), seeding.derive(cfg.seed, "roles"))
    return RoundEnv(config=cfg, roles=roles, client_datasets=parts, pub_ds=pub_ds,
                    test_ds=test, val_ds=seed_ds, root_ds=seed_ds)


def run_offline_phase(cfg: ExperimentConfig, env: RoundEnv):
    """Shadow models -> features -> defense SVM. Returns the artifacts."""
    arch = cfg.arch(env.pub_ds.class_count)
    shadow_cfg = fedguard.LocalTrainConfig(
        epochs=cfg.defense.shadow_epochs,
        batch_size=cfg.training.batch_size,
        learning_rate=cfg.training.learning_rate,
    )
    shadows = fedguard.build_shadow_set(env.pub_ds, cfg.defense.shadow_count, arch,
                                        cfg.attack_specs(), shadow_cfg,
                                        seeding.derive(cfg.seed, "offline"))
    features, labels = fedguard.shadow_features(shadows, env.pub_ds)
    def_model = fedguard.train_defense_svm(features, labels, cfg.defense.svm_lambda,
                                           cfg.defense.svm_eta, cfg.defense.svm_epochs,
                                           seeding.derive(cfg.seed, "svm"))
    return shadows, features, labels, def_model


def _csv_row(cfg: ExperimentConfig, record: RoundRecord, aer="") -> list:
    return ([record.round_index, cfg.aggregator, cfg.attacks.byz_fraction,
             cfg.partition.alpha, f"{record.accuracy:.6f}", record.n_b, record.n_m,
             len(record.selected)]
            + [record.mistaken_by_attack.get(kind, 0) for kind in ALL_ATTACKS]
            + [aer])


def run_experiment(cfg: ExperimentConfig, csv_path: Optional[str] = None) -> ExperimentReport:
    """Offline phase (for fedguard), then the full round loop.

    Writes one CSV row per round (flushed as it goes) plus a summary row
    with round = -1 carrying totals and the AER.
    """
    cfg.validate()
    env = build_environment(cfg)
    if cfg.aggregator == "fedguard":
        shadows, _features, _labels, def_model = run_offline_phase(cfg, env)
        env.ref_model = shadows.reference_model
        env.def_model = def_model

    arch = cfg.arch(env.pub_ds.class_count)
    model = init_model(arch, seeding.derive(cfg.seed, "global-init"))

    if csv_path is None:
        os.makedirs(cfg.out_dir, exist_ok=True)
        tag = f"{cfg.aggregator}_byz{cfg.attacks.byz_fraction:g}_alpha{cfg.partition.alpha:g}"
        csv_path = os.path.join(cfg.out_dir, f"{tag}.csv")
    else:
        parent = os.path.dirname(csv_path)
        if parent:
            os.makedirs(parent, exist_ok=True)

    records = []
    try:
        fh = open(csv_path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {csv_path}: {exc}") from exc
    with fh:
        fh.write(f"# created={datetime.datetime.now().isoformat()}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in range(1, cfg.training.rounds + 1):
            model, record = run_round(env, model, r)
            records.append(record)
            writer.writerow(_csv_row(cfg, record))
            fh.flush()
        aer = compute_aer(records)
        totals = {kind: sum(rec.mistaken_by_attack.get(kind, 0) for rec in records)
                  for kind in ALL_ATTACKS}
        summary = RoundRecord(
            round_index=-1,
            selected=tuple(),
            n_b=sum(rec.n_b for rec in records),
            n_m=sum(rec.n_m for rec in records),
            mistaken_by_attack=totals,
            accuracy=records[-1].accuracy,
        )
        row = _csv_row(cfg, summary, aer=f"{aer:.6f}")
        row[7] = sum(len(rec.selected) for rec in records)  # selected_count total
        writer.writerow(row)
    return ExperimentReport(config=cfg, records=records, aer=aer,
                            final_accuracy=records[-1].accuracy, csv_path=csv_path,
                            roles=env.roles)
