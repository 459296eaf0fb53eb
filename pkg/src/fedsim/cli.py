"""Command-line entry points.

    fedsim offline --config cfg.yaml --out artifacts/   # persist defense artifacts
    fedsim run     --config cfg.yaml --out runs/        # one experiment -> CSV
    fedsim sweep   --config cfg.yaml --byz-fraction 0.1 --byz-fraction 0.5 ...

Common flags (--seed, --aggregator, --byz-fraction, --alpha) override the
corresponding config fields.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import fedguard, sim
from .config import AGGREGATORS, ExperimentConfig, load_config
from .errors import FedsimError

DEFAULT_SWEEP = (0.1, 0.3, 0.5, 0.7, 0.9)


def _add_common(parser: argparse.ArgumentParser, multi_fraction: bool):
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--aggregator", choices=AGGREGATORS, default=None)
    if multi_fraction:
        parser.add_argument("--byz-fraction", type=float, action="append", default=None,
                            help="grid point; repeat the flag for more (default "
                                 + ", ".join(str(v) for v in DEFAULT_SWEEP) + ")")
    else:
        parser.add_argument("--byz-fraction", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None, help="Dirichlet concentration")


def _configure(args, byz_fraction=None) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.aggregator is not None:
        cfg.aggregator = args.aggregator
    if byz_fraction is not None:
        cfg.attacks.byz_fraction = byz_fraction
    if args.alpha is not None:
        cfg.partition.alpha = args.alpha
    return cfg.validate()


def _cmd_offline(args) -> int:
    cfg = _configure(args, byz_fraction=args.byz_fraction)
    env = sim.build_environment(cfg)
    shadows, features, labels, def_model = sim.run_offline_phase(cfg, env)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "defense_checkpoint.npz")
    fedguard.save_defense_checkpoint(
        path, arch=cfg.arch(env.pub_ds.class_count), seed_ds=env.val_ds,
        d=cfg.defense.replication, features=features, labels=labels,
        ref_model=shadows.reference_model, def_model=def_model)
    benign = int((labels == fedguard.BENIGN).sum())
    print(f"defense artifacts -> {path}")
    print(f"shadow models: {len(labels)} ({benign} benign, {len(labels) - benign} malicious)")
    print(f"svm: w={def_model.w.round(4).tolist()} b={def_model.b:.4f}")
    return 0


def _cmd_run(args) -> int:
    cfg = _configure(args, byz_fraction=args.byz_fraction)
    report = sim.run_experiment(cfg)
    print(f"rounds: {len(report.records)}  aggregator: {cfg.aggregator}")
    print(f"final accuracy: {report.final_accuracy:.4f}")
    print(f"AER: {report.aer:.4f}")
    print(f"csv: {report.csv_path}")
    return 0


def _cmd_sweep(args) -> int:
    fractions = args.byz_fraction if args.byz_fraction else list(DEFAULT_SWEEP)
    for fraction in fractions:
        cfg = _configure(args, byz_fraction=fraction)
        report = sim.run_experiment(cfg)
        print(f"byz={fraction:g}  final_acc={report.final_accuracy:.4f}  "
              f"aer={report.aer:.4f}  csv={report.csv_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, multi in (("offline", _cmd_offline, False),
                            ("run", _cmd_run, False),
                            ("sweep", _cmd_sweep, True)):
        p = sub.add_parser(name)
        _add_common(p, multi_fraction=multi)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FedsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
