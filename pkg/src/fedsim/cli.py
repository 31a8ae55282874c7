"""Command-line front end.

    fedsim run <config> [--output-dir DIR] [--methods a,b,...]
    fedsim describe <config>

`run` executes every (method, seed) pair from the config and writes
rounds.csv, clients.csv, summary.csv and (optionally) curves.svg to the
output directory. `describe` prints the resolved setup, per-client
sample counts and model size without training anything.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import KNOWN_METHODS, ExperimentConfig, load_config
from .data import partition, split_train_test
from .errors import ConfigError, DataFormatError
from .federation import DEFAULT_HIDDEN_DIMS, run_experiment
from .nn import init_model, n_extractor_params, n_params
from .reporting import RunResult, write_all
from . import seeding

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        for m in methods:
            if m not in KNOWN_METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {KNOWN_METHODS}")
        if not methods:
            raise ConfigError("--methods override selected no methods")
        cfg.methods = methods
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    dataset = cfg.dataset.load()

    runs = []
    for method in cfg.methods:
        for seed in cfg.seeds:
            round_cfg = dataclasses.replace(cfg.rounds, master_seed=seed)
            metrics = run_experiment(dataset, round_cfg, cfg.partition, method)
            runs.append(RunResult(method, seed, metrics))

    written = []
    try:
        written = write_all(runs, cfg.output_dir, plot=cfg.plot)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        for leftover in ("rounds.csv", "clients.csv", "summary.csv", "curves.svg"):
            (cfg.output_dir / leftover).unlink(missing_ok=True)
        raise
    print(f"completed {len(runs)} runs; wrote {len(written)} files to {cfg.output_dir}")
    return EXIT_OK


def cmd_describe(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    dataset = cfg.dataset.load()
    model = init_model([dataset.dim, *DEFAULT_HIDDEN_DIMS], dataset.n_classes, seed=0)
    total = n_params(model)
    extractor = n_extractor_params(model)

    print(f"config: {args.config}")
    print(f"dataset: kind={cfg.dataset.kind} n={len(dataset)} dim={dataset.dim} "
          f"classes={dataset.n_classes}")
    dims = " -> ".join(str(d) for d in (dataset.dim, *DEFAULT_HIDDEN_DIMS, dataset.n_classes))
    print(f"model: {dims}")
    print(f"total_params: {total}")
    print(f"extractor_params: {extractor}")
    print(f"extractor_fraction: {extractor / total:.6f}")
    print(f"partition: mode={cfg.partition.mode} n_clients={cfg.partition.n_clients} "
          f"seed={cfg.partition.seed}")
    parts = partition(dataset, cfg.partition)
    for cid, client_ds in enumerate(parts):
        split = split_train_test(
            client_ds,
            client_id=cid,
            seed=seeding.seed_for(cfg.partition.seed, cid, seeding.PHASE_SPLIT),
        )
        labels = sorted(set(client_ds.labels.tolist()))
        print(f"client {cid}: {len(client_ds)} samples ({len(split.train)} train / "
              f"{len(split.test)} test), classes {labels}")
    print(f"client_total: {sum(len(p) for p in parts)}")
    print(f"methods: {', '.join(cfg.methods)}")
    print(f"seeds: {', '.join(str(s) for s in cfg.seeds)}")
    print(f"rounds: {cfg.rounds.total_rounds} (join_ratio={cfg.rounds.join_ratio}, "
          f"local_epochs={cfg.rounds.local_epochs}, batch_size={cfg.rounds.batch_size}, "
          f"local_lr={cfg.rounds.local_lr}, weight_lr={cfg.rounds.weight_lr})")
    print(f"output_dir: {cfg.output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run every (method, seed) pair and write reports")
    run_p.add_argument("config", help="experiment config file")
    run_p.add_argument("--output-dir", help="override the config's output directory")
    run_p.add_argument("--methods", help="comma-separated override of the method list")
    run_p.set_defaults(func=cmd_run)

    desc_p = sub.add_parser("describe", help="print the resolved setup without running")
    desc_p.add_argument("config", help="experiment config file")
    desc_p.add_argument("--output-dir", help="override the config's output directory")
    desc_p.add_argument("--methods", help="comma-separated override of the method list")
    desc_p.set_defaults(func=cmd_describe)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
