"""Command-line entry points: prepare, train, evaluate, and diagnostics."""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys

import numpy as np

from . import config as config_mod
from .backbone import EmbeddingTable, Hyperparameters, forward, init_embeddings
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_from_mapping, load_config
from .dataset import InteractionDataset, kcore_filter, load_interactions, split_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    EvalError,
    NumericError,
    ParseError,
    ShapeError,
)
from .evaluation import evaluate
from .graph import build_adjacency
from .intents import assign_targets, generate_targets, kmeans
from .objectives import (
    bpr_loss,
    cocluster_distribution,
    ins_loss,
    mi_loss,
    total_loss,
    ucl_loss,
)
from .optim import finite_diff_check
from .theorem import verify_theorem
from .trainer import load_prepared, sample_batch, save_prepared, train

KNOWN_ERRORS = (
    CheckpointError,
    ConfigError,
    DataError,
    EvalError,
    NumericError,
    ParseError,
    ShapeError,
    FileNotFoundError,
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    defaults = {**TrainConfig().__dict__, **Hyperparameters().__dict__}
    defaults.pop("hp", None)
    for key in sorted(config_mod.FIELD_TYPES):
        parser.add_argument(
            "--" + key.replace("_", "-"),
            dest=key,
            default=None,
            metavar="V",
            help=f"(default: {defaults[key]!r})",
        )


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    return {
        key: getattr(args, key)
        for key in config_mod.FIELD_TYPES
        if getattr(args, key, None) is not None
    }


def _cmd_prepare(args: argparse.Namespace) -> int:
    _, idmap, data = load_interactions(args.data, args.format, args.rating_threshold)
    loaded = {
        "users": data.num_users,
        "items": data.num_items,
        "interactions": data.num_edges,
        "density": data.num_edges / (data.num_users * data.num_items),
    }
    if args.kcore_min > 0:
        data = kcore_filter(data, args.kcore_min)
    split = split_dataset(data, seed=args.split_seed)
    save_prepared(split, args.out)
    print(
        json.dumps(
            {
                "loaded": loaded,
                "filtered": {
                    "users": data.num_users,
                    "items": data.num_items,
                    "interactions": data.num_edges,
                },
                "split": {
                    "train": split.train.num_edges,
                    "val": int(split.val.shape[0]),
                    "test": int(split.test.shape[0]),
                    "seed": split.seed,
                },
                "out": args.out,
            }
        )
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    overrides = _collect_overrides(args)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = config_from_mapping(overrides)
    ckpt, logs, test_report = train(cfg)
    print(
        json.dumps(
            {
                "epochs_run": len(logs),
                "best_epoch": ckpt.best_epoch,
                "best_val_metric": ckpt.best_metric,
                "test": test_report.to_dict(),
                "checkpoint": cfg.checkpoint_path or None,
                "log": cfg.log_path or None,
            }
        )
    )
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    split = load_prepared(args.prepared)
    ckpt = load_checkpoint(args.checkpoint)
    if (ckpt.num_users, ckpt.num_items) != (split.train.num_users, split.train.num_items):
        raise ConfigError(
            f"checkpoint dims ({ckpt.num_users}, {ckpt.num_items}) do not match "
            f"split ({split.train.num_users}, {split.train.num_items})"
        )
    adj = build_adjacency(split.train)
    emb = EmbeddingTable(ckpt.table.copy(), ckpt.num_users, ckpt.num_items)
    trace = forward(emb, adj, False, 0.0, ckpt.L)
    ns = tuple(int(n) for n in args.ns.split(","))
    report = evaluate(trace, split, args.phase, ns)
    print(json.dumps({"phase": args.phase, **report.to_dict()}))
    return 0


def _cmd_gen_targets(args: argparse.Namespace) -> int:
    user_targets = generate_targets(
        args.user_targets, args.dim, args.tau, args.steps, args.lr, args.seed
    )
    item_targets = generate_targets(
        args.item_targets, args.dim, args.tau, args.steps, args.lr, args.seed + 1
    )
    ckpt = Checkpoint(
        num_users=0,
        num_items=0,
        d=args.dim,
        L=0,
        table=np.zeros((0, args.dim)),
        user_targets=user_targets.vectors,
        item_targets=item_targets.vectors,
        best_epoch=0,
        best_metric=0.0,
        seed=args.seed,
    )
    save_checkpoint(ckpt, args.out)
    print(
        json.dumps(
            {
                "user_targets": args.user_targets,
                "item_targets": args.item_targets,
                "dim": args.dim,
                "out": args.out,
            }
        )
    )
    return 0


def gradient_check_report(
    seed: int = 0,
    num_users: int = 8,
    num_items: int = 7,
    d: int = 6,
    intents: int = 3,
    h: float = 1e-5,
) -> dict[str, float]:
    """Finite-difference errors of every loss term on a small random instance."""
    rng = np.random.default_rng(seed)
    edges = np.unique(
        np.column_stack(
            (rng.integers(0, num_users, 3 * num_users), rng.integers(0, num_items, 3 * num_users))
        ),
        axis=0,
    )
    data = InteractionDataset(num_users, num_items, edges)
    adj = build_adjacency(data)
    emb = init_embeddings(num_users, num_items, d, seed)
    hp = Hyperparameters(
        d=d, num_layers=2, noise_rate=0.0, num_user_intents=intents, num_item_intents=intents,
        contrast_layer=1, batch_size=edges.shape[0], epochs=1, warmup_epochs=0,
    )
    batch = sample_batch(rng, data, min(edges.shape[0], 12))
    clusters_u = kmeans(emb.user_block(), intents, seed=seed)
    clusters_i = kmeans(emb.item_block(), intents, seed=seed + 1)
    targets_u = generate_targets(intents, d, seed=seed, steps=200)
    targets_i = generate_targets(intents, d, seed=seed + 1, steps=200)
    asg_u = assign_targets(clusters_u, targets_u)
    asg_i = assign_targets(clusters_i, targets_i)
    pairs = np.column_stack((batch.users, batch.pos_items))

    def make_trace(e: EmbeddingTable):
        return forward(e, adj, False, 0.0, hp.num_layers)

    report: dict[str, float] = {}
    checks = {
        "rec": lambda e: bpr_loss(make_trace(e), batch),
        "ucl_user": lambda e: ucl_loss(e, clusters_u.labels, asg_u, targets_u, hp.tau, "user"),
        "ucl_item": lambda e: ucl_loss(e, clusters_i.labels, asg_i, targets_i, hp.tau, "item"),
        "mi": lambda e: mi_loss(cocluster_distribution(e, clusters_u, clusters_i, pairs)),
        "ins_user": lambda e: ins_loss(make_trace(e), batch.unique_users, 1, hp.tau, "user"),
        "ins_item": lambda e: ins_loss(make_trace(e), batch.unique_pos_items, 1, hp.tau, "item"),
    }
    for name, fn in checks.items():
        _, buf = fn(emb)
        report[name] = finite_diff_check(lambda e, fn=fn: fn(e)[0], emb, buf, h=h)

    def combined(e: EmbeddingTable):
        trace = make_trace(e)
        parts = {
            "rec": bpr_loss(trace, batch),
            "ucl_user": ucl_loss(e, clusters_u.labels, asg_u, targets_u, hp.tau, "user"),
            "ucl_item": ucl_loss(e, clusters_i.labels, asg_i, targets_i, hp.tau, "item"),
            "mi": mi_loss(cocluster_distribution(e, clusters_u, clusters_i, pairs)),
            "ins_user": ins_loss(trace, batch.unique_users, 1, hp.tau, "user"),
            "ins_item": ins_loss(trace, batch.unique_pos_items, 1, hp.tau, "item"),
        }
        return total_loss(parts, hp, e, batch)

    _, buf = combined(emb)
    report["total"] = finite_diff_check(lambda e: combined(e)[0].total, emb, buf, h=h)
    return report


def _cmd_grad_check(args: argparse.Namespace) -> int:
    report = gradient_check_report(
        seed=args.seed, num_users=args.users, num_items=args.items,
        d=args.dim, intents=args.intents,
    )
    print(json.dumps({k: float(v) for k, v in report.items()}))
    return 0 if max(report.values()) <= args.tolerance else 1


def _cmd_verify_theorem(args: argparse.Namespace) -> int:
    report = verify_theorem(
        args.trials, args.max_users, args.max_items, args.max_clusters, args.seed
    )
    print(json.dumps(report.to_dict()))
    return 0 if report.passed else 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = dict(config_mod.read_config_file(args.config)) if args.config else {}
    base.update(_collect_overrides(args))
    axes: list[tuple[str, list[str]]] = []
    for axis in args.vary:
        if "=" not in axis:
            raise ConfigError(f"--vary expects key=v1,v2,..., got {axis!r}")
        key, _, values = axis.partition("=")
        key = key.strip()
        if key not in config_mod.FIELD_TYPES:
            raise ConfigError(f"unknown configuration key {key!r}")
        axes.append((key, [v.strip() for v in values.split(",") if v.strip()]))
    if not axes:
        raise ConfigError("sweep requires at least one --vary axis")
    os.makedirs(args.out_dir, exist_ok=True)
    summary = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        cell = dict(zip((k for k, _ in axes), combo))
        slug = "_".join(f"{k}-{v}" for k, v in cell.items())
        mapping = dict(base)
        mapping.update(cell)
        mapping["log_path"] = os.path.join(args.out_dir, f"{slug}.jsonl")
        mapping["checkpoint_path"] = ""
        cfg = config_from_mapping(mapping)
        ckpt, logs, test_report = train(cfg)
        summary.append(
            {
                "cell": cell,
                "epochs_run": len(logs),
                "best_epoch": ckpt.best_epoch,
                "best_val_metric": ckpt.best_metric,
                "test": test_report.to_dict(),
                "log": mapping["log_path"],
            }
        )
    with open(os.path.join(args.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentcf",
        description="Graph collaborative filtering with intent clustering and co-cluster MI.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="filter, split, and serialize a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="tsv", choices=("tsv", "movielens"))
    p.add_argument("--rating-threshold", type=float, default=0.0)
    p.add_argument("--kcore-min", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train", help="train a model from a config file and/or flags")
    p.add_argument("--config", default=None, help="key = value configuration file")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a prepared split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prepared", required=True)
    p.add_argument("--phase", default="test", choices=("val", "test"))
    p.add_argument("--ns", default="10,20,50")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("gen-targets", help="precompute uniformity targets")
    p.add_argument("--user-targets", type=int, required=True)
    p.add_argument("--item-targets", type=int, required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_targets)

    p = sub.add_parser("grad-check", help="finite-difference check of every loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=8)
    p.add_argument("--items", type=int, default=7)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--intents", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=_cmd_grad_check)

    p = sub.add_parser("verify-theorem", help="fuzz the co-cluster MI bound")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--max-users", type=int, default=8)
    p.add_argument("--max-items", type=int, default=8)
    p.add_argument("--max-clusters", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify_theorem)

    p = sub.add_parser("sweep", help="grid sweep; one log file per cell")
    p.add_argument("--config", default=None)
    p.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2,...")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KNOWN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
