"""Training orchestration: warm-up, per-epoch clustering, batched updates.

Each run generates the target sets once, warms up on the ranking and
instance-contrast objectives, then re-clusters the base embeddings at the
start of every full epoch and trains the joint objective.  Validation
runs after every epoch on a noise-free forward; the best state by
validation Recall@20 is checkpointed and finally evaluated on test.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .backbone import EmbeddingTable, forward, init_embeddings
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .dataset import (
    DatasetSplit,
    InteractionDataset,
    kcore_filter,
    load_interactions,
    split_dataset,
)
from .errors import ConfigError, DataError
from .evaluation import MetricReport, evaluate
from .graph import build_adjacency
from .intents import assign_targets, generate_targets, kmeans
from .objectives import (
    Batch,
    LossBreakdown,
    bpr_loss,
    cocluster_distribution,
    ins_loss,
    mi_loss,
    total_loss,
    ucl_loss,
)
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)

NEGATIVE_SAMPLING_CAP = 100


@dataclass
class EpochLog:
    """One record per epoch: mode, mean losses, validation metrics."""

    epoch: int
    mode: str
    loss: LossBreakdown
    val: MetricReport
    wall_seconds: float
    sim_user: float | None
    sim_item: float | None

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {
            "epoch": self.epoch,
            "mode": self.mode,
            "loss": self.loss.to_dict(),
            "val": self.val.to_dict(),
            "assignment_similarity": {"user": self.sim_user, "item": self.sim_item},
        }
        if include_timing:
            out["wall_seconds"] = self.wall_seconds
        return out


def save_prepared(split: DatasetSplit, path: str) -> None:
    """Serialize a split to .npz for reuse by train/evaluate."""
    np.savez(
        path,
        num_users=split.train.num_users,
        num_items=split.train.num_items,
        train_edges=split.train.edges,
        val_edges=split.val,
        test_edges=split.test,
        seed=split.seed,
    )


def load_prepared(path: str) -> DatasetSplit:
    with np.load(path) as data:
        train = InteractionDataset(
            int(data["num_users"]), int(data["num_items"]), data["train_edges"]
        )
        return DatasetSplit(
            train=train,
            val=data["val_edges"].astype(np.int64).reshape(-1, 2),
            test=data["test_edges"].astype(np.int64).reshape(-1, 2),
            seed=int(data["seed"]),
        )


def prepare_split(config: TrainConfig) -> DatasetSplit:
    """Load, filter, and split the configured dataset."""
    if config.data_format == "prepared":
        return load_prepared(config.data_path)
    _, _, data = load_interactions(config.data_path, config.data_format, config.rating_threshold)
    if config.kcore_min > 0:
        data = kcore_filter(data, config.kcore_min)
    return split_dataset(data, seed=config.split_seed)


def _sample_negatives(
    rng: np.random.Generator,
    users: np.ndarray,
    positive_sets: list[set[int]],
    num_items: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform negatives avoiding each user's positives; capped resampling.

    Returns (negatives, ok_mask); triples still colliding after the cap
    are flagged for skipping.
    """
    neg = rng.integers(0, num_items, size=users.size, dtype=np.int64)
    pending = np.array(
        [int(n) in positive_sets[int(u)] for u, n in zip(users, neg)], dtype=bool
    )
    tries = 1
    while pending.any() and tries < NEGATIVE_SAMPLING_CAP:
        idx = np.flatnonzero(pending)
        neg[idx] = rng.integers(0, num_items, size=idx.size, dtype=np.int64)
        pending[idx] = [int(neg[k]) in positive_sets[int(users[k])] for k in idx]
        tries += 1
    if pending.any():
        logger.warning("skipped %d triples: no admissible negative found", int(pending.sum()))
    return neg, ~pending


def sample_batch(rng: np.random.Generator, train: InteractionDataset, size: int) -> Batch:
    """Uniformly sampled (user, positive, negative) triples from train edges."""
    if size < 1:
        raise ConfigError("batch size must be >= 1")
    if train.num_edges == 0:
        raise DataError("cannot sample from an empty dataset")
    picks = rng.integers(0, train.num_edges, size=size)
    users = train.edges[picks, 0]
    pos = train.edges[picks, 1]
    neg, ok = _sample_negatives(rng, users, train.positive_sets, train.num_items)
    return Batch(users[ok], pos[ok], neg[ok])


def epoch_batches(
    rng: np.random.Generator, train: InteractionDataset, batch_size: int
) -> list[Batch]:
    """One shuffled pass over all train edges with fresh negatives."""
    perm = rng.permutation(train.num_edges)
    users = train.edges[perm, 0]
    pos = train.edges[perm, 1]
    neg, ok = _sample_negatives(rng, users, train.positive_sets, train.num_items)
    users, pos, neg = users[ok], pos[ok], neg[ok]
    batches = []
    for start in range(0, users.size, batch_size):
        stop = start + batch_size
        batches.append(Batch(users[start:stop], pos[start:stop], neg[start:stop]))
    return batches


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    k = float(len(parts))
    return LossBreakdown(
        rec=sum(p.rec for p in parts) / k,
        ucl_user=sum(p.ucl_user for p in parts) / k,
        ucl_item=sum(p.ucl_item for p in parts) / k,
        mi=sum(p.mi for p in parts) / k,
        ins_user=sum(p.ins_user for p in parts) / k,
        ins_item=sum(p.ins_item for p in parts) / k,
        reg=sum(p.reg for p in parts) / k,
        total=sum(p.total for p in parts) / k,
    )


def write_logs(logs: list[EpochLog], path: str, include_timing: bool = False) -> None:
    """Emit one JSON object per epoch, newline-delimited."""
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(json.dumps(log.to_json_dict(include_timing)) + "\n")


def train(config: TrainConfig) -> tuple[Checkpoint, list[EpochLog], MetricReport]:
    """Run the full training procedure; returns best checkpoint, logs, test report."""
    config.validate()
    hp = config.hp
    with threadpool_limits(limits=config.threads):
        split = prepare_split(config)
        train_ds = split.train
        if train_ds.num_edges == 0:
            raise DataError("train split has no edges")
        num_users, num_items = train_ds.num_users, train_ds.num_items
        adj = build_adjacency(train_ds)
        seeds = np.random.SeedSequence(hp.seed).spawn(5)
        emb = init_embeddings(num_users, num_items, hp.d, seeds[0])
        c_user = min(hp.num_user_intents, num_users)
        c_item = min(hp.num_item_intents, num_items)
        if c_user < 2 or c_item < 2:
            raise ConfigError("dataset too small for at least 2 intents per side")
        targets_user = generate_targets(
            c_user, hp.d, config.target_tau, config.target_steps, config.target_lr, seeds[1]
        )
        targets_item = generate_targets(
            c_item, hp.d, config.target_tau, config.target_steps, config.target_lr, seeds[2]
        )
        state = AdamState.zeros(emb.n, hp.d)
        rng = np.random.default_rng(seeds[3])
        cluster_seed = seeds[4]
        select_n = 20 if 20 in config.eval_ns else max(config.eval_ns)
        noisy = hp.noise_rate > 0

        logs: list[EpochLog] = []
        best_table: np.ndarray = emb.table.copy()
        best_epoch = 0
        best_metric = float("-inf")
        stale = 0
        for epoch in range(hp.epochs):
            started = time.perf_counter()
            warm = epoch < hp.warmup_epochs
            need_clusters = not warm and (hp.lambda1 > 0 or hp.lambda2 > 0)
            clusters_user = clusters_item = None
            asg_user = asg_item = None
            if need_clusters:
                kseed_u, kseed_i = cluster_seed.spawn(2)
                clusters_user = kmeans(emb.user_block(), c_user, config.kmeans_iters, kseed_u)
                clusters_item = kmeans(emb.item_block(), c_item, config.kmeans_iters, kseed_i)
                asg_user = assign_targets(clusters_user, targets_user)
                asg_item = assign_targets(clusters_item, targets_item)
            breakdowns = []
            for batch in epoch_batches(rng, train_ds, hp.batch_size):
                trace = forward(emb, adj, noisy, hp.noise_rate, hp.num_layers, rng)
                parts = {"rec": bpr_loss(trace, batch)}
                if hp.lambda3 > 0:
                    parts["ins_user"] = ins_loss(
                        trace, batch.unique_users, hp.contrast_layer, hp.tau, "user"
                    )
                    parts["ins_item"] = ins_loss(
                        trace, batch.unique_pos_items, hp.contrast_layer, hp.tau, "item"
                    )
                if not warm and hp.lambda1 > 0:
                    parts["ucl_user"] = ucl_loss(
                        emb, clusters_user.labels, asg_user, targets_user,
                        hp.tau, "user", members=batch.unique_users,
                    )
                    parts["ucl_item"] = ucl_loss(
                        emb, clusters_item.labels, asg_item, targets_item,
                        hp.tau, "item", members=batch.unique_pos_items,
                    )
                if not warm and hp.lambda2 > 0:
                    dist = cocluster_distribution(
                        emb, clusters_user, clusters_item,
                        np.column_stack((batch.users, batch.pos_items)),
                    )
                    parts["mi"] = mi_loss(dist)
                breakdown, grads = total_loss(parts, hp, emb, batch, warmup=warm)
                adam_step(state, emb, grads, hp.lr, hp.beta1, hp.beta2, hp.adam_eps)
                breakdowns.append(breakdown)
            val_trace = forward(emb, adj, False, 0.0, hp.num_layers)
            val_report = evaluate(val_trace, split, "val", config.eval_ns)
            logs.append(
                EpochLog(
                    epoch=epoch,
                    mode="warmup" if warm else "full",
                    loss=_mean_breakdown(breakdowns),
                    val=val_report,
                    wall_seconds=time.perf_counter() - started,
                    sim_user=None if asg_user is None else asg_user.mean_similarity,
                    sim_item=None if asg_item is None else asg_item.mean_similarity,
                )
            )
            metric = val_report.recall(select_n)
            if metric > best_metric:
                best_metric = metric
                best_epoch = epoch
                best_table = emb.table.copy()
                stale = 0
            else:
                stale += 1
                if config.patience > 0 and stale >= config.patience:
                    logger.info("early stop at epoch %d (patience %d)", epoch, config.patience)
                    break

        if best_metric == float("-inf"):
            best_metric = 0.0
        ckpt = Checkpoint(
            num_users=num_users,
            num_items=num_items,
            d=hp.d,
            L=hp.num_layers,
            table=best_table,
            user_targets=targets_user.vectors,
            item_targets=targets_item.vectors,
            best_epoch=best_epoch,
            best_metric=best_metric,
            seed=hp.seed,
        )
        if config.checkpoint_path:
            save_checkpoint(ckpt, config.checkpoint_path)
            ckpt = load_checkpoint(config.checkpoint_path)
        if config.log_path:
            write_logs(logs, config.log_path, config.log_timing)
        best_emb = EmbeddingTable(ckpt.table.copy(), num_users, num_items)
        test_trace = forward(best_emb, adj, False, 0.0, hp.num_layers)
        test_report = evaluate(test_trace, split, "test", config.eval_ns)
        return ckpt, logs, test_report
