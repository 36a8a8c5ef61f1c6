"""Graph collaborative filtering with uniformity-targeted intent clustering,
user-item co-cluster mutual information, and cross-layer instance contrast.

All gradients are derived by hand over the base embedding table and
verified against central finite differences in the test suite.
"""

from .backbone import (
    EmbeddingTable,
    ForwardTrace,
    Hyperparameters,
    forward,
    init_embeddings,
    pullback,
    score_all,
    score_pairs,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_from_mapping, load_config
from .dataset import (
    DatasetSplit,
    IdMap,
    InteractionDataset,
    RawInteraction,
    kcore_filter,
    load_interactions,
    split_dataset,
)
from .evaluation import MetricReport, evaluate, ndcg_at_n, recall_at_n, topn
from .graph import NormalizedAdjacency, build_adjacency, multiply
from .intents import (
    Assignment,
    Centroids,
    TargetSet,
    assign_targets,
    generate_targets,
    kmeans,
    solve_assignment,
    uniformity_loss,
)
from .objectives import (
    Batch,
    CoClusterDistribution,
    GradBuffer,
    LossBreakdown,
    bpr_loss,
    cocluster_distribution,
    ins_loss,
    mi_loss,
    mutual_information,
    total_loss,
    ucl_loss,
)
from .optim import AdamState, adam_step, finite_diff_check
from .theorem import TheoremReport, verify_theorem
from .trainer import EpochLog, epoch_batches, prepare_split, sample_batch, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Assignment",
    "Batch",
    "Centroids",
    "Checkpoint",
    "CoClusterDistribution",
    "DatasetSplit",
    "EmbeddingTable",
    "EpochLog",
    "ForwardTrace",
    "GradBuffer",
    "Hyperparameters",
    "IdMap",
    "InteractionDataset",
    "LossBreakdown",
    "MetricReport",
    "NormalizedAdjacency",
    "RawInteraction",
    "TargetSet",
    "TheoremReport",
    "TrainConfig",
    "adam_step",
    "assign_targets",
    "bpr_loss",
    "build_adjacency",
    "cocluster_distribution",
    "config_from_mapping",
    "epoch_batches",
    "evaluate",
    "finite_diff_check",
    "forward",
    "generate_targets",
    "init_embeddings",
    "ins_loss",
    "kcore_filter",
    "kmeans",
    "load_checkpoint",
    "load_config",
    "load_interactions",
    "mi_loss",
    "multiply",
    "mutual_information",
    "ndcg_at_n",
    "prepare_split",
    "pullback",
    "recall_at_n",
    "sample_batch",
    "save_checkpoint",
    "score_all",
    "score_pairs",
    "solve_assignment",
    "split_dataset",
    "topn",
    "total_loss",
    "train",
    "ucl_loss",
    "uniformity_loss",
    "verify_theorem",
]
