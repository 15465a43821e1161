"""Invariance propagation: kNN-graph positive discovery and contrastive training."""

from invprop._core import (
    Bank,
    NeighborTable,
    Encoder,
    TrainConfig,
    gaussian_mixture,
    hard_positives,
    knn_baseline,
    knn_classify,
    linear_probe,
    load_idx,
    propagate,
    reachability_oracle,
    topk_all,
    train,
    two_manifolds,
)

__all__ = [
    "Bank",
    "NeighborTable",
    "Encoder",
    "TrainConfig",
    "gaussian_mixture",
    "hard_positives",
    "knn_baseline",
    "knn_classify",
    "linear_probe",
    "load_idx",
    "propagate",
    "reachability_oracle",
    "topk_all",
    "train",
    "two_manifolds",
]
