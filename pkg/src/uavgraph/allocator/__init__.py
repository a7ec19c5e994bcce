"""Stage-two allocator: features, networks, Node2Vec embeddings and training."""

from .features import N_FEATURES, ROUTE_COLUMNS, NodeFeatures, encode_features, neighbor_weights
from .model import (
    VARIANTS,
    AllocatorParams,
    NonFiniteParams,
    allocation_from_logits,
    attention,
    init_params,
    load_params,
    model_backward,
    model_forward,
    param_shapes,
    save_params,
    zero_params,
)
from .node2vec import Node2VecHyper, node2vec_baseline, node2vec_embed, random_walks, tour_adjacency
from .train import (
    GraphBatch,
    TrainHyper,
    TrainingDiverged,
    TrainRecord,
    allocate,
    batch_loss,
    forward,
    gat_baseline_forward,
    joint_loss,
    make_batches,
    mean_abs_gap,
    total_loss,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
