"""Retraining-based graph unlearning with a differentiable partitioner,
isolated per-shard GCNs, and a contrastive attentive aggregator."""

from .aggregate import AggTrainConfig, attentive_fuse, predict, train_aggregator
from .bench import (citation_surrogate, evaluate_state, f1_micro,
                    make_citeseer_like, make_cora_like)
from .checkpoint import load_store, max_param_delta, save_store, stores_equal
from .config import ConfigError, ExperimentConfig, load_config
from .engine import (PipelineConfigs, PipelineState, UnlearnReport,
                     build_pipeline, full_retrain, locate_affected, unlearn,
                     verify_exactness)
from .gcn import ShardModel, TrainConfig, embed_query, train_submodel
from .graphs import (DeleteSet, Graph, ParseError, Partition, Shard,
                     ValidationError, induce_shards, inject_noise, load_graph,
                     remove_nodes, remove_nodes_from_graph, save_graph,
                     split_random, synth_graph)
from .numerics import (ContractError, ParamStore, ShapeError, Sparse, Tensor,
                       adamw_step, gradients)
from .partition import (PartitionConfig, infer_partition, loss_part,
                        psi_forward, random_partition, train_partitioner)

__version__ = "0.1.0"

__all__ = [
    "AggTrainConfig", "ConfigError", "ContractError", "DeleteSet",
    "ExperimentConfig", "Graph", "ParamStore", "ParseError", "Partition",
    "PartitionConfig", "PipelineConfigs", "PipelineState", "Shard",
    "ShapeError", "ShardModel", "Sparse", "Tensor", "TrainConfig",
    "UnlearnReport", "ValidationError", "adamw_step", "attentive_fuse",
    "build_pipeline", "citation_surrogate", "embed_query", "evaluate_state",
    "f1_micro", "full_retrain", "gradients", "induce_shards", "infer_partition",
    "inject_noise", "load_config", "load_graph", "load_store",
    "locate_affected", "loss_part", "make_citeseer_like", "make_cora_like",
    "max_param_delta", "predict", "psi_forward", "random_partition",
    "remove_nodes", "remove_nodes_from_graph", "save_graph", "save_store",
    "split_random", "stores_equal", "synth_graph", "train_aggregator",
    "train_partitioner", "train_submodel", "unlearn", "verify_exactness",
]
