"""Differentiable graph partitioning: soft assignments, losses, training, inference.

The partition network is two message-passing layers over the symmetric
normalized adjacency, a linear projection to shard logits, and a row softmax.
The combined objective trades off expected retraining time, normalized cut,
and per-shard label entropy (the entropy term is subtracted by default so
diverse shards are rewarded; see PartitionConfig.sem_sign).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .graphs import Graph, Partition
from .numerics import ParamStore, Tensor

EPS_DENOM = 1e-12

SEED_TAG_PSI = 0x951


class TrainingError(RuntimeError):
    pass


@dataclass
class PartitionConfig:
    n_shards: int = 20
    hidden: int = 64
    lambda_time: float = 1e-3
    lambda_sem: float = 1e-3
    weight_decay: float = 1e-5   # gamma of the explicit L2 term in the loss
    lr: float = 1e-3
    epochs: int = 30
    seed: int = 0
    sem_sign: int = -1           # -1 rewards label entropy, +1 penalizes it

    def __post_init__(self):
        if self.n_shards < 1:
            raise nm.ContractError("need at least one shard")
        if self.lr <= 0 or self.epochs < 0:
            raise nm.ContractError("lr must be positive, epochs non-negative")
        if self.sem_sign not in (-1, 1):
            raise nm.ContractError("sem_sign must be +1 or -1")


def init_psi_params(n_features, config: PartitionConfig) -> ParamStore:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, SEED_TAG_PSI]))
    store = ParamStore()
    store.add("w1", nm.glorot_uniform(rng, n_features, config.hidden))
    store.add("w2", nm.glorot_uniform(rng, config.hidden, config.hidden))
    store.add("w_out", nm.glorot_uniform(rng, config.hidden, config.n_shards))
    return store


def psi_forward(graph: Graph, params: ParamStore) -> Tensor:
    """Soft assignment matrix: rowSoftmax(A_hat relu(A_hat X W1) W2 W_out)."""
    from .gcn import normalize_adjacency

    if graph.features.shape[1] != params["w1"].shape[0]:
        raise nm.ContractError("feature width does not match partitioner params")
    a_hat = normalize_adjacency(graph.adjacency)
    h = nm.relu(nm.spmm(a_hat, nm.matmul(nm.constant(graph.features), params["w1"])))
    logits = nm.matmul(nm.matmul(nm.spmm(a_hat, h), params["w2"]), params["w_out"])
    return nm.row_softmax(logits)


def loss_time(p: Tensor, graph: Graph) -> Tensor:
    """(1/N) sum_i E|V_i| * E|E_i| over adjacency entries."""
    adj = graph.adjacency
    pu = nm.take_rows(p, adj.rows)
    pv = nm.take_rows(p, adj.cols)
    exp_edges = nm.tsum(pu * pv * adj.vals[:, None], axis=0)
    exp_nodes = nm.tsum(p, axis=0)
    return nm.tsum(exp_nodes * exp_edges) * (1.0 / graph.n_nodes)


def loss_struct(p: Tensor, graph: Graph) -> Tensor:
    """Normalized cut: sum_i E[cut_i] / max(E[vol_i], eps)."""
    adj = graph.adjacency
    pu = nm.take_rows(p, adj.rows)
    pv = nm.take_rows(p, adj.cols)
    cut = nm.tsum(pu * (1.0 - pv) * adj.vals[:, None], axis=0)
    vol = nm.tsum(p * graph.degrees[:, None], axis=0)
    return nm.tsum(cut / nm.clamp_min(vol, EPS_DENOM))


def loss_sem(p: Tensor, graph: Graph) -> Tensor:
    """Mean per-shard entropy of the expected label distribution (raw value)."""
    y = graph.one_hot_labels()
    counts = nm.matmul(nm.transpose(p), y)                     # S x C
    nodes = nm.transpose(nm.tsum(p, axis=0, keepdims=True))    # S x 1
    probs = counts / nm.clamp_min(nodes, EPS_DENOM)
    n_shards = p.shape[1]
    return nm.tsum(-probs * nm.log(probs)) * (1.0 / n_shards)


def loss_part(p: Tensor, graph: Graph, config: PartitionConfig,
              params: ParamStore | None = None) -> Tensor:
    total = config.lambda_time * loss_time(p, graph) + loss_struct(p, graph)
    total = total + (config.sem_sign * config.lambda_sem) * loss_sem(p, graph)
    if params is not None and config.weight_decay:
        total = total + (config.weight_decay / 2.0) * params.l2_penalty()
    return total


def train_partitioner(graph: Graph, config: PartitionConfig):
    """Full-batch AdamW on the combined partition loss.

    Returns (params, per-epoch loss trace). Deterministic given config.seed;
    the L2 term lives in the loss, so the optimizer runs with zero decoupled
    weight decay.
    """
    params = init_psi_params(graph.features.shape[1], config)
    trace = []
    for epoch in range(config.epochs):
        p = psi_forward(graph, params)
        loss = loss_part(p, graph, config, params)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite partition loss at epoch {epoch}")
        trace.append(value)
        grads = nm.gradients(loss, params)
        nm.adamw_step(params, grads, lr=config.lr, weight_decay=0.0)
    return params, trace


def infer_partition(p) -> Partition:
    """Hard assignment by per-row argmax; ties go to the lowest shard index."""
    data = p.data if isinstance(p, Tensor) else np.asarray(p)
    return Partition(data.shape[1], np.argmax(data, axis=1))


def random_partition(n, s, seed) -> Partition:
    if s < 1:
        raise nm.ContractError("need at least one shard")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    return Partition(s, rng.integers(0, s, size=n))


def save_partition(partition: Partition, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#shards={partition.n_shards}\n")
        for s in partition.assignment:
            fh.write(f"{s}\n")


def load_partition(path) -> Partition:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#shards="):
            raise nm.ContractError(f"{path}: missing #shards header")
        n_shards = int(header.split("=", 1)[1])
        assignment = [int(line) for line in fh if line.strip()]
    return Partition(n_shards, np.array(assignment, dtype=np.int64))
