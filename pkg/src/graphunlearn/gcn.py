"""Per-shard GCN: normalization, forward pass, isolated training, query embedding.

Only GCN is provided; other message-passing architectures can be slotted in by
registering a factory under a new name in MODEL_REGISTRY, as long as training
stays a pure function of (shard content, config, seed lineage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .graphs import Graph, Shard
from .numerics import ContractError, ParamStore, Sparse, Tensor

SEED_TAG_GCN = 0x6C1


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-2
    weight_decay: float = 1e-5
    hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.lr <= 0 or self.hidden < 1:
            raise ContractError("invalid training configuration")


@dataclass
class ShardModel:
    shard_id: int
    params: ParamStore | None
    train_seed: tuple
    epoch_count: int
    final_train_loss: float
    untrained: bool = False

    @property
    def live(self) -> bool:
        return not self.untrained


def normalize_adjacency(adjacency: Sparse) -> Sparse:
    """Symmetric normalization with self-loops: D~^{-1/2} (A + I) D~^{-1/2}."""
    if adjacency._normalized is not None:
        return adjacency._normalized
    n = adjacency.n_rows
    rows = np.concatenate([adjacency.rows, np.arange(n)])
    cols = np.concatenate([adjacency.cols, np.arange(n)])
    vals = np.concatenate([adjacency.vals, np.ones(n)])
    deg = np.zeros(n)
    np.add.at(deg, rows, vals)
    inv_sqrt = 1.0 / np.sqrt(deg)
    out = Sparse(n, n, rows, cols, vals * inv_sqrt[rows] * inv_sqrt[cols])
    adjacency._normalized = out
    return out


def init_gcn_params(n_features, hidden, n_classes, rng) -> ParamStore:
    store = ParamStore()
    store.add("w1", nm.glorot_uniform(rng, n_features, hidden))
    store.add("w2", nm.glorot_uniform(rng, hidden, hidden))
    store.add("head_w", nm.glorot_uniform(rng, hidden, n_classes))
    store.add("head_b", np.zeros((1, n_classes)))
    return store


def gcn_forward(shard_adjacency: Sparse, features, params: ParamStore):
    """Differentiable forward pass: returns (embeddings, logits) tensors."""
    feats = features if isinstance(features, Tensor) else nm.constant(features)
    if feats.shape[1] != params["w1"].shape[0]:
        raise ContractError("feature width does not match model params")
    a_hat = normalize_adjacency(shard_adjacency)
    h = nm.relu(nm.spmm(a_hat, nm.matmul(feats, params["w1"])))
    emb = nm.matmul(nm.spmm(a_hat, h), params["w2"])
    logits = nm.matmul(emb, params["head_w"]) + params["head_b"]
    return emb, logits


def gcn_forward_arrays(shard_adjacency: Sparse, features, params: ParamStore):
    """Inference-only forward pass on plain arrays (no tape)."""
    a_hat = normalize_adjacency(shard_adjacency).csr()
    w1 = params["w1"].data
    w2 = params["w2"].data
    h = np.maximum(a_hat @ (features @ w1), 0.0)
    emb = (a_hat @ h) @ w2
    logits = emb @ params["head_w"].data + params["head_b"].data
    return emb, logits


def cross_entropy(logits: Tensor, labels, n_classes) -> Tensor:
    """Mean softmax cross-entropy of logits rows against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    one_hot = np.zeros((labels.size, n_classes))
    one_hot[np.arange(labels.size), labels] = 1.0
    log_probs = nm.log(nm.row_softmax(logits))
    return nm.tsum(log_probs * one_hot) * (-1.0 / labels.size)


def train_submodel(shard: Shard, config: TrainConfig) -> ShardModel:
    """Isolated full-batch training on the shard's train nodes.

    A pure function of (shard content, config, shard_id): retraining a shard
    after node removal reuses the same seed stream, so the result is exactly
    what a from-scratch build on the reduced shard would produce. Shards
    with no train nodes yield an untrained null model.
    """
    seed = (config.seed, shard.shard_id)
    if shard.local_train.size == 0 or shard.n_nodes == 0:
        return ShardModel(shard.shard_id, None, seed, 0, float("nan"), untrained=True)
    rng = np.random.default_rng(
        np.random.SeedSequence([SEED_TAG_GCN, config.seed, shard.shard_id])
    )
    params = init_gcn_params(
        shard.local_features.shape[1], config.hidden, shard.n_classes, rng
    )
    train_idx = shard.local_train
    train_labels = shard.local_labels[train_idx]
    final_loss = float("nan")
    for epoch in range(config.epochs):
        _, logits = gcn_forward(shard.local_adjacency, shard.local_features, params)
        loss = cross_entropy(nm.take_rows(logits, train_idx),
                             train_labels, shard.n_classes)
        final_loss = loss.item()
        if not np.isfinite(final_loss):
            raise TrainingError(
                f"non-finite loss in shard {shard.shard_id} at epoch {epoch}"
            )
        grads = nm.gradients(loss, params)
        nm.adamw_step(params, grads, lr=config.lr,
                      weight_decay=config.weight_decay)
    return ShardModel(shard.shard_id, params, seed, config.epochs, final_loss)


# extension point: alternative sub-model architectures register a trainer
# with the train_submodel signature under a new key
MODEL_REGISTRY = {"gcn": train_submodel}


def get_trainer(name: str):
    try:
        return MODEL_REGISTRY[name]
    except KeyError:
        raise ContractError(f"unknown sub-model architecture {name!r}") from None


def embed_query(shard_model: ShardModel, shard: Shard, graph: Graph,
                query_ids) -> np.ndarray:
    """Embed arbitrary graph nodes against one shard.

    Members of the shard get their standard embedding. An outside node u is
    embedded on a virtual view: the shard plus u, keeping only u's edges whose
    other endpoint is in the shard, with the adjacency re-normalized.
    """
    if shard_model.params is None:
        raise ContractError("cannot embed against an untrained shard model")
    query_ids = np.asarray(query_ids, dtype=np.int64)
    w1 = shard_model.params["w1"].data
    w2 = shard_model.params["w2"].data
    d = w2.shape[1]
    out = np.empty((query_ids.size, d))
    inside = shard.contains(query_ids) if shard.n_nodes else np.zeros(
        query_ids.size, dtype=bool)

    if inside.any():
        emb, _ = gcn_forward_arrays(
            shard.local_adjacency, shard.local_features, shard_model.params
        )
        out[inside] = emb[shard.local_index(query_ids[inside])]
    if not (~inside).any():
        return out

    # precomputation shared by all outside queries
    n = shard.n_nodes
    adj = shard.local_adjacency
    # self-looped structure in CSR form
    rows = np.concatenate([adj.rows, np.arange(n)])
    cols = np.concatenate([adj.cols, np.arange(n)])
    vals = np.concatenate([adj.vals, np.ones(n)])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.searchsorted(rows, np.arange(n + 1))
    d_base = np.zeros(n)
    np.add.at(d_base, rows, vals)
    p0 = shard.local_features @ w1                      # n x h
    gcsr = graph.adjacency.csr()
    member = np.zeros(graph.n_nodes, dtype=bool)
    member[shard.node_ids] = True
    local_of = np.full(graph.n_nodes, -1, dtype=np.int64)
    local_of[shard.node_ids] = np.arange(n)

    for pos in np.flatnonzero(~inside):
        u = query_ids[pos]
        gnbr = gcsr.indices[gcsr.indptr[u]:gcsr.indptr[u + 1]]
        nbr = local_of[gnbr[member[gnbr]]]
        k = nbr.size
        du = k + 1.0
        inv_u = 1.0 / np.sqrt(du)
        p_u = graph.features[u] @ w1
        if n:
            inv = 1.0 / np.sqrt(d_base)
            if k:
                inv[nbr] = 1.0 / np.sqrt(d_base[nbr] + 1.0)
        # first layer, only at rows that feed the query's second-layer row
        h_rows = np.empty((k + 1, w1.shape[1]))
        for t, j in enumerate(nbr):
            sl = slice(indptr[j], indptr[j + 1])
            c = cols[sl]
            row = (vals[sl] * inv[c]) @ p0[c] + inv_u * p_u
            h_rows[t] = inv[j] * row
        if k:
            h_rows[k] = inv_u * ((inv[nbr] @ p0[nbr]) + inv_u * p_u)
        else:
            h_rows[k] = inv_u * inv_u * p_u
        np.maximum(h_rows, 0.0, out=h_rows)
        weights = np.empty(k + 1)
        if k:
            weights[:k] = inv[nbr] * inv_u
        weights[k] = inv_u * inv_u
        out[pos] = (weights @ h_rows) @ w2
    return out
