"""Contrastive sub-model aggregation: attentive fusion, masked local views,
InfoNCE and reconstruction losses, and the aggregator training loop.

Sub-model embeddings are frozen inputs here; only the projection, attention,
and classifier parameters train. The InfoNCE and triplet losses default to
the standard orientations (positive pair pulled together); the printed
alternatives are available behind paper_literal_* flags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .graphs import Graph, Partition
from .numerics import ContractError, ParamStore, Tensor

SEED_TAG_AGG = 0xA66


class TrainingError(RuntimeError):
    pass


@dataclass
class AggTrainConfig:
    sample_size: int | None = None   # None: 1000, or 10% of train if train > 10k
    temperature: float = 0.5
    lambda_contra: float = 1e-4
    lambda_recon: float = 1e-4
    weight_decay: float = 1e-5       # gamma' of the explicit L2 term
    lr: float = 1e-2
    epochs: int = 20
    warmup_epochs: int = 40
    proj_dim: int | None = None      # None: match the embedding width
    mask_rate: float = 0.5
    seed: int = 0
    paper_literal_infonce: bool = False
    paper_literal_triplet: bool = False

    def __post_init__(self):
        if not (0.0 < self.mask_rate < 1.0):
            raise ContractError("mask_rate must be in (0, 1)")
        if (self.temperature <= 0 or self.lr <= 0 or self.epochs < 0
                or self.warmup_epochs < 0):
            raise ContractError("invalid aggregator configuration")

    def effective_sample_size(self, n_train: int) -> int:
        if self.sample_size is not None:
            if self.sample_size > n_train:
                raise ContractError("sample_size exceeds train-node count")
            return self.sample_size
        return 1000 if n_train <= 10_000 else max(1, n_train // 10)


@dataclass
class FusedBatch:
    node_ids: np.ndarray
    live_ids: list                  # shard ids with live sub-models, in order
    embeddings: list                # per live shard, |batch| x d constant arrays
    alpha: Tensor                   # |batch| x n_live attention scores
    fused: Tensor                   # |batch| x d global views
    masks: np.ndarray | None = None
    local: Tensor | None = None     # |batch| x d masked local views


def init_aggregator_params(n_shards, d, n_classes, seed,
                           proj_dim=None) -> ParamStore:
    """proj_dim is the width of the per-shard scoring projection; a narrow
    projection regularizes the attention scorer, which sees only ~|batch|/S
    same-shard examples per shard."""
    p = d if proj_dim is None else proj_dim
    rng = np.random.default_rng(np.random.SeedSequence([SEED_TAG_AGG, seed]))
    store = ParamStore()
    for i in range(n_shards):
        store.add(f"proj_w{i}", nm.glorot_uniform(rng, d, p))
        store.add(f"proj_b{i}", np.zeros((1, p)))
    # Zero-init the scorer so attention starts uniform: the classifier head
    # first learns on the balanced mixture, and sharpening happens only where
    # the data supports it. A random scorer makes the softmax collapse onto
    # arbitrary shards early, a local optimum it rarely escapes.
    store.add("attn_w", np.zeros((p, 1)))
    store.add("head_w", nm.glorot_uniform(rng, d, n_classes))
    store.add("head_b", np.zeros((1, n_classes)))
    return store


def attentive_fuse(per_shard_embeddings: dict, params: ParamStore,
                   node_ids=None) -> FusedBatch:
    """Project, score, softmax over live shards, and average with a 1/S factor.

    per_shard_embeddings maps shard id -> |batch| x d array for every live
    shard; the softmax and the 1/S factor both range over the live shards.
    """
    live_ids = sorted(per_shard_embeddings)
    if not live_ids:
        raise ContractError("attentive fusion needs at least one live shard")
    n_live = len(live_ids)
    scores = []
    for i in live_ids:
        e = nm.constant(per_shard_embeddings[i])
        z = nm.relu(nm.matmul(e, params[f"proj_w{i}"]) + params[f"proj_b{i}"])
        scores.append(nm.matmul(z, params["attn_w"]))
    alpha = nm.row_softmax(nm.concat_cols(scores))
    fused = None
    for t, i in enumerate(live_ids):
        term = nm.take_cols(alpha, [t]) * per_shard_embeddings[i]
        fused = term if fused is None else fused + term
    fused = fused * (1.0 / n_live)
    if node_ids is None:
        node_ids = np.arange(per_shard_embeddings[live_ids[0]].shape[0])
    return FusedBatch(np.asarray(node_ids), live_ids,
                      [per_shard_embeddings[i] for i in live_ids], alpha, fused)


def local_view(fused: FusedBatch, mask_rate, rng) -> FusedBatch:
    """Attach masked local views: e~ = (S/|m|_1) sum_i m_i alpha_i e_i.

    One Bernoulli(1 - mask_rate) mask per node per call, resampled until at
    least one shard survives.
    """
    m, n_live = fused.alpha.shape
    masks = (rng.random((m, n_live)) < (1.0 - mask_rate)).astype(np.float64)
    for r in np.flatnonzero(masks.sum(axis=1) < 1.0):
        while masks[r].sum() < 1.0:
            masks[r] = rng.random(n_live) < (1.0 - mask_rate)
    local = None
    for t in range(n_live):
        term = (nm.take_cols(fused.alpha, [t]) * masks[:, t:t + 1]) \
            * fused.embeddings[t]
        local = term if local is None else local + term
    scale = (n_live / masks.sum(axis=1))[:, None]
    fused.masks = masks
    fused.local = local * scale
    return fused


def _row_cosine(a: Tensor, b: Tensor) -> Tensor:
    num = nm.tsum(a * b, axis=1, keepdims=True)
    na = nm.sqrt(nm.tsum(a * a, axis=1, keepdims=True))
    nb = nm.sqrt(nm.tsum(b * b, axis=1, keepdims=True))
    return num / nm.clamp_min(na * nb, 1e-12)


def loss_contra(fused: FusedBatch, temperature, rng,
                paper_literal=False) -> Tensor:
    """Local-global InfoNCE with one sampled negative node per anchor."""
    m = fused.fused.shape[0]
    if m < 2:
        raise ContractError("contrastive loss needs a batch of at least 2")
    if fused.local is None:
        raise ContractError("local views missing; call local_view first")
    # v != u, uniform over the other batch members
    v = (np.arange(m) + 1 + rng.integers(0, m - 1, size=m)) % m
    pos = _row_cosine(fused.fused, fused.local) * (1.0 / temperature)
    neg_gg = _row_cosine(fused.fused, nm.take_rows(fused.fused, v)) \
        * (1.0 / temperature)
    neg_gl = _row_cosine(fused.fused, nm.take_rows(fused.local, v)) \
        * (1.0 / temperature)
    denom = nm.exp(pos) + nm.exp(neg_gg) + nm.exp(neg_gl)
    standard = nm.tsum(nm.log(denom) - pos) * (1.0 / m)
    if paper_literal:
        return -standard
    return standard


def loss_recon(fused: FusedBatch, graph: Graph, partition: Partition, rng,
               paper_literal=False) -> Tensor:
    """Margin loss pulling cross-shard neighbors (within the batch) together.

    Anchors without a cross-shard neighbor in the batch contribute nothing;
    negatives are batch members with no edge to the anchor.
    """
    ids = fused.node_ids
    m = ids.size
    csr = graph.adjacency.csr()
    pos_in_batch = {int(g): t for t, g in enumerate(ids)}
    anchors, pos_idx, neg_idx = [], [], []
    for t in range(m):
        u = int(ids[t])
        nbrs = csr.indices[csr.indptr[u]:csr.indptr[u + 1]]
        cross = [pos_in_batch[int(w)] for w in nbrs
                 if partition.assignment[w] != partition.assignment[u]
                 and int(w) in pos_in_batch]
        if not cross:
            continue
        nbr_set = set(int(w) for w in nbrs)
        non_nbrs = [s for s in range(m)
                    if s != t and int(ids[s]) not in nbr_set]
        if not non_nbrs:
            continue
        anchors.append(t)
        pos_idx.append(cross[rng.integers(0, len(cross))])
        neg_idx.append(non_nbrs[rng.integers(0, len(non_nbrs))])
    if not anchors:
        return nm.constant(0.0)
    a = nm.take_rows(fused.fused, anchors)
    p = nm.take_rows(fused.fused, pos_idx)
    q = nm.take_rows(fused.fused, neg_idx)
    if paper_literal:
        hinge = nm.relu(_row_cosine(a, p) - _row_cosine(a, q) + 1.0)
    else:
        hinge = nm.relu(_row_cosine(a, q) - _row_cosine(a, p) + 1.0)
    return nm.tsum(hinge) * (1.0 / len(anchors))


def loss_routing(fused: FusedBatch, partition: Partition) -> Tensor:
    """Cross-entropy of the attention weights against each node's own shard.

    Used to warm-start the attention scorer: a node's own shard embeds it
    with its real neighborhood, so steering attention there first puts the
    joint training in a basin where fusion carries structural signal
    instead of collapsing onto arbitrary shards. Nodes whose own shard has
    no live sub-model are skipped.
    """
    home = partition.assignment[fused.node_ids]
    column = {sid: t for t, sid in enumerate(fused.live_ids)}
    onehot = np.zeros(fused.alpha.shape)
    hits = 0
    for r, h in enumerate(home):
        if int(h) in column:
            onehot[r, column[int(h)]] = 1.0
            hits += 1
    if hits == 0:
        return nm.constant(0.0)
    logp = nm.log(nm.clamp_min(fused.alpha, nm.LOG_CLAMP))
    return nm.tsum(logp * onehot) * (-1.0 / hits)


def head_logits(fused_emb: Tensor, params: ParamStore) -> Tensor:
    return nm.matmul(fused_emb, params["head_w"]) + params["head_b"]


def loss_cls(fused: FusedBatch, params: ParamStore, labels,
             n_classes) -> Tensor:
    """Softmax cross-entropy of the classifier head on the fused embeddings."""
    from .gcn import cross_entropy

    return cross_entropy(head_logits(fused.fused, params), labels, n_classes)


def aggregator_loss(fused: FusedBatch, params: ParamStore, graph: Graph,
                    partition: Partition, config: AggTrainConfig,
                    rng) -> Tensor:
    labels = graph.labels[fused.node_ids]
    total = loss_cls(fused, params, labels, graph.n_classes)
    if config.lambda_contra:
        total = total + config.lambda_contra * loss_contra(
            fused, config.temperature, rng, config.paper_literal_infonce)
    if config.lambda_recon:
        total = total + config.lambda_recon * loss_recon(
            fused, graph, partition, rng, config.paper_literal_triplet)
    if config.weight_decay:
        total = total + (config.weight_decay / 2.0) * params.l2_penalty()
    return total


def sample_training_nodes(eligible_train_ids, config: AggTrainConfig,
                          seed) -> np.ndarray:
    eligible = np.sort(np.asarray(eligible_train_ids, dtype=np.int64))
    m = config.effective_sample_size(eligible.size)
    rng = np.random.default_rng(np.random.SeedSequence([SEED_TAG_AGG, seed, 1]))
    return np.sort(rng.choice(eligible, size=m, replace=False))


def train_aggregator(shard_models, shards, graph: Graph, partition: Partition,
                     config: AggTrainConfig, eligible_train_ids=None):
    """Train the fusion/attention/classifier parameters on a node sample.

    Sub-models stay frozen: their embeddings of the sampled nodes are
    precomputed once. Returns (params, sampled node ids, loss trace).
    """
    from .gcn import embed_query

    live = [m for m in shard_models if m.live]
    if not live:
        raise ContractError("no live shard models to aggregate")
    if eligible_train_ids is None:
        eligible_train_ids = graph.splits["train"]
    batch_ids = sample_training_nodes(eligible_train_ids, config, config.seed)
    per_shard = {
        m.shard_id: embed_query(m, shards[m.shard_id], graph, batch_ids)
        for m in live
    }
    d = next(iter(per_shard.values())).shape[1]
    params = init_aggregator_params(len(shard_models), d, graph.n_classes,
                                    config.seed, proj_dim=config.proj_dim)
    trace = []
    for epoch in range(config.warmup_epochs):
        fused = attentive_fuse(per_shard, params, batch_ids)
        loss = loss_routing(fused, partition)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite routing loss at epoch {epoch}")
        grads = nm.gradients(loss, params)
        nm.adamw_step(params, grads, lr=config.lr, weight_decay=0.0)
    for epoch in range(config.epochs):
        rng = np.random.default_rng(
            np.random.SeedSequence([SEED_TAG_AGG, config.seed, 2, epoch]))
        fused = attentive_fuse(per_shard, params, batch_ids)
        fused = local_view(fused, config.mask_rate, rng)
        loss = aggregator_loss(fused, params, graph, partition, config, rng)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite aggregator loss at epoch {epoch}")
        trace.append(value)
        grads = nm.gradients(loss, params)
        nm.adamw_step(params, grads, lr=config.lr, weight_decay=0.0)
    return params, batch_ids, trace


def predict(shard_models, shards, graph: Graph, partition: Partition,
            agg_params: ParamStore, query_ids):
    """Fused prediction for arbitrary nodes: (labels, class probabilities)."""
    from .gcn import embed_query

    query_ids = np.asarray(query_ids, dtype=np.int64)
    live = [m for m in shard_models if m.live]
    if not live:
        raise ContractError("no live shard models")
    per_shard = {
        m.shard_id: embed_query(m, shards[m.shard_id], graph, query_ids)
        for m in live
    }
    fused = attentive_fuse(per_shard, agg_params, query_ids)
    logits = head_logits(fused.fused, agg_params)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    return np.argmax(probs, axis=1), probs
