"""Attributed labeled graphs: loading, splitting, sharding, perturbation.

Graphs are undirected and simple; the adjacency stores each edge in both
directions with unit weight and a zero diagonal. All generators and loaders
are pure functions of their inputs and seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError, Sparse, sparse_from_edges

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed input file."""


class ValidationError(ValueError):
    """Input data violates a graph invariant."""


@dataclass(eq=False)
class Graph:
    n_nodes: int
    adjacency: Sparse
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    splits: dict = field(default_factory=dict)  # 'train'/'val'/'test' -> sorted ids

    def __post_init__(self):
        if self.adjacency.shape != (self.n_nodes, self.n_nodes):
            raise ValidationError("adjacency shape does not match n_nodes")
        if np.any(self.adjacency.rows == self.adjacency.cols):
            raise ValidationError("adjacency has diagonal entries")
        if not self.adjacency.is_symmetric():
            raise ValidationError("adjacency is not symmetric")
        if self.features.shape[0] != self.n_nodes:
            raise ValidationError("feature row count does not match n_nodes")
        if self.labels.shape != (self.n_nodes,):
            raise ValidationError("label vector length does not match n_nodes")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.n_classes
        ):
            raise ValidationError("label out of range")
        seen = set()
        for name, ids in self.splits.items():
            ids = np.asarray(ids, dtype=np.int64)
            if ids.size and (ids.min() < 0 or ids.max() >= self.n_nodes):
                raise ValidationError(f"{name} split id out of range")
            dup = seen & set(ids.tolist())
            if dup:
                raise ValidationError(f"splits overlap at nodes {sorted(dup)[:5]}")
            seen |= set(ids.tolist())
            self.splits[name] = np.sort(ids)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.row_sums()

    @property
    def n_edges_entries(self) -> int:
        """Adjacency entry count (2x the undirected edge count)."""
        return self.adjacency.nnz

    def one_hot_labels(self) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_classes))
        out[np.arange(self.n_nodes), self.labels] = 1.0
        return out


@dataclass
class Partition:
    n_shards: int
    assignment: np.ndarray  # length N, values in [0, n_shards)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.size and (
            self.assignment.min() < 0 or self.assignment.max() >= self.n_shards
        ):
            raise ValidationError("shard id out of range")


@dataclass(eq=False)
class Shard:
    shard_id: int
    node_ids: np.ndarray           # sorted global ids
    local_adjacency: Sparse        # induced, local indices
    local_features: np.ndarray
    local_labels: np.ndarray
    n_classes: int
    local_train: np.ndarray        # local indices of global train nodes

    @property
    def n_nodes(self) -> int:
        return self.node_ids.size

    def local_index(self, global_ids) -> np.ndarray:
        idx = np.searchsorted(self.node_ids, global_ids)
        ok = (idx < self.node_ids.size) & (self.node_ids[np.minimum(idx, self.node_ids.size - 1)] == global_ids)
        if not np.all(ok):
            raise ContractError("node not in shard")
        return idx

    def contains(self, global_ids) -> np.ndarray:
        idx = np.searchsorted(self.node_ids, global_ids)
        idx = np.minimum(idx, max(self.node_ids.size - 1, 0))
        if self.node_ids.size == 0:
            return np.zeros(np.asarray(global_ids).shape, dtype=bool)
        return self.node_ids[idx] == global_ids


@dataclass
class DeleteSet:
    node_ids: np.ndarray

    def __post_init__(self):
        self.node_ids = np.unique(np.asarray(self.node_ids, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.node_ids.size


# ---------------------------------------------------------------------------
# construction helpers


def build_symmetric_adjacency(n, src, dst):
    """Symmetrize an undirected edge list, dropping self-loops and duplicates.

    Returns (Sparse, n_dropped_self_loops, n_dropped_duplicates) where the
    duplicate count is over directed entries after symmetrization.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    loops = src == dst
    n_loops = int(loops.sum())
    src, dst = src[~loops], dst[~loops]
    all_src = np.concatenate([src, dst])
    all_dst = np.concatenate([dst, src])
    pair = all_src * np.int64(n) + all_dst
    uniq, first = np.unique(pair, return_index=True)
    n_dups = pair.size - uniq.size
    all_src, all_dst = all_src[np.sort(first)], all_dst[np.sort(first)]
    adj = sparse_from_edges(n, all_src, all_dst)
    return adj, n_loops, n_dups


# ---------------------------------------------------------------------------
# file I/O

# edges file:    src<TAB>dst per line, '#' comments
# features file: one line per node, space-separated floats
# labels file:   one integer per line
# splits file:   lines 'train:', 'val:', 'test:' each followed by ids


def load_graph(edges_path, features_path, labels_path, splits_path=None) -> Graph:
    features = _load_features(features_path)
    labels = _load_labels(labels_path)
    n = features.shape[0]
    if labels.shape[0] != n:
        raise ValidationError(
            f"feature/label count mismatch: {n} vs {labels.shape[0]}"
        )
    src, dst = _load_edges(edges_path, n)
    adj, n_loops, n_dups = build_symmetric_adjacency(n, src, dst)
    if n_loops or n_dups:
        log.warning(
            "load_graph: dropped %d self-loops and %d duplicate entries",
            n_loops, n_dups,
        )
    n_classes = int(labels.max()) + 1 if labels.size else 0
    splits = _load_splits(splits_path) if splits_path else {}
    return Graph(n, adj, features, labels, n_classes, splits)


def _load_edges(path, n):
    src, dst = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'src<TAB>dst'")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer node id") from exc
            if not (0 <= a < n and 0 <= b < n):
                raise ParseError(f"{path}:{lineno}: node id out of range")
            src.append(a)
            dst.append(b)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def _load_features(path):
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(x) for x in line.split()]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric feature") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}:{lineno}: ragged feature row")
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: empty features file")
    return np.array(rows, dtype=np.float64)


def _load_labels(path):
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer label") from exc
    arr = np.array(labels, dtype=np.int64)
    if arr.size and arr.min() < 0:
        raise ValidationError(f"{path}: negative label")
    return arr


def _load_splits(path):
    splits = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            for name in ("train", "val", "test"):
                if line.startswith(name + ":"):
                    current = name
                    rest = line[len(name) + 1:].strip()
                    splits[name] = [int(x) for x in rest.split()] if rest else []
                    break
            else:
                if current is None:
                    raise ParseError(f"{path}:{lineno}: expected 'train:' header")
                splits[current].extend(int(x) for x in line.split())
    return {k: np.array(v, dtype=np.int64) for k, v in splits.items()}


def save_graph(graph: Graph, edges_path, features_path, labels_path, splits_path=None):
    """Write a graph in the load_graph file formats (each edge once)."""
    with open(edges_path, "w", encoding="utf-8") as fh:
        mask = graph.adjacency.rows < graph.adjacency.cols
        for a, b in zip(graph.adjacency.rows[mask], graph.adjacency.cols[mask]):
            fh.write(f"{a}\t{b}\n")
    with open(features_path, "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for y in graph.labels:
            fh.write(f"{y}\n")
    if splits_path:
        with open(splits_path, "w", encoding="utf-8") as fh:
            for name in ("train", "val", "test"):
                ids = graph.splits.get(name, np.array([], dtype=np.int64))
                fh.write(f"{name}: " + " ".join(str(i) for i in ids) + "\n")


# ---------------------------------------------------------------------------
# splitting


def split_random(graph: Graph, ratios=(0.7, 0.2, 0.1), seed=0) -> Graph:
    """Random disjoint train/val/test splits.

    Sizes are floor-based: val and test get floor(ratio*N), the remainder
    goes to train.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError("split ratios must sum to 1")
    n = graph.n_nodes
    # 1e-9 guard keeps float ratio products from flooring below the exact value
    n_val = int(np.floor(ratios[1] * n + 1e-9))
    n_test = int(np.floor(ratios[2] * n + 1e-9))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5911]))
    perm = rng.permutation(n)
    splits = {
        "train": perm[: n - n_val - n_test],
        "val": perm[n - n_val - n_test: n - n_test],
        "test": perm[n - n_test:],
    }
    return Graph(
        graph.n_nodes, graph.adjacency, graph.features, graph.labels,
        graph.n_classes, splits,
    )


# ---------------------------------------------------------------------------
# sharding


def induce_shards(graph: Graph, partition: Partition) -> list:
    """Induced subgraph per shard; cross-shard edges are dropped."""
    if partition.assignment.size != graph.n_nodes:
        raise ContractError("partition length does not match graph")
    train = graph.splits.get("train", np.array([], dtype=np.int64))
    train_mask = np.zeros(graph.n_nodes, dtype=bool)
    train_mask[train] = True
    shards = []
    rows, cols = graph.adjacency.rows, graph.adjacency.cols
    assign = partition.assignment
    same_shard = assign[rows] == assign[cols]
    for s in range(partition.n_shards):
        node_ids = np.flatnonzero(assign == s)
        local = np.full(graph.n_nodes, -1, dtype=np.int64)
        local[node_ids] = np.arange(node_ids.size)
        mask = same_shard & (assign[rows] == s)
        ladj = Sparse(
            node_ids.size, node_ids.size,
            local[rows[mask]], local[cols[mask]],
            graph.adjacency.vals[mask],
        )
        shards.append(Shard(
            shard_id=s,
            node_ids=node_ids,
            local_adjacency=ladj,
            local_features=graph.features[node_ids],
            local_labels=graph.labels[node_ids],
            n_classes=graph.n_classes,
            local_train=np.flatnonzero(train_mask[node_ids]),
        ))
    return shards


def remove_nodes(shard: Shard, delete_set: DeleteSet) -> Shard:
    """Shard minus the deleted nodes and every incident edge."""
    keep_mask = ~shard.contains(delete_set.node_ids)
    doomed_local = shard.local_index(delete_set.node_ids[~keep_mask]) \
        if np.any(~keep_mask) else np.array([], dtype=np.int64)
    keep_local = np.setdiff1d(np.arange(shard.n_nodes), doomed_local)
    remap = np.full(shard.n_nodes, -1, dtype=np.int64)
    remap[keep_local] = np.arange(keep_local.size)
    adj = shard.local_adjacency
    emask = (remap[adj.rows] >= 0) & (remap[adj.cols] >= 0)
    ladj = Sparse(
        keep_local.size, keep_local.size,
        remap[adj.rows[emask]], remap[adj.cols[emask]], adj.vals[emask],
    )
    train_mask = np.zeros(shard.n_nodes, dtype=bool)
    train_mask[shard.local_train] = True
    return Shard(
        shard_id=shard.shard_id,
        node_ids=shard.node_ids[keep_local],
        local_adjacency=ladj,
        local_features=shard.local_features[keep_local],
        local_labels=shard.local_labels[keep_local],
        n_classes=shard.n_classes,
        local_train=np.flatnonzero(train_mask[keep_local]),
    )


def remove_nodes_from_graph(graph: Graph, delete_set: DeleteSet):
    """Graph minus nodes, re-indexed densely; returns (graph, old->new map)."""
    doomed = np.zeros(graph.n_nodes, dtype=bool)
    doomed[delete_set.node_ids] = True
    keep = np.flatnonzero(~doomed)
    remap = np.full(graph.n_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    adj = graph.adjacency
    emask = ~doomed[adj.rows] & ~doomed[adj.cols]
    new_adj = Sparse(
        keep.size, keep.size,
        remap[adj.rows[emask]], remap[adj.cols[emask]], adj.vals[emask],
    )
    splits = {}
    for name, ids in graph.splits.items():
        kept = ids[~doomed[ids]]
        splits[name] = remap[kept]
    g = Graph(
        keep.size, new_adj, graph.features[keep], graph.labels[keep],
        graph.n_classes, splits,
    )
    return g, remap


def cross_shard_edge_count(graph: Graph, partition: Partition) -> int:
    """Number of adjacency entries whose endpoints live in different shards."""
    a = partition.assignment
    return int(np.sum(a[graph.adjacency.rows] != a[graph.adjacency.cols]))


# ---------------------------------------------------------------------------
# perturbation and synthesis


def inject_noise(graph: Graph, n_nodes=100, edges_per_node=10, seed=0):
    """Append label-noise nodes wired randomly into the graph.

    Each injected node gets a uniformly random label, features copied from a
    random existing node, and `edges_per_node` distinct edges to pre-existing
    nodes. Injected nodes join the train split and are returned as the
    DeleteSet.
    """
    if graph.n_nodes < edges_per_node:
        raise ContractError("graph smaller than edges_per_node")
    if n_nodes == 0:
        return graph, DeleteSet(np.array([], dtype=np.int64))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x401E]))
    n_old = graph.n_nodes
    new_ids = np.arange(n_old, n_old + n_nodes)
    labels = rng.integers(0, graph.n_classes, size=n_nodes)
    donors = rng.integers(0, n_old, size=n_nodes)
    src_extra, dst_extra = [], []
    for nid in new_ids:
        targets = rng.choice(n_old, size=edges_per_node, replace=False)
        src_extra.extend([nid] * edges_per_node)
        dst_extra.extend(targets.tolist())
    adj = graph.adjacency
    src = np.concatenate([adj.rows, np.array(src_extra), np.array(dst_extra)])
    dst = np.concatenate([adj.cols, np.array(dst_extra), np.array(src_extra)])
    n_new = n_old + n_nodes
    new_adj = sparse_from_edges(n_new, src, dst)
    splits = {k: v.copy() for k, v in graph.splits.items()}
    splits["train"] = np.sort(np.concatenate([
        splits.get("train", np.array([], dtype=np.int64)), new_ids,
    ]))
    g = Graph(
        n_new, new_adj,
        np.vstack([graph.features, graph.features[donors]]),
        np.concatenate([graph.labels, labels]),
        graph.n_classes, splits,
    )
    return g, DeleteSet(new_ids)


def synth_graph(seed, n, c, blocks, p_in, p_out) -> Graph:
    """Stochastic-block-model graph: labels = block id mod c, one-hot-ish features."""
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ContractError("need 0 <= p_out <= p_in <= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B3]))
    block = (np.arange(n) * blocks) // n
    upper = np.triu_indices(n, k=1)
    same = block[upper[0]] == block[upper[1]]
    prob = np.where(same, p_in, p_out)
    present = rng.random(upper[0].size) < prob
    src, dst = upper[0][present], upper[1][present]
    adj, _, _ = build_symmetric_adjacency(n, src, dst)
    labels = block % c
    features = np.zeros((n, blocks))
    features[np.arange(n), block] = 1.0
    features += 0.05 * rng.standard_normal((n, blocks))
    return Graph(n, adj, features, labels, c)
