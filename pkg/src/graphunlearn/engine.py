"""Unlearning engine: locate affected shards, partially retrain, rebuild the
aggregator, and verify removal exactness against from-scratch retraining.

The partition is frozen after the initial build; deletions shrink shards but
never re-partition. Every stochastic choice is governed by a seed lineage
(global seed, shard id, retrain counter), which makes the unlearned-vs-
retrained comparison bitwise instead of statistical.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .aggregate import AggTrainConfig, predict, train_aggregator
from .checkpoint import max_param_delta
from .gcn import TrainConfig, train_submodel
from .graphs import (DeleteSet, Graph, Partition, ValidationError,
                     induce_shards, remove_nodes)
from .numerics import ContractError
from .partition import (PartitionConfig, infer_partition, psi_forward,
                        random_partition, train_partitioner)


def _mix_seed(*parts) -> int:
    """Collapse an integer lineage into one RNG seed, deterministically."""
    flat = []
    for p in parts:
        flat.extend(int(x) for x in np.atleast_1d(np.asarray(p, dtype=np.int64)))
    return int(np.random.SeedSequence(flat).generate_state(1)[0])


@dataclass
class PipelineConfigs:
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    submodel: TrainConfig = field(default_factory=TrainConfig)
    aggregator: AggTrainConfig = field(default_factory=AggTrainConfig)


@dataclass
class UnlearnReport:
    request_size: int
    affected_shards: list
    per_shard_seconds: dict
    aggregator_seconds: float
    total_seconds: float
    shards_untouched: int

    def as_records(self) -> dict:
        rec = {
            "request_size": self.request_size,
            "affected_shards": ",".join(str(s) for s in self.affected_shards),
            "aggregator_seconds": f"{self.aggregator_seconds:.6f}",
            "total_seconds": f"{self.total_seconds:.6f}",
            "shards_untouched": self.shards_untouched,
        }
        for sid, sec in self.per_shard_seconds.items():
            rec[f"shard_{sid}_seconds"] = f"{sec:.6f}"
        return rec


@dataclass
class PipelineState:
    graph: Graph                 # original ids; deleted nodes' data never read
    partition: Partition
    base_shards: list            # as induced at build time
    shards: list                 # current, post-deletion
    shard_models: list
    retrain_counters: list
    agg_params: object
    agg_sample: np.ndarray
    configs: PipelineConfigs
    global_seed: int
    deleted: np.ndarray = field(
        default_factory=lambda: np.array([], dtype=np.int64))
    partition_strategy: str = "trained"

    def eligible_train_ids(self) -> np.ndarray:
        return np.setdiff1d(self.graph.splits["train"], self.deleted)

    def live_node_ids(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        return ids[~np.isin(ids, self.deleted)]

    def predict(self, query_ids):
        query_ids = self.live_node_ids(query_ids)
        return query_ids, predict(self.shard_models, self.shards, self.graph,
                                  self.partition, self.agg_params, query_ids)


def _retrain_task(args):
    shard, config = args
    start = time.perf_counter()
    model = train_submodel(shard, config)
    return shard.shard_id, model, time.perf_counter() - start


def _train_all_shards(shards, config, jobs=1):
    tasks = [(s, config) for s in shards]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_retrain_task, tasks))
    else:
        results = [_retrain_task(t) for t in tasks]
    models = {sid: m for sid, m, _ in results}
    seconds = {sid: sec for sid, _, sec in results}
    return models, seconds


def _aggregator_seed(global_seed) -> int:
    # Constant per pipeline: refits after unlearning reuse the same init and
    # sampling streams, so an empty deletion reproduces the aggregator
    # bit-for-bit and before/after comparisons differ only through the data.
    return _mix_seed(global_seed, 0xA99)


def _fit_aggregator(state: PipelineState):
    cfg = replace(state.configs.aggregator,
                  seed=_aggregator_seed(state.global_seed))
    params, sample, _ = train_aggregator(
        state.shard_models, state.shards, state.graph, state.partition,
        cfg, eligible_train_ids=state.eligible_train_ids())
    state.agg_params = params
    state.agg_sample = sample
    return state


def build_pipeline(graph: Graph, configs: PipelineConfigs, global_seed: int,
                   strategy: str = "trained", partition: Partition | None = None,
                   jobs: int = 1):
    """Partition, train all sub-models, and fit the aggregator.

    strategy: 'trained' (property-aware partition network), 'random' (SISA
    baseline), or 'given' with an explicit partition. Returns
    (PipelineState, per-stage wall-clock dict).
    """
    if "train" not in graph.splits:
        raise ContractError("graph needs train/val/test splits")
    timings = {}
    t0 = time.perf_counter()
    if strategy == "trained":
        pcfg = replace(configs.partition,
                       seed=_mix_seed(global_seed, 0x917))
        psi_params, _ = train_partitioner(graph, pcfg)
        partition = infer_partition(psi_forward(graph, psi_params))
    elif strategy == "random":
        partition = random_partition(graph.n_nodes, configs.partition.n_shards,
                                     seed=_mix_seed(global_seed, 0x917))
    elif strategy == "given":
        if partition is None:
            raise ContractError("strategy 'given' needs a partition")
    else:
        raise ContractError(f"unknown partition strategy {strategy!r}")
    timings["partition_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    shards = induce_shards(graph, partition)
    scfg = replace(configs.submodel, seed=global_seed)
    counters = [0] * partition.n_shards
    models, per_shard = _train_all_shards(shards, scfg, jobs)
    shard_models = [models[s] for s in range(partition.n_shards)]
    timings["shard_training_seconds"] = time.perf_counter() - t0
    timings["shard_training_makespan_seconds"] = max(per_shard.values(),
                                                     default=0.0)

    state = PipelineState(
        graph=graph, partition=partition,
        base_shards=shards, shards=list(shards),
        shard_models=shard_models, retrain_counters=counters,
        agg_params=None, agg_sample=np.array([], dtype=np.int64),
        configs=configs, global_seed=global_seed,
        partition_strategy=strategy,
    )
    t0 = time.perf_counter()
    _fit_aggregator(state)
    timings["aggregator_seconds"] = time.perf_counter() - t0
    timings["total_seconds"] = sum(
        timings[k] for k in
        ("partition_seconds", "shard_training_seconds", "aggregator_seconds"))
    return state, timings


def locate_affected(partition: Partition, delete_set: DeleteSet) -> set:
    ids = delete_set.node_ids
    if ids.size and (ids.min() < 0 or ids.max() >= partition.assignment.size):
        raise ContractError("delete id out of range")
    return set(int(s) for s in np.unique(partition.assignment[ids]))


def unlearn(state: PipelineState, delete_set: DeleteSet, jobs: int = 1):
    """Remove nodes exactly by retraining only the shards that held them.

    Unaffected sub-models are untouched; the aggregator is always refit from
    a fresh seeded initialization on a sample that excludes deleted nodes.
    """
    ids = delete_set.node_ids
    if ids.size and (ids.min() < 0 or ids.max() >= state.graph.n_nodes):
        raise ValidationError("delete id out of range")
    if np.intersect1d(ids, state.deleted).size:
        raise ContractError("node deleted twice")
    if np.setdiff1d(ids, state.graph.splits["train"]).size:
        raise ValidationError("delete set must be a subset of train nodes")

    t_start = time.perf_counter()
    affected = sorted(locate_affected(state.partition, delete_set))
    state.deleted = np.union1d(state.deleted, ids)

    retrain_shards = []
    for sid in affected:
        state.shards[sid] = remove_nodes(state.shards[sid], delete_set)
        state.retrain_counters[sid] += 1
        retrain_shards.append(state.shards[sid])
    scfg = replace(state.configs.submodel, seed=state.global_seed)
    models, per_shard = _train_all_shards(retrain_shards, scfg, jobs)
    for sid, model in models.items():
        state.shard_models[sid] = model

    t_agg = time.perf_counter()
    _fit_aggregator(state)
    agg_seconds = time.perf_counter() - t_agg

    report = UnlearnReport(
        request_size=int(ids.size),
        affected_shards=affected,
        per_shard_seconds=per_shard,
        aggregator_seconds=agg_seconds,
        total_seconds=time.perf_counter() - t_start,
        shards_untouched=state.partition.n_shards - len(affected),
    )
    return state, report


def full_retrain(graph_minus_deletes: Graph, configs: PipelineConfigs,
                 global_seed: int, strategy: str = "trained", jobs: int = 1):
    """From-scratch rebuild on the reduced graph: the wall-clock baseline."""
    return build_pipeline(graph_minus_deletes, configs, global_seed,
                          strategy=strategy, jobs=jobs)


def verify_exactness(state: PipelineState) -> dict:
    """Retrain every shard from scratch with its recorded seed lineage and
    report the max parameter delta per shard (0.0 means bitwise equal)."""
    delete_set = DeleteSet(state.deleted)
    scfg = replace(state.configs.submodel, seed=state.global_seed)
    deltas = {}
    for sid in range(state.partition.n_shards):
        expected_shard = remove_nodes(state.base_shards[sid], delete_set)
        reference = train_submodel(expected_shard, scfg)
        current = state.shard_models[sid]
        if reference.untrained or current.untrained:
            deltas[sid] = 0.0 if reference.untrained == current.untrained \
                else float("inf")
        else:
            deltas[sid] = max_param_delta(reference.params, current.params)
    return deltas


def load_delete_request(path) -> DeleteSet:
    """Unlearn request file: one node id per line."""
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                ids.append(int(line))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: bad node id") from exc
    return DeleteSet(np.array(ids, dtype=np.int64))
