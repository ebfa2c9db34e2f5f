"""Benchmark scenarios: datasets, micro-F1, state persistence, and the
build / unlearn / noise-recovery / strategy-comparison runners.

Real citation datasets are loaded from files when paths are configured.
Without files, deterministic citation-scale surrogates are generated: a
stochastic block model whose communities correlate with labels, plus sparse
bag-of-words features built from overlapping per-class word pools. The
surrogates keep the regime that matters for sharded unlearning: features
alone give a mediocre classifier and homophilous structure closes the gap,
so partition quality is visible in test F1.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import load_store, save_store
from .config import ExperimentConfig
from .engine import (PipelineConfigs, PipelineState, build_pipeline,
                     full_retrain, unlearn)
from .gcn import ShardModel
from .graphs import (DeleteSet, Graph, ValidationError,
                     build_symmetric_adjacency, induce_shards, inject_noise,
                     load_graph, remove_nodes, remove_nodes_from_graph,
                     split_random)
from .numerics import ContractError
from .partition import load_partition, save_partition

SEED_TAG_BENCH = 0xBE9C


def f1_micro(predicted, actual) -> float:
    """Micro-averaged F1 for single-label predictions: correct / total."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.size == 0:
        raise ContractError("f1_micro needs at least one prediction")
    if predicted.shape != actual.shape:
        raise ContractError("prediction/label length mismatch")
    return float(np.mean(predicted == actual))


# ---------------------------------------------------------------------------
# datasets


def citation_surrogate(seed, n, n_classes, n_features, intra_degree,
                       inter_degree, words_per_node, signal_fraction,
                       n_blocks=40, label_alignment=0.6) -> Graph:
    """Citation-network stand-in: community SBM + bag-of-words features.

    Edges follow `n_blocks` communities; labels follow communities only
    partially (each community has a dominant class hit with probability
    `label_alignment`), so communities are label-diverse, as in real
    citation graphs. Each class owns a slice of the vocabulary; a node
    draws `signal_fraction` of its words from its class slice and the rest
    uniformly, so feature-only classification is deliberately imperfect.
    """
    rng = np.random.default_rng(np.random.SeedSequence([SEED_TAG_BENCH, seed]))
    block_of = np.sort(rng.integers(0, n_blocks, size=n))
    dominant = block_of % n_classes
    labels = np.where(rng.random(n) < label_alignment, dominant,
                      rng.integers(0, n_classes, size=n))

    sizes = np.bincount(block_of, minlength=n_blocks)
    p_in = np.minimum(intra_degree / np.maximum(sizes - 1, 1), 1.0)
    p_out = min(inter_degree / max(n - sizes.mean(), 1.0), 1.0)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    src_list, dst_list = [], []
    for b in range(n_blocks):
        lo, hi = starts[b], starts[b + 1]
        size = hi - lo
        if size > 1:
            mask = rng.random((size, size)) < p_in[b]
            iu = np.triu_indices(size, k=1)
            keep = mask[iu]
            src_list.append(lo + iu[0][keep])
            dst_list.append(lo + iu[1][keep])
        for b2 in range(b + 1, n_blocks):
            lo2, hi2 = starts[b2], starts[b2 + 1]
            mask = rng.random((size, hi2 - lo2)) < p_out
            r, c = np.nonzero(mask)
            src_list.append(lo + r)
            dst_list.append(lo2 + c)
    src = np.concatenate(src_list) if src_list else np.empty(0, dtype=np.int64)
    dst = np.concatenate(dst_list) if dst_list else np.empty(0, dtype=np.int64)
    adjacency, _, _ = build_symmetric_adjacency(n, src, dst)

    slice_width = n_features // n_classes
    features = np.zeros((n, n_features))
    n_signal = int(round(words_per_node * signal_fraction))
    for u in range(n):
        lo = labels[u] * slice_width
        own = rng.integers(lo, lo + slice_width, size=n_signal)
        other = rng.integers(0, n_features, size=words_per_node - n_signal)
        features[u, own] = 1.0
        features[u, other] = 1.0
    return Graph(n_nodes=n, adjacency=adjacency, features=features,
                 labels=labels, n_classes=n_classes)


def make_cora_like(seed) -> Graph:
    """Cora-scale surrogate: 2708 nodes, 7 classes, 1433 binary features."""
    return citation_surrogate(seed, n=2708, n_classes=7, n_features=1433,
                              intra_degree=4.5, inter_degree=0.4,
                              words_per_node=18, signal_fraction=0.111,
                              n_blocks=140, label_alignment=0.95)


def make_citeseer_like(seed) -> Graph:
    """Citeseer-scale surrogate: 3327 nodes, 6 classes, 1433 binary features.

    The real dataset has 3703 features; the surrogate reuses the smaller
    vocabulary since feature width only scales cost, not behavior.
    """
    return citation_surrogate(seed, n=3327, n_classes=6, n_features=1433,
                              intra_degree=3.6, inter_degree=0.4,
                              words_per_node=18, signal_fraction=0.111,
                              n_blocks=168, label_alignment=0.95)


def dataset_from_config(config: ExperimentConfig, seed: int) -> Graph:
    kind = config["dataset.kind"]
    if kind == "files":
        graph = load_graph(
            edges_path=config["dataset.edges"],
            features_path=config["dataset.features"],
            labels_path=config["dataset.labels"],
            splits_path=config["dataset.splits"] or None,
        )
        if graph.splits:
            return graph
    elif kind == "cora_like":
        graph = make_cora_like(seed)
    elif kind == "citeseer_like":
        graph = make_citeseer_like(seed)
    else:
        from .graphs import synth_graph
        graph = synth_graph(seed=seed, n=config["dataset.n"],
                            c=config["dataset.classes"],
                            blocks=config["dataset.blocks"],
                            p_in=config["dataset.p_in"],
                            p_out=config["dataset.p_out"])
    ratios = (config["dataset.train_ratio"], config["dataset.val_ratio"],
              config["dataset.test_ratio"])
    return split_random(graph, ratios=ratios, seed=seed)


def pipeline_configs(config: ExperimentConfig, n_shards=None) -> PipelineConfigs:
    pcfg = config.partition_config()
    if n_shards is not None:
        pcfg = replace(pcfg, n_shards=n_shards)
    return PipelineConfigs(partition=pcfg,
                           submodel=config.submodel_config(),
                           aggregator=config.aggregator_config())


def sample_delete_set(graph: Graph, fraction, seed,
                      exclude=None) -> DeleteSet:
    """Uniform sample of floor(fraction * N) not-yet-deleted train nodes."""
    pool = graph.splits["train"]
    if exclude is not None and np.asarray(exclude).size:
        pool = np.setdiff1d(pool, exclude)
    k = int(np.floor(fraction * graph.n_nodes + 1e-9))
    if k > pool.size:
        raise ValidationError("delete fraction exceeds remaining train nodes")
    rng = np.random.default_rng(
        np.random.SeedSequence([SEED_TAG_BENCH, seed, 0xDE1]))
    return DeleteSet(rng.choice(pool, size=k, replace=False))


def evaluate_state(state: PipelineState) -> float:
    """Micro-F1 of fused predictions on the live test nodes."""
    test_ids = state.live_node_ids(state.graph.splits["test"])
    ids, (predicted, _) = state.predict(test_ids)
    return f1_micro(predicted, state.graph.labels[ids])


# ---------------------------------------------------------------------------
# metrics records (line-oriented key=value, blank line between records)


@dataclass
class MetricsRecord:
    run_id: str
    f1: float
    seed: int
    config_hash: str
    timings: dict = field(default_factory=dict)

    def as_lines(self):
        lines = [f"run_id={self.run_id}", f"f1={self.f1:.6f}",
                 f"seed={self.seed}", f"config_hash={self.config_hash}"]
        lines.extend(f"{key}={value:.6f}" for key, value in self.timings.items())
        return lines


def write_records(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write("\n".join(rec if isinstance(rec, list) else rec.as_lines()))
            fh.write("\n\n")


def read_records(path):
    """Parse a records file back into a list of dicts (lossless round-trip)."""
    records, current = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                if current:
                    records.append(current)
                    current = {}
                continue
            key, _, value = line.partition("=")
            current[key] = value
    if current:
        records.append(current)
    return records


def summarize(name, values) -> list:
    values = np.asarray(values, dtype=np.float64)
    return [f"{name}_mean={values.mean():.6f}",
            f"{name}_std={values.std():.6f}",
            f"{name}_min={values.min():.6f}"]


# ---------------------------------------------------------------------------
# pipeline state persistence


def save_state(state: PipelineState, out_dir, config_hash):
    os.makedirs(out_dir, exist_ok=True)
    save_partition(state.partition, os.path.join(out_dir, "partition.txt"))
    untrained = [str(m.shard_id) for m in state.shard_models if m.untrained]
    meta_lines = [
        f"config_hash={config_hash}",
        f"global_seed={state.global_seed}",
        f"strategy={state.partition_strategy}",
        f"n_shards={state.partition.n_shards}",
        "deleted=" + ",".join(str(i) for i in state.deleted),
        "counters=" + ",".join(str(c) for c in state.retrain_counters),
        "untrained=" + ",".join(untrained),
    ]
    with open(os.path.join(out_dir, "state.meta"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(meta_lines) + "\n")
    for model in state.shard_models:
        if model.untrained:
            continue
        save_store(model.params,
                   os.path.join(out_dir, f"shard_{model.shard_id}"),
                   meta={"final_train_loss": repr(model.final_train_loss),
                         "epoch_count": model.epoch_count})
    save_store(state.agg_params, os.path.join(out_dir, "aggregator"))


def load_state(out_dir, config: ExperimentConfig) -> PipelineState:
    meta_path = os.path.join(out_dir, "state.meta")
    if not os.path.exists(meta_path):
        raise ValidationError(f"no pipeline state in {out_dir}")
    meta = {}
    with open(meta_path, encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            meta[key] = value
    if meta["config_hash"] != config.hash():
        raise ContractError(
            f"state in {out_dir} was built from a different configuration "
            f"(hash {meta['config_hash']} != {config.hash()})")
    global_seed = int(meta["global_seed"])
    deleted = np.array([int(x) for x in meta["deleted"].split(",") if x],
                       dtype=np.int64)
    counters = [int(x) for x in meta["counters"].split(",") if x]
    untrained = {int(x) for x in meta["untrained"].split(",") if x}

    graph = dataset_from_config(config, global_seed)
    partition = load_partition(os.path.join(out_dir, "partition.txt"))
    base_shards = induce_shards(graph, partition)
    delete_set = DeleteSet(deleted)
    shards = [remove_nodes(s, delete_set) if deleted.size else s
              for s in base_shards]
    configs = pipeline_configs(config, n_shards=partition.n_shards)
    models = []
    for sid in range(partition.n_shards):
        seed_tuple = (global_seed, sid)
        if sid in untrained:
            models.append(ShardModel(sid, None, seed_tuple, 0, float("nan"),
                                     untrained=True))
            continue
        store, smeta = load_store(os.path.join(out_dir, f"shard_{sid}"))
        models.append(ShardModel(sid, store, seed_tuple,
                                 int(smeta["epoch_count"]),
                                 float(smeta["final_train_loss"])))
    agg_params, _ = load_store(os.path.join(out_dir, "aggregator"))
    return PipelineState(
        graph=graph, partition=partition, base_shards=base_shards,
        shards=shards, shard_models=models, retrain_counters=counters,
        agg_params=agg_params, agg_sample=np.array([], dtype=np.int64),
        configs=configs, global_seed=global_seed, deleted=deleted,
        partition_strategy=meta["strategy"],
    )


# ---------------------------------------------------------------------------
# scenario runners (shared by the CLI and the acceptance tests)


def run_build(config: ExperimentConfig, seed, out_dir, jobs=1):
    """Build the pipeline `run.repetitions` times; persist the first run."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    f1s = []
    for rep in range(config["run.repetitions"]):
        rep_seed = seed + rep
        graph = dataset_from_config(config, rep_seed)
        state, timings = build_pipeline(graph, pipeline_configs(config),
                                        rep_seed,
                                        strategy=config["run.strategy"],
                                        jobs=jobs)
        f1 = evaluate_state(state)
        f1s.append(f1)
        records.append(MetricsRecord(f"build_{rep}", f1, rep_seed,
                                     config.hash(), timings))
        if rep == 0:
            save_state(state, os.path.join(out_dir, "state"), config.hash())
    summary = summarize("f1", f1s)
    write_records(records + [summary], os.path.join(out_dir, "build.metrics"))
    return records


def run_unlearn(config: ExperimentConfig, seed, out_dir, jobs=1,
                request_path=None):
    """Load the persisted pipeline, apply one deletion request, re-evaluate."""
    state = load_state(os.path.join(out_dir, "state"), config)
    if request_path or config["delete.ids_file"]:
        from .engine import load_delete_request
        delete_set = load_delete_request(request_path
                                         or config["delete.ids_file"])
    else:
        delete_set = sample_delete_set(state.graph,
                                       config["delete.fraction"], seed,
                                       exclude=state.deleted)
    state, report = unlearn(state, delete_set, jobs=jobs)
    f1 = evaluate_state(state)
    save_state(state, os.path.join(out_dir, "state"), config.hash())
    record = MetricsRecord("unlearn", f1, seed, config.hash(),
                           {"total_seconds": report.total_seconds,
                            "aggregator_seconds": report.aggregator_seconds})
    report_lines = [f"{k}={v}" for k, v in report.as_records().items()]
    write_records([record, report_lines],
                  os.path.join(out_dir, "unlearn.metrics"))
    return record, report


def run_noise_recovery(config: ExperimentConfig, seed, out_dir, jobs=1):
    """Clean build vs poisoned build vs post-unlearning F1, per repetition."""
    os.makedirs(out_dir, exist_ok=True)
    strategy = config["run.strategy"]
    records = []
    triples = []
    for rep in range(config["run.repetitions"]):
        rep_seed = seed + rep
        clean = dataset_from_config(config, rep_seed)
        state, _ = build_pipeline(clean, pipeline_configs(config), rep_seed,
                                  strategy=strategy, jobs=jobs)
        f1_clean = evaluate_state(state)

        poisoned, noise_ids = inject_noise(
            clean, n_nodes=config["noise.nodes"],
            edges_per_node=config["noise.edges_per_node"], seed=rep_seed)
        state, _ = build_pipeline(poisoned, pipeline_configs(config), rep_seed,
                                  strategy=strategy, jobs=jobs)
        f1_poisoned = evaluate_state(state)

        if noise_ids.node_ids.size:
            state, _ = unlearn(state, noise_ids, jobs=jobs)
        f1_unlearned = evaluate_state(state)

        triples.append((f1_clean, f1_poisoned, f1_unlearned))
        for phase, f1 in zip(("clean", "poisoned", "unlearned"),
                             triples[-1]):
            records.append(MetricsRecord(f"{phase}_{rep}", f1, rep_seed,
                                         config.hash()))
    arr = np.asarray(triples)
    summary = (summarize("f1_clean", arr[:, 0])
               + summarize("f1_poisoned", arr[:, 1])
               + summarize("f1_unlearned", arr[:, 2]))
    write_records(records + [summary],
                  os.path.join(out_dir, "noise_recovery.metrics"))
    return records, arr


def run_bench_compare(config: ExperimentConfig, seed, out_dir, jobs=1):
    """Full retrain vs random sharding vs trained partitioner, same seeds.

    The retrain baseline is the single-shard pipeline; its "unlearn time" is
    a from-scratch rebuild on the reduced graph. Sharded strategies time an
    actual unlearn call. Returns (records, {strategy: (f1s, times)}).
    """
    os.makedirs(out_dir, exist_ok=True)
    records = []
    results = {name: ([], []) for name in ("retrain", "random", "trained")}
    for rep in range(config["run.repetitions"]):
        rep_seed = seed + rep
        graph = dataset_from_config(config, rep_seed)
        delete_set = sample_delete_set(graph, config["delete.fraction"],
                                       rep_seed)

        for name in ("random", "trained"):
            state, _ = build_pipeline(graph, pipeline_configs(config),
                                      rep_seed, strategy=name, jobs=jobs)
            state, report = unlearn(state, delete_set, jobs=jobs)
            f1 = evaluate_state(state)
            results[name][0].append(f1)
            results[name][1].append(report.total_seconds)
            records.append(MetricsRecord(
                f"{name}_{rep}", f1, rep_seed, config.hash(),
                {"unlearn_seconds": report.total_seconds}))

        reduced, _ = remove_nodes_from_graph(graph, delete_set)
        t0 = time.perf_counter()
        state, _ = full_retrain(reduced, pipeline_configs(config, n_shards=1),
                                rep_seed, strategy="random", jobs=jobs)
        retrain_seconds = time.perf_counter() - t0
        f1 = evaluate_state(state)
        results["retrain"][0].append(f1)
        results["retrain"][1].append(retrain_seconds)
        records.append(MetricsRecord(
            f"retrain_{rep}", f1, rep_seed, config.hash(),
            {"unlearn_seconds": retrain_seconds}))

    summary = []
    for name, (f1s, times) in results.items():
        summary.extend(summarize(f"{name}_f1", f1s))
        summary.extend(summarize(f"{name}_unlearn_seconds", times))
    write_records(records + [summary],
                  os.path.join(out_dir, "bench_compare.metrics"))
    return records, results
