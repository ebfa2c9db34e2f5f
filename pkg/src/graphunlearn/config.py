"""Experiment configuration: a line-oriented `section.key = value` text format
with a fixed schema, typed defaults, and a content hash recorded in artifacts.

Unknown keys are errors, so a typo'd option can never silently fall back to a
default. The hash covers the effective (post-default) configuration, which
makes artifacts from two textually different but equivalent files compatible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .aggregate import AggTrainConfig
from .gcn import TrainConfig
from .numerics import ContractError
from .partition import PartitionConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.lower() in ("", "none", "auto") else int(text)


# key -> (parser, default). The parsed dict always contains every key.
SCHEMA = {
    "dataset.kind": (str, "cora_like"),       # cora_like|citeseer_like|synth|files
    "dataset.edges": (str, ""),
    "dataset.features": (str, ""),
    "dataset.labels": (str, ""),
    "dataset.splits": (str, ""),
    "dataset.n": (int, 200),
    "dataset.classes": (int, 4),
    "dataset.blocks": (int, 4),
    "dataset.p_in": (float, 0.08),
    "dataset.p_out": (float, 0.005),
    "dataset.train_ratio": (float, 0.7),
    "dataset.val_ratio": (float, 0.2),
    "dataset.test_ratio": (float, 0.1),

    "partition.shards": (int, 20),
    "partition.hidden": (int, 64),
    "partition.lambda_time": (float, 1e-3),
    "partition.lambda_sem": (float, 3.0),
    "partition.weight_decay": (float, 1e-5),
    "partition.lr": (float, 3e-3),
    "partition.epochs": (int, 100),
    "partition.sem_sign": (int, -1),

    "submodel.epochs": (int, 100),
    "submodel.lr": (float, 1e-2),
    "submodel.weight_decay": (float, 1e-5),
    "submodel.hidden": (int, 64),

    "aggregator.sample_size": (_opt_int, None),
    "aggregator.temperature": (float, 0.5),
    "aggregator.lambda_contra": (float, 1e-4),
    "aggregator.lambda_recon": (float, 1e-4),
    "aggregator.weight_decay": (float, 1e-5),
    "aggregator.lr": (float, 1e-2),
    "aggregator.epochs": (int, 20),
    "aggregator.warmup_epochs": (int, 40),
    "aggregator.proj_dim": (_opt_int, None),
    "aggregator.mask_rate": (float, 0.5),
    "aggregator.paper_literal_infonce": (_bool, False),
    "aggregator.paper_literal_triplet": (_bool, False),

    "delete.fraction": (float, 0.005),
    "delete.ids_file": (str, ""),

    "noise.nodes": (int, 100),
    "noise.edges_per_node": (int, 10),

    "run.repetitions": (int, 1),
    "run.strategy": (str, "trained"),          # trained|random
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {key: default for key, (_, default) in SCHEMA.items()}
        merged.update(self.values)
        self.values = merged
        self._validate()

    def _validate(self):
        v = self.values
        if v["dataset.kind"] not in ("cora_like", "citeseer_like", "synth",
                                     "files"):
            raise ConfigError(f"unknown dataset.kind {v['dataset.kind']!r}")
        if v["dataset.kind"] == "files":
            for key in ("dataset.edges", "dataset.features", "dataset.labels"):
                if not v[key]:
                    raise ConfigError(f"dataset.kind=files requires {key}")
        if not (0.0 <= v["delete.fraction"] < 1.0):
            raise ConfigError("delete.fraction must be in [0, 1)")
        if v["run.repetitions"] < 1:
            raise ConfigError("run.repetitions must be >= 1")
        if v["run.strategy"] not in ("trained", "random"):
            raise ConfigError(f"unknown run.strategy {v['run.strategy']!r}")
        ratios = (v["dataset.train_ratio"], v["dataset.val_ratio"],
                  v["dataset.test_ratio"])
        if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError("dataset split ratios must be >= 0 and sum to 1")
        try:
            self.partition_config()
            self.submodel_config()
            self.aggregator_config()
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def __getitem__(self, key):
        return self.values[key]

    def partition_config(self, seed=0) -> PartitionConfig:
        v = self.values
        return PartitionConfig(
            n_shards=v["partition.shards"], hidden=v["partition.hidden"],
            lambda_time=v["partition.lambda_time"],
            lambda_sem=v["partition.lambda_sem"],
            weight_decay=v["partition.weight_decay"],
            lr=v["partition.lr"], epochs=v["partition.epochs"],
            seed=seed, sem_sign=v["partition.sem_sign"],
        )

    def submodel_config(self, seed=0) -> TrainConfig:
        v = self.values
        return TrainConfig(epochs=v["submodel.epochs"], lr=v["submodel.lr"],
                           weight_decay=v["submodel.weight_decay"],
                           hidden=v["submodel.hidden"], seed=seed)

    def aggregator_config(self, seed=0) -> AggTrainConfig:
        v = self.values
        return AggTrainConfig(
            sample_size=v["aggregator.sample_size"],
            temperature=v["aggregator.temperature"],
            lambda_contra=v["aggregator.lambda_contra"],
            lambda_recon=v["aggregator.lambda_recon"],
            weight_decay=v["aggregator.weight_decay"],
            lr=v["aggregator.lr"], epochs=v["aggregator.epochs"],
            warmup_epochs=v["aggregator.warmup_epochs"],
            proj_dim=v["aggregator.proj_dim"],
            mask_rate=v["aggregator.mask_rate"], seed=seed,
            paper_literal_infonce=v["aggregator.paper_literal_infonce"],
            paper_literal_triplet=v["aggregator.paper_literal_triplet"],
        )

    def hash(self) -> str:
        lines = "".join(f"{k}={self.values[k]!r}\n" for k in sorted(self.values))
        return hashlib.sha256(lines.encode("utf-8")).hexdigest()[:16]


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: "
                              f"{value!r}") from exc
    try:
        return ExperimentConfig(values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))
