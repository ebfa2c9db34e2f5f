import os

import numpy as np
import pytest

from graphunlearn.bench import (MetricsRecord, citation_surrogate,
                                dataset_from_config, evaluate_state, f1_micro,
                                load_state, pipeline_configs, read_records,
                                run_bench_compare, run_build,
                                run_noise_recovery, run_unlearn,
                                sample_delete_set, save_state, summarize,
                                write_records)
from graphunlearn.cli import main
from graphunlearn.config import (ConfigError, ExperimentConfig, load_config,
                                 parse_config_text)
from graphunlearn.engine import build_pipeline
from graphunlearn.numerics import ContractError


SMALL = """
dataset.kind = synth
dataset.n = 150
dataset.classes = 3
dataset.blocks = 3
dataset.p_in = 0.1
dataset.p_out = 0.01
partition.shards = 3
partition.epochs = 3
partition.hidden = 8
submodel.epochs = 5
submodel.hidden = 8
aggregator.sample_size = 40
aggregator.epochs = 2
delete.fraction = 0.02
run.repetitions = 1
"""


def small_config(**extra):
    config = parse_config_text(SMALL)
    config.values.update(extra)
    return config


class TestF1:
    def test_known_values(self):
        assert f1_micro([1, 2, 3], [1, 2, 3]) == 1.0
        assert f1_micro([1, 1, 1], [2, 2, 2]) == 0.0
        assert f1_micro(np.arange(10), np.r_[np.arange(7), 99, 99, 99]) == 0.7

    def test_empty_or_mismatched_rejected(self):
        with pytest.raises(ContractError):
            f1_micro([], [])
        with pytest.raises(ContractError):
            f1_micro([1], [1, 2])


class TestConfigParsing:
    def test_defaults_applied(self):
        config = parse_config_text("")
        assert config["partition.shards"] == 20
        assert config["delete.fraction"] == 0.005
        assert config["aggregator.sample_size"] is None

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("partition.does_not_exist = 3")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("partition.shards = 2\npartition.shards = 3")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("partition.shards = many")

    def test_invalid_nested_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("partition.shards = 0")
        with pytest.raises(ConfigError):
            parse_config_text("aggregator.mask_rate = 1.5")

    def test_comments_and_blanks_ignored(self):
        config = parse_config_text("# comment\n\npartition.shards = 5 # five")
        assert config["partition.shards"] == 5

    def test_hash_ignores_formatting(self):
        a = parse_config_text("partition.shards = 5")
        b = parse_config_text("# hi\npartition.shards   =   5\n")
        assert a.hash() == b.hash()
        c = parse_config_text("partition.shards = 6")
        assert a.hash() != c.hash()

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.cfg"))


class TestRecords:
    def test_round_trip(self, tmp_path):
        records = [
            MetricsRecord("a", 0.5, 1, "deadbeef", {"total_seconds": 1.25}),
            MetricsRecord("b", 0.75, 2, "deadbeef"),
        ]
        path = str(tmp_path / "out.metrics")
        write_records(records, path)
        loaded = read_records(path)
        assert loaded[0]["run_id"] == "a"
        assert float(loaded[0]["f1"]) == 0.5
        assert float(loaded[0]["total_seconds"]) == 1.25
        assert loaded[1]["run_id"] == "b"

    def test_summarize_values(self):
        lines = summarize("f1", [0.5, 0.7])
        assert "f1_mean=0.600000" in lines
        assert "f1_min=0.500000" in lines


class TestSurrogates:
    def test_generation_is_deterministic(self):
        a = citation_surrogate(3, n=300, n_classes=4, n_features=50,
                               intra_degree=3.0, inter_degree=0.5,
                               words_per_node=8, signal_fraction=0.4,
                               n_blocks=10)
        b = citation_surrogate(3, n=300, n_classes=4, n_features=50,
                               intra_degree=3.0, inter_degree=0.5,
                               words_per_node=8, signal_fraction=0.4,
                               n_blocks=10)
        assert a.adjacency == b.adjacency
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.features, b.features)

    def test_degree_near_target(self):
        g = citation_surrogate(0, n=1000, n_classes=5, n_features=50,
                               intra_degree=3.0, inter_degree=1.0,
                               words_per_node=8, signal_fraction=0.4,
                               n_blocks=20)
        assert g.degrees.mean() == pytest.approx(4.0, abs=0.8)

    def test_dataset_from_config_kinds(self):
        g = dataset_from_config(small_config(), seed=0)
        assert g.n_nodes == 150
        assert set(g.splits) == {"train", "val", "test"}


class TestDeleteSampling:
    def test_size_and_train_membership(self):
        g = dataset_from_config(small_config(), seed=1)
        ds = sample_delete_set(g, 0.02, seed=1)
        assert ds.size == 3  # floor(0.02 * 150)
        assert np.all(np.isin(ds.node_ids, g.splits["train"]))

    def test_exclude_respected(self):
        g = dataset_from_config(small_config(), seed=1)
        first = sample_delete_set(g, 0.02, seed=1)
        second = sample_delete_set(g, 0.02, seed=2, exclude=first.node_ids)
        assert not np.intersect1d(first.node_ids, second.node_ids).size


class TestStatePersistence:
    def test_save_load_round_trip(self, tmp_path):
        config = small_config()
        g = dataset_from_config(config, seed=4)
        state, _ = build_pipeline(g, pipeline_configs(config), 4,
                                  strategy="random")
        save_state(state, str(tmp_path / "state"), config.hash())
        loaded = load_state(str(tmp_path / "state"), config)
        assert np.array_equal(loaded.partition.assignment,
                              state.partition.assignment)
        assert evaluate_state(loaded) == evaluate_state(state)

    def test_config_hash_mismatch_refused(self, tmp_path):
        config = small_config()
        g = dataset_from_config(config, seed=4)
        state, _ = build_pipeline(g, pipeline_configs(config), 4,
                                  strategy="random")
        save_state(state, str(tmp_path / "state"), config.hash())
        other = small_config()
        other.values["submodel.epochs"] = 6
        with pytest.raises(ContractError):
            load_state(str(tmp_path / "state"), other)


class TestScenarioRunners:
    def test_build_then_unlearn_then_verify(self, tmp_path):
        config = small_config()
        out = str(tmp_path / "run")
        records = run_build(config, seed=2, out_dir=out)
        assert len(records) == 1
        assert 0.0 <= records[0].f1 <= 1.0
        record, report = run_unlearn(config, seed=2, out_dir=out)
        assert report.request_size == 3
        assert report.total_seconds > 0
        # reloaded post-unlearn state replays to bitwise-identical models
        from graphunlearn.engine import verify_exactness
        state = load_state(os.path.join(out, "state"), config)
        assert all(d == 0.0 for d in verify_exactness(state).values())

    def test_noise_recovery_zero_nodes_identical(self, tmp_path):
        config = small_config(**{"noise.nodes": 0})
        _, triples = run_noise_recovery(config, seed=3,
                                        out_dir=str(tmp_path / "nr"))
        clean, poisoned, unlearned = triples[0]
        assert clean == poisoned == unlearned

    def test_bench_compare_emits_parseable_table(self, tmp_path):
        config = small_config()
        out = str(tmp_path / "bc")
        _, results = run_bench_compare(config, seed=5, out_dir=out)
        assert set(results) == {"retrain", "random", "trained"}
        loaded = read_records(os.path.join(out, "bench_compare.metrics"))
        by_id = {r["run_id"]: r for r in loaded if "run_id" in r}
        for name, (f1s, times) in results.items():
            rec = by_id[f"{name}_0"]
            assert float(rec["f1"]) == pytest.approx(f1s[0], abs=5e-7)
            assert float(rec["unlearn_seconds"]) == pytest.approx(
                times[0], abs=5e-7)


class TestCli:
    def test_full_command_cycle(self, tmp_path):
        cfg_path = str(tmp_path / "exp.cfg")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(SMALL)
        out = str(tmp_path / "run")
        base = ["--config", cfg_path, "--seed", "3", "--out", out]
        assert main(["build", *base]) == 0
        assert main(["unlearn", *base]) == 0
        assert main(["verify-exactness", *base]) == 0

    def test_exit_codes(self, tmp_path):
        bad_cfg = str(tmp_path / "bad.cfg")
        with open(bad_cfg, "w", encoding="utf-8") as fh:
            fh.write("nope.nope = 1\n")
        assert main(["build", "--config", bad_cfg,
                     "--out", str(tmp_path / "x")]) == 2
        # missing persisted state -> data error
        cfg_path = str(tmp_path / "ok.cfg")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(SMALL)
        assert main(["unlearn", "--config", cfg_path,
                     "--out", str(tmp_path / "missing")]) == 3
        # contract violation at runtime -> runtime error
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(SMALL.replace("aggregator.sample_size = 40",
                                   "aggregator.sample_size = 10000"))
        assert main(["build", "--config", cfg_path,
                     "--out", str(tmp_path / "y")]) == 4
