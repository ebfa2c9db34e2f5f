import numpy as np
import pytest

from graphunlearn import numerics as nm
from graphunlearn.numerics import ContractError, ParamStore, Tensor, gradients
from graphunlearn.partition import (PartitionConfig, infer_partition,
                                    init_psi_params, load_partition,
                                    loss_part, loss_sem, loss_struct,
                                    loss_time, psi_forward, random_partition,
                                    save_partition, train_partitioner)
from graphunlearn.reference import (assert_grads_close, finite_diff,
                                    oracle_loss_sem, oracle_loss_struct,
                                    oracle_loss_time)

from conftest import random_graph, random_soft_assignment


class TestLossesAgainstOracles:
    @pytest.mark.parametrize("seed", range(10))
    def test_vectorized_losses_match_loop_oracles(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng)
        p = random_soft_assignment(rng, g.n_nodes, int(rng.integers(2, 6)))
        tp = nm.constant(p)
        assert loss_time(tp, g).item() == pytest.approx(
            oracle_loss_time(p, g), abs=1e-10)
        assert loss_struct(tp, g).item() == pytest.approx(
            oracle_loss_struct(p, g), abs=1e-10)
        assert loss_sem(tp, g).item() == pytest.approx(
            oracle_loss_sem(p, g), abs=1e-10)

    def test_hand_values_on_split_path(self, path4_graph):
        p = nm.constant([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        assert loss_time(p, path4_graph).item() == pytest.approx(2.0)
        assert loss_struct(p, path4_graph).item() == pytest.approx(2.0 / 3.0)
        assert loss_sem(p, path4_graph).item() == pytest.approx(np.log(2.0))


class TestGradientChecks:
    @pytest.mark.parametrize("seed", range(5))
    def test_combined_loss_gradient(self, seed):
        rng = np.random.default_rng(100 + seed)
        g = random_graph(rng)
        config = PartitionConfig(n_shards=3, hidden=6, seed=seed,
                                 lambda_time=0.1, lambda_sem=0.1,
                                 weight_decay=0.01)
        params = init_psi_params(g.features.shape[1], config)

        def loss_fn():
            return loss_part(psi_forward(g, params), g, config, params)

        analytic = gradients(loss_fn(), params)
        numeric = finite_diff(lambda: loss_fn().item(), params)
        assert_grads_close(analytic, numeric)


class TestTraining:
    def test_training_is_deterministic(self, small_graph):
        config = PartitionConfig(n_shards=4, hidden=8, epochs=5, seed=3)
        pa, ta = train_partitioner(small_graph, config)
        pb, tb = train_partitioner(small_graph, config)
        assert ta == tb
        for name in pa.names():
            assert np.array_equal(pa[name].data, pb[name].data)

    def test_loss_decreases(self, small_graph):
        config = PartitionConfig(n_shards=4, hidden=16, epochs=20, seed=0,
                                 lr=3e-3)
        _, trace = train_partitioner(small_graph, config)
        assert trace[-1] < trace[0]

    def test_single_shard_struct_loss_is_zero(self, small_graph):
        p = nm.constant(np.ones((small_graph.n_nodes, 1)))
        assert loss_struct(p, small_graph).item() == pytest.approx(0.0)

    def test_sem_sign_flips_contribution(self, small_graph):
        p = nm.constant(random_soft_assignment(
            np.random.default_rng(0), small_graph.n_nodes, 4))
        reward = PartitionConfig(n_shards=4, sem_sign=-1, lambda_time=0.0,
                                 lambda_sem=1.0)
        penalty = PartitionConfig(n_shards=4, sem_sign=1, lambda_time=0.0,
                                  lambda_sem=1.0)
        base = loss_struct(p, small_graph).item()
        sem = loss_sem(p, small_graph).item()
        assert loss_part(p, small_graph, reward).item() == pytest.approx(
            base - sem)
        assert loss_part(p, small_graph, penalty).item() == pytest.approx(
            base + sem)


class TestInference:
    def test_argmax_with_ties_to_lowest_index(self):
        p = np.array([[0.5, 0.5], [0.4, 0.6]])
        part = infer_partition(p)
        assert np.array_equal(part.assignment, [0, 1])

    def test_random_partition_covers_range(self):
        part = random_partition(1000, 7, seed=5)
        assert np.array_equal(np.unique(part.assignment), np.arange(7))
        again = random_partition(1000, 7, seed=5)
        assert np.array_equal(part.assignment, again.assignment)

    def test_partition_file_round_trip(self, tmp_path):
        part = random_partition(50, 6, seed=1)
        path = str(tmp_path / "partition.txt")
        save_partition(part, path)
        loaded = load_partition(path)
        assert loaded.n_shards == 6
        assert np.array_equal(loaded.assignment, part.assignment)
