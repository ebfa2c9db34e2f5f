import numpy as np
import pytest

from graphunlearn.graphs import (Graph, build_symmetric_adjacency,
                                 split_random, synth_graph)


def symmetric_adjacency(n, src, dst):
    adj, _, _ = build_symmetric_adjacency(n, np.asarray(src), np.asarray(dst))
    return adj


@pytest.fixture
def path4_graph():
    """Four nodes in a path 0-1-2-3, labels [0,1,0,1], one-hot-ish features."""
    adj = symmetric_adjacency(4, [0, 1, 2], [1, 2, 3])
    features = np.eye(4)
    return Graph(n_nodes=4, adjacency=adj, features=features,
                 labels=np.array([0, 1, 0, 1]), n_classes=2)


@pytest.fixture
def small_graph():
    g = synth_graph(seed=1, n=60, c=3, blocks=3, p_in=0.2, p_out=0.02)
    return split_random(g, ratios=(0.7, 0.2, 0.1), seed=1)


def random_graph(rng, n=None, c=None, with_splits=False):
    """A random small graph for property-style loops over many instances."""
    n = n or int(rng.integers(5, 30))
    c = c or int(rng.integers(2, 5))
    density = rng.uniform(0.05, 0.3)
    mask = rng.random((n, n)) < density
    iu = np.triu_indices(n, k=1)
    keep = mask[iu]
    adj = symmetric_adjacency(n, iu[0][keep], iu[1][keep])
    features = rng.standard_normal((n, int(rng.integers(3, 8))))
    labels = rng.integers(0, c, size=n)
    g = Graph(n_nodes=n, adjacency=adj, features=features, labels=labels,
              n_classes=c)
    if with_splits:
        g = split_random(g, ratios=(0.7, 0.2, 0.1),
                         seed=int(rng.integers(0, 1000)))
    return g


def random_soft_assignment(rng, n, s):
    raw = rng.random((n, s)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)
