"""Slow loop-based reference implementations used to pin down vectorized code.

Edge counts follow the adjacency-entry convention: every quantity is summed
over ordered (row, col) entries, so an undirected edge inside a shard counts
twice and a cut edge counts once per direction. These run only on tiny
instances; clarity over speed throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ContractError, ParamStore

EPS_DENOM = 1e-12


@dataclass
class ShardStats:
    exp_nodes: float
    exp_edges: float
    exp_cut: float
    exp_degree_sum: float
    exp_label_counts: np.ndarray


def _check_row_stochastic(p):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ContractError("assignment matrix must be 2-D")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError("assignment matrix rows must sum to 1")
    return p


def expected_stats(p, graph) -> list:
    """Per-shard probabilistic statistics of a soft assignment, by explicit loops."""
    p = _check_row_stochastic(p)
    n, s = p.shape
    if n != graph.n_nodes:
        raise ContractError("assignment rows must match node count")
    deg = graph.degrees
    stats = []
    entries = list(zip(graph.adjacency.rows, graph.adjacency.cols,
                       graph.adjacency.vals))
    for i in range(s):
        exp_nodes = 0.0
        for j in range(n):
            exp_nodes += p[j, i]
        exp_edges = 0.0
        exp_cut = 0.0
        for j, k, w in entries:
            exp_edges += w * p[j, i] * p[k, i]
            exp_cut += w * p[j, i] * (1.0 - p[k, i])
        exp_degree_sum = 0.0
        for j in range(n):
            exp_degree_sum += p[j, i] * deg[j]
        counts = np.zeros(graph.n_classes)
        for k in range(n):
            counts[graph.labels[k]] += p[k, i]
        stats.append(ShardStats(exp_nodes, exp_edges, exp_cut,
                                exp_degree_sum, counts))
    return stats


def oracle_loss_time(p, graph) -> float:
    """Expected retraining cost: sum_i (E|V_i|/N) * E|E_i|."""
    stats = expected_stats(p, graph)
    total = 0.0
    for st in stats:
        total += (st.exp_nodes / graph.n_nodes) * st.exp_edges
    return total


def oracle_loss_struct(p, graph) -> float:
    """Normalized cut as a ratio of expectations, per shard."""
    stats = expected_stats(p, graph)
    total = 0.0
    for st in stats:
        total += st.exp_cut / max(st.exp_degree_sum, EPS_DENOM)
    return total


def oracle_loss_sem(p, graph) -> float:
    """Mean per-shard entropy of the expected label distribution (natural log)."""
    stats = expected_stats(p, graph)
    s = len(stats)
    total = 0.0
    for st in stats:
        denom = max(st.exp_nodes, EPS_DENOM)
        for count in st.exp_label_counts:
            prob = count / denom
            total += -prob * np.log(max(prob, EPS_DENOM))
    return total / s


def finite_diff(loss_fn, params: ParamStore, step=1e-5) -> dict:
    """Central finite differences of loss_fn() w.r.t. every parameter entry."""
    grads = {}
    for name, tensor in params.params.items():
        arr = tensor.data
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            hi = float(loss_fn())
            flat[idx] = orig - step
            lo = float(loss_fn())
            flat[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise ContractError("non-finite loss in finite differences")
            gflat[idx] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, abs_floor=1e-6):
    """Raise AssertionError where gradients disagree beyond tolerance."""
    for name in numeric:
        a, b = analytic[name], numeric[name]
        denom = np.maximum(np.abs(b), abs_floor / rel)
        bad = np.abs(a - b) > rel * denom
        if bad.any():
            i = tuple(x[0] for x in np.nonzero(bad))
            raise AssertionError(
                f"gradient mismatch for {name} at {i}: "
                f"analytic={a[i]:.10g} numeric={b[i]:.10g}"
            )
