"""Randomized verification harnesses for symmetry and gradient claims.

These drive the `symcheck` and `gradcheck` commands and the acceptance
suite: they build random graphs and models, transform the inputs by a random
node/feature/label permutation triple, and measure how far the network output
is from the consistently permuted output (exactly zero in exact arithmetic).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndarr as nd
from .graphdata import Graph, make_graph
from .rng import stream
from .symmetry import PermTriple, apply_to_graph, sample_perm_triple
from .trainer import init_model, masked_ce_loss, visible_onehot
from .tsgnn import TsGnnModel, tsgnn_forward

__all__ = [
    "random_graph",
    "equivariance_deviation",
    "SuiteResult",
    "run_equivariance_suite",
    "run_grad_suite",
]


def random_graph(
    n: int,
    f: int,
    c: int,
    seed: int,
    edge_prob: float = 0.35,
) -> Graph:
    """Erdos-Renyi graph with Gaussian features, uniform labels and a random
    train/val/test partition (deterministic in seed)."""
    rng = stream(seed, "verify-graph")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < edge_prob
    pairs = np.stack([iu[keep], ju[keep]], axis=1)
    features = rng.standard_normal((n, f))
    labels = rng.integers(0, c, size=n)
    order = rng.permutation(n)
    n_train = max(2, int(0.5 * n))
    n_val = max(1, int(0.25 * n))
    train = order[:n_train]
    val = order[n_train : n_train + n_val]
    test = order[n_train + n_val :]
    if test.size == 0:
        test, val = val[-1:], val[:-1]
    return make_graph(n, pairs, features, labels, c, train, val, test)


def equivariance_deviation(
    model: TsGnnModel, graph: Graph, triple: PermTriple, visible_idx: np.ndarray
) -> float:
    """Max-abs difference between forward-then-permute and permute-then-forward."""
    y_vis = visible_onehot(graph, visible_idx)
    base = tsgnn_forward(model, graph, graph.features, y_vis, visible_idx).data

    moved = apply_to_graph(triple, graph)
    vis2 = np.sort(triple.sigma_n[visible_idx])
    y_vis2 = visible_onehot(moved, vis2)
    out2 = tsgnn_forward(model, moved, moved.features, y_vis2, vis2).data

    inv_n = np.empty_like(triple.sigma_n)
    inv_n[triple.sigma_n] = np.arange(len(triple.sigma_n))
    inv_c = np.empty_like(triple.sigma_c)
    inv_c[triple.sigma_c] = np.arange(len(triple.sigma_c))
    expected = base[inv_n][:, inv_c]
    return float(np.max(np.abs(out2 - expected)))


@dataclass
class SuiteResult:
    max_deviation: float = 0.0
    trials: int = 0
    tol: float = 0.0
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def run_equivariance_suite(
    trials: int,
    tol: float,
    seed: int = 0,
    aggregators=("sum", "mean", "attention"),
    poolings=("sum", "mean"),
    mixer_options=(True, False),
    num_layers: int = 2,
    hidden_width: int = 4,
    model: TsGnnModel | None = None,
) -> SuiteResult:
    """Random-instance equivariance sweep; `model` pins architecture and
    weights instead of drawing fresh ones per trial."""
    result = SuiteResult(tol=tol)
    combos = (
        [(model.aggregator, model.pooling, model.mixers_enabled)]
        if model is not None
        else [(a, p, m) for a in aggregators for p in poolings for m in mixer_options]
    )
    for combo_idx, (agg, pool, mix) in enumerate(combos):
        for trial in range(trials):
            rng = stream(seed, "verify-sizes", combo_idx, trial)
            n = int(rng.integers(3, 13))
            f = int(rng.integers(1, 7))
            c = int(rng.integers(2, 6))
            inst_seed = seed * 1_000_003 + combo_idx * 7919 + trial
            graph = random_graph(n, f, c, inst_seed)
            m = (
                model
                if model is not None
                else init_model(num_layers, hidden_width, agg, pool, 1e-3, "relu", mix, inst_seed)
            )
            triple = sample_perm_triple(n, f, c, inst_seed + 1)
            nvis = max(1, graph.train_idx.size // 2)
            visible = np.sort(graph.train_idx[:nvis])
            dev = equivariance_deviation(m, graph, triple, visible)
            result.trials += 1
            if dev > result.max_deviation:
                result.max_deviation = dev
                result.worst = {
                    "aggregator": agg,
                    "pooling": pool,
                    "mixers": mix,
                    "n": n,
                    "f": f,
                    "c": c,
                    "trial": trial,
                }
    return result


def run_grad_suite(
    aggregator: str,
    tol: float = 1e-5,
    seed: int = 0,
    num_layers: int = 2,
    hidden_width: int = 3,
    pooling: str = "mean",
    mixers: bool = True,
    n: int = 8,
    f: int = 3,
    c: int = 3,
) -> nd.GradCheckReport:
    """Central-difference check of every parameter tensor on one random
    instance with a masked cross-entropy loss."""
    graph = random_graph(n, f, c, seed)
    model = init_model(num_layers, hidden_width, aggregator, pooling, 1e-3, "relu", mixers, seed)
    nvis = max(1, graph.train_idx.size // 2)
    visible = np.sort(graph.train_idx[:nvis])
    hidden = np.sort(graph.train_idx[nvis:])
    if hidden.size == 0:
        visible, hidden = visible[:-1], visible[-1:]
    y_vis = visible_onehot(graph, visible)

    def build_loss(leaves: dict[str, nd.Tensor]) -> nd.Tensor:
        logits = tsgnn_forward(model, graph, graph.features, y_vis, visible, param_tensors=leaves)
        return masked_ce_loss(logits, graph.labels, hidden)

    return nd.grad_check(build_loss, model.param_arrays(), tol=tol)
