"""Fixed-order mean-aggregation GNN baseline.

A deliberately non-symmetric reference model: its input layer is tied to one
feature ordering and its output layer to one class ordering, so feature or
label permutations scramble it. Shipped to quantify, on permuted copies of a
graph, how much accuracy the symmetric models retain and this one loses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndarr as nd
from .errors import DimensionError
from .graphdata import Graph
from .rng import stream

__all__ = ["MeanGnnBaseline", "train_baseline", "baseline_accuracy"]


@dataclass
class MeanGnnBaseline:
    """Two-layer mean GNN with biases; weights are (in, out) matrices."""

    params: dict[str, np.ndarray]
    feature_dim: int
    num_classes: int
    hidden: int

    def forward(self, graph: Graph, param_tensors: dict[str, nd.Tensor] | None = None) -> nd.Tensor:
        if graph.feature_dim != self.feature_dim or graph.num_classes != self.num_classes:
            raise DimensionError(
                "baseline is tied to its training dimensions "
                f"({self.feature_dim} features, {self.num_classes} classes)"
            )
        edges = nd.build_edge_index(graph.indptr, graph.indices)
        deg = edges.degrees().astype(np.float64)
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)[edges.dst]

        def par(name: str) -> nd.Tensor:
            if param_tensors is not None:
                return param_tensors[name]
            return nd.constant(self.params[name])

        def dense(x: nd.Tensor, w: nd.Tensor, b: nd.Tensor) -> nd.Tensor:
            out = nd.matmul(x, w)  # (N, out)
            bias = nd.broadcast_axis(nd.reshape(b, (1, b.data.shape[0])), 0, x.data.shape[0])
            return nd.add(out, bias)

        x = nd.wrap(graph.features)
        h = nd.add(
            dense(x, par("w1_self"), par("b1")),
            nd.matmul(nd.neighbor_aggregate(x, edges, weights=inv), par("w1_nbr")),
        )
        h = nd.relu(h)
        logits = nd.add(
            dense(h, par("w2_self"), par("b2")),
            nd.matmul(nd.neighbor_aggregate(h, edges, weights=inv), par("w2_nbr")),
        )
        return logits


def _init_params(f: int, c: int, hidden: int, seed: int) -> dict[str, np.ndarray]:
    rng = stream(seed, "baseline-init")
    s1 = 1.0 / np.sqrt(f)
    s2 = 1.0 / np.sqrt(hidden)
    return {
        "w1_self": rng.uniform(-s1, s1, size=(f, hidden)),
        "w1_nbr": rng.uniform(-s1, s1, size=(f, hidden)),
        "b1": np.zeros(hidden),
        "w2_self": rng.uniform(-s2, s2, size=(hidden, c)),
        "w2_nbr": rng.uniform(-s2, s2, size=(hidden, c)),
        "b2": np.zeros(c),
    }


def train_baseline(
    graph: Graph, epochs: int = 200, lr: float = 0.01, hidden: int = 16, seed: int = 0
) -> MeanGnnBaseline:
    """Classical semi-supervised training: cross entropy on the train split."""
    model = MeanGnnBaseline(
        params=_init_params(graph.feature_dim, graph.num_classes, hidden, seed),
        feature_dim=graph.feature_dim,
        num_classes=graph.num_classes,
        hidden=hidden,
    )
    current = {k: v.copy() for k, v in model.params.items()}
    adam = nd.AdamState(lr=lr)
    train_idx = graph.train_idx
    for _ in range(epochs):
        leaves = {k: nd.wrap(v, requires_grad=True, name=k) for k, v in current.items()}
        logits = model.forward(graph, param_tensors=leaves)
        probs = nd.softmax_rows(logits)
        picked = nd.select_rc(probs, train_idx, graph.labels[train_idx])
        loss = nd.scale(nd.total(nd.log(picked), "mean"), -1.0)
        nd.backward(loss, leaves.values())
        grads = {k: leaf.grad for k, leaf in leaves.items()}
        current, adam = nd.adam_step(adam, current, grads)
    model.params = current
    return model


def baseline_accuracy(model: MeanGnnBaseline, graph: Graph, eval_idx) -> float:
    eval_idx = np.asarray(eval_idx, dtype=np.int64)
    logits = model.forward(graph).data
    preds = np.argmax(logits, axis=1)
    return float(np.mean(preds[eval_idx] == graph.labels[eval_idx]))
