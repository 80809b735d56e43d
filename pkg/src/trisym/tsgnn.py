"""Triple-symmetry message passing on graphs.

Each layer updates a per-node feature block (N x F x K) and label block
(N x C x K) with six aggregated terms per block plus least-squares mixing
terms, all built so that node and label permutations commute with the network
and feature permutations leave the final label scores unchanged.

Aggregators: "sum" (self + neighbor sum), "mean" (self + degree-normalized
neighbor sum), "attention" (self + softmax-weighted neighbor sum, with scores
computed from channel-pooled descriptors so they are feature/label
permutation invariant by construction).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndarr as nd
from .errors import DataError, DimensionError
from .graphdata import Graph, rw_normalize

__all__ = [
    "AGGREGATORS",
    "POOLINGS",
    "NONLINEARITIES",
    "NodeState",
    "TsGnnLayerParams",
    "Mixers",
    "TsGnnModel",
    "pool_channels",
    "aggregate",
    "attention_scores",
    "solve_mixers",
    "tsgnn_layer_forward",
    "tsgnn_forward",
    "save_checkpoint",
    "load_checkpoint",
]

AGGREGATORS = ("sum", "mean", "attention")
POOLINGS = ("sum", "mean")
NONLINEARITIES = ("relu", "leaky_relu")

ATTENTION_SLOPE = 0.2


@dataclass
class NodeState:
    """Per-layer embeddings: feat (N x F x K) and lab (N x C x K).

    Holds engine tensors during a differentiable forward pass; the public
    diagnostic helpers below also accept plain arrays.
    """

    feat: object
    lab: object

    def _np(self) -> tuple[np.ndarray, np.ndarray]:
        f = self.feat.data if isinstance(self.feat, nd.Tensor) else np.asarray(self.feat)
        l = self.lab.data if isinstance(self.lab, nd.Tensor) else np.asarray(self.lab)
        return f, l


@dataclass
class TsGnnLayerParams:
    """W1..W16 (each k_out x k_in) plus attention vectors when used.

    W1/W2 move feature blocks (self/neighbor), W3..W6 move pooled feature and
    label summaries into the feature block, W7..W12 mirror this for the label
    block, and W13..W16 weight the mixer terms.
    """

    weights: list[np.ndarray]
    a_self: np.ndarray | None = None
    a_nbr: np.ndarray | None = None

    def __post_init__(self):
        if len(self.weights) != 16:
            raise DimensionError(f"expected 16 weight matrices, got {len(self.weights)}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        shape = self.weights[0].shape
        if len(shape) != 2 or any(w.shape != shape for w in self.weights):
            raise DimensionError("all 16 weight matrices must share one (k_out, k_in) shape")
        for name in ("a_self", "a_nbr"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                setattr(self, name, v)
                if v.shape != (shape[0],):
                    raise DimensionError(f"{name} must have length k_out={shape[0]}")

    @property
    def k_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def k_out(self) -> int:
        return self.weights[0].shape[0]


@dataclass
class Mixers:
    """Least-squares translations between feature and label space.

    t_f maps [features | 1] -> labels ((F+1) x C); t_c maps [labels | 1] ->
    features ((C+1) x F). The trailing row of each is the fitted bias,
    learned relative to the current feature scale.
    """

    t_f: np.ndarray
    t_c: np.ndarray
    ridge: float
    visible_count: int

    def __post_init__(self):
        self.t_f = np.asarray(self.t_f, dtype=np.float64)
        self.t_c = np.asarray(self.t_c, dtype=np.float64)
        if self.t_f.ndim != 2 or self.t_c.ndim != 2:
            raise DimensionError("mixers must be 2-D")


@dataclass
class TsGnnModel:
    layers: list[TsGnnLayerParams]
    aggregator: str = "mean"
    pooling: str = "mean"
    ridge: float = 1e-4
    nonlinearity: str = "relu"
    mixers_enabled: bool = True

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("need at least one layer")
        if self.layers[0].k_in != 1 or self.layers[-1].k_out != 1:
            raise DimensionError("first/last channel width must be 1")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.k_out != b.k_in:
                raise DimensionError(f"widths do not chain: {a.k_out} -> {b.k_in}")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        needs_attn = self.aggregator == "attention"
        for i, layer in enumerate(self.layers):
            has = layer.a_self is not None and layer.a_nbr is not None
            if needs_attn and not has:
                raise DimensionError(f"layer {i}: attention aggregator needs a_self/a_nbr")
            if not needs_attn and (layer.a_self is not None or layer.a_nbr is not None):
                raise DimensionError(f"layer {i}: attention vectors present without attention aggregator")

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].k_in] + [l.k_out for l in self.layers]

    def param_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for j, w in enumerate(layer.weights, start=1):
                out[f"layer{i}.W{j}"] = w
            if layer.a_self is not None:
                out[f"layer{i}.a_self"] = layer.a_self
                out[f"layer{i}.a_nbr"] = layer.a_nbr
        return out

    def replace_params(self, arrays: dict[str, np.ndarray]) -> "TsGnnModel":
        layers = []
        for i, layer in enumerate(self.layers):
            weights = [arrays[f"layer{i}.W{j}"] for j in range(1, 17)]
            a_s = arrays.get(f"layer{i}.a_self") if layer.a_self is not None else None
            a_n = arrays.get(f"layer{i}.a_nbr") if layer.a_nbr is not None else None
            layers.append(TsGnnLayerParams(weights, a_s, a_n))
        return TsGnnModel(
            layers=layers,
            aggregator=self.aggregator,
            pooling=self.pooling,
            ridge=self.ridge,
            nonlinearity=self.nonlinearity,
            mixers_enabled=self.mixers_enabled,
        )


# ---------------------------------------------------------------------------
# reference (per-node) helpers


def pool_channels(block: np.ndarray, kind: str) -> np.ndarray:
    """Collapse a K x W block to K x 1 by summing or averaging columns.

    An empty width yields zeros; single-column mean is the identity.
    """
    block = np.asarray(block, dtype=np.float64)
    if kind == "sum":
        return block.sum(axis=1, keepdims=True)
    if kind == "mean":
        if block.shape[1] == 0:
            return np.zeros((block.shape[0], 1))
        return block.mean(axis=1, keepdims=True)
    raise ValueError(f"unknown pooling {kind!r}")


def aggregate(kind: str, self_term: np.ndarray, neighbor_terms, attention_weights=None) -> np.ndarray:
    """Combine a node's own transformed block with its neighbors' blocks.

    sum: self + sum; mean: self + average (zero with no neighbors);
    attention: self + weighted sum with the supplied coefficients.
    """
    self_term = np.asarray(self_term, dtype=np.float64)
    terms = [np.asarray(t, dtype=np.float64) for t in neighbor_terms]
    for t in terms:
        if t.shape != self_term.shape:
            raise DimensionError(f"aggregate: term shape {t.shape} != {self_term.shape}")
    if kind == "sum":
        return self_term + sum(terms) if terms else self_term.copy()
    if kind == "mean":
        if not terms:
            return self_term.copy()
        return self_term + sum(terms) / len(terms)
    if kind == "attention":
        if attention_weights is None:
            raise ValueError("attention aggregation needs weights")
        w = np.asarray(attention_weights, dtype=np.float64)
        if len(w) != len(terms):
            raise DimensionError(f"{len(w)} weights for {len(terms)} neighbor terms")
        out = self_term.copy()
        for wi, t in zip(w, terms):
            out += wi * t
        return out
    raise ValueError(f"unknown aggregator {kind!r}")


def attention_scores(
    layer: TsGnnLayerParams,
    state: NodeState,
    v: int,
    neighbors,
    pooling: str = "mean",
) -> np.ndarray:
    """Softmax weights of node v over its neighbors.

    Descriptors are channel-pooled [W1 feat | W7 lab] blocks, so column order
    cannot influence the scores. An isolated node yields an empty vector.
    """
    neighbors = np.asarray(list(neighbors), dtype=np.int64)
    if neighbors.size == 0:
        return np.zeros(0)
    feat, lab = state._np()
    w1, w7 = layer.weights[0], layer.weights[6]
    # (N, F+C, k_out): weights applied along the channel axis.
    mixed = np.concatenate([feat @ w1.T, lab @ w7.T], axis=1)
    nodes = np.concatenate([[v], neighbors])
    desc = np.stack([pool_channels(mixed[u].T, pooling)[:, 0] for u in nodes])
    s_self = desc @ layer.a_self
    s_nbr = desc @ layer.a_nbr
    e = s_self[0] + s_nbr[1:]
    e = np.where(e > 0, e, ATTENTION_SLOPE * e)
    z = np.exp(e - e.max())
    return z / z.sum()


# ---------------------------------------------------------------------------
# mixers


def solve_mixers(graph: Graph, x: np.ndarray, y_visible: np.ndarray, visible_idx, lam: float) -> Mixers:
    """Fit the ridge translations on the visible-labeled rows only.

    Regressors are the random-walk-smoothed features/labels with a ones
    column appended; the ridge weight is multiplied by trace(R^T R)/p so the
    configured lam stays dimensionless. With no visible rows both mixers are
    zero and a warning is recorded.
    """
    if lam <= 0:
        raise ValueError("mixer ridge lam must be positive")
    x = np.asarray(x, dtype=np.float64)
    y_visible = np.asarray(y_visible, dtype=np.float64)
    f = x.shape[1]
    c = y_visible.shape[1]
    vis = np.asarray(sorted(int(i) for i in visible_idx), dtype=np.int64)
    if vis.size == 0:
        warnings.warn("solve_mixers: no visible labels; mixers are zero")
        return Mixers(np.zeros((f + 1, c)), np.zeros((c + 1, f)), lam, 0)

    ahat = rw_normalize(graph)
    ax = ahat.apply(x)
    ay = ahat.apply(y_visible)
    ones = np.ones((vis.size, 1))

    r_f = np.hstack([ax[vis], ones])
    scale_f = float((r_f * r_f).sum()) / r_f.shape[1]
    t_f = nd.ridge_solve(r_f, y_visible[vis], lam * scale_f)

    r_c = np.hstack([ay[vis], ones])
    scale_c = float((r_c * r_c).sum()) / r_c.shape[1]
    t_c = nd.ridge_solve(r_c, x[vis], lam * scale_c)
    return Mixers(t_f, t_c, lam, int(vis.size))


# ---------------------------------------------------------------------------
# vectorized forward


def _edge_attention(
    edges: nd.EdgeIndex,
    x_t: nd.Tensor,
    y_t: nd.Tensor,
    w1: nd.Tensor,
    w7: nd.Tensor,
    a_self: nd.Tensor,
    a_nbr: nd.Tensor,
    pooling: str,
) -> nd.Tensor:
    """Per-directed-edge softmax coefficients, grouped by destination."""
    k_out = w1.data.shape[0]
    desc = nd.concat([nd.apply_channels(x_t, w1), nd.apply_channels(y_t, w7)], axis=1)
    pooled = nd.reduce_axis(desc, 1, pooling)  # (N, k_out)
    s_self = nd.reshape(nd.matmul(pooled, nd.reshape(a_self, (k_out, 1))), (edges.num_nodes,))
    s_nbr = nd.reshape(nd.matmul(pooled, nd.reshape(a_nbr, (k_out, 1))), (edges.num_nodes,))
    e = nd.leaky_relu(
        nd.add(nd.gather_rows(s_self, edges.dst), nd.gather_rows(s_nbr, edges.src)),
        ATTENTION_SLOPE,
    )
    shift = nd.segment_max_sorted(e.data, edges.indptr, edges.num_nodes)
    z = nd.exp(nd.sub(e, nd.constant(shift[edges.dst])))
    denom = nd.edge_to_node_sum(z, edges)
    return nd.div(z, nd.gather_rows(denom, edges.dst))


def tsgnn_layer_forward(
    edges: nd.EdgeIndex,
    state: NodeState,
    params: TsGnnLayerParams,
    mixers: Mixers | None,
    aggregator: str,
    pooling: str,
    param_tensors: dict[str, nd.Tensor] | None = None,
    layer_index: int = 0,
) -> NodeState:
    """One message-passing step over both blocks.

    feat' = agg(W1 X, W2 X) + agg(W3 pool(X), W4 pool(X)) broadcast
          + agg(W5 pool(Y), W6 pool(Y)) broadcast
          + agg(W13 [Y|1] t_c, W14 [Y|1] t_c)          (when mixers are on)
    lab'  mirrors it with W7..W12 and agg(W15 [X|1] t_f, W16 [X|1] t_f).
    """
    x_t, y_t = state.feat, state.lab
    if not isinstance(x_t, nd.Tensor):
        x_t, y_t = nd.wrap(x_t), nd.wrap(y_t)
    n, f, k_in = x_t.data.shape
    c = y_t.data.shape[1]
    if y_t.data.shape != (n, c, k_in):
        raise DimensionError(f"state blocks disagree: {x_t.data.shape} vs {y_t.data.shape}")
    if params.k_in != k_in:
        raise DimensionError(f"layer expects {params.k_in} channels, state has {k_in}")
    if mixers is not None and (mixers.t_f.shape != (f + 1, c) or mixers.t_c.shape != (c + 1, f)):
        raise DimensionError(
            f"mixer shapes {mixers.t_f.shape}/{mixers.t_c.shape} inconsistent with F={f}, C={c}"
        )

    def par(j: int) -> nd.Tensor:
        key = f"layer{layer_index}.W{j}"
        if param_tensors is not None and key in param_tensors:
            return param_tensors[key]
        return nd.constant(params.weights[j - 1])

    def att(name: str) -> nd.Tensor:
        key = f"layer{layer_index}.{name}"
        if param_tensors is not None and key in param_tensors:
            return param_tensors[key]
        return nd.constant(getattr(params, name))

    if aggregator == "attention":
        alpha = _edge_attention(edges, x_t, y_t, par(1), par(7), att("a_self"), att("a_nbr"), pooling)
        nbr_weights = alpha
    elif aggregator == "mean":
        deg = edges.degrees().astype(np.float64)
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)
        nbr_weights = inv[edges.dst]
    else:
        nbr_weights = None

    # Channel mixing and column pooling commute with the (per-edge scalar)
    # neighbor weighting, so the whole layer needs only these two aggregated
    # blocks; every neighbor term below is a cheap transform of them.
    agg_x = nd.neighbor_aggregate(x_t, edges, weights=nbr_weights)  # (N, F, K)
    agg_y = nd.neighbor_aggregate(y_t, edges, weights=nbr_weights)  # (N, C, K)

    # Aggregate of a per-node all-ones column: node degree for sum, and the
    # softmax/mean normalization makes it exactly 1 (0 when isolated) else.
    deg = edges.degrees().astype(np.float64)
    if aggregator == "sum":
        ones_agg = deg
    else:
        ones_agg = (deg > 0).astype(np.float64)
    agg_one = nd.constant(np.broadcast_to(ones_agg[:, None, None], (n, 1, k_in)).copy())

    px = nd.reduce_axis(x_t, 1, pooling, keepdims=True)  # (N, 1, K)
    py = nd.reduce_axis(y_t, 1, pooling, keepdims=True)
    pax = nd.reduce_axis(agg_x, 1, pooling, keepdims=True)
    pay = nd.reduce_axis(agg_y, 1, pooling, keepdims=True)

    feat_new = nd.add(nd.apply_channels(x_t, par(1)), nd.apply_channels(agg_x, par(2)))
    feat_new = nd.add(
        feat_new,
        nd.broadcast_axis(
            nd.add(nd.apply_channels(px, par(3)), nd.apply_channels(pax, par(4))), 1, f
        ),
    )
    feat_new = nd.add(
        feat_new,
        nd.broadcast_axis(
            nd.add(nd.apply_channels(py, par(5)), nd.apply_channels(pay, par(6))), 1, f
        ),
    )

    lab_new = nd.add(nd.apply_channels(y_t, par(7)), nd.apply_channels(agg_y, par(8)))
    lab_new = nd.add(
        lab_new,
        nd.broadcast_axis(
            nd.add(nd.apply_channels(py, par(9)), nd.apply_channels(pay, par(10))), 1, c
        ),
    )
    lab_new = nd.add(
        lab_new,
        nd.broadcast_axis(
            nd.add(nd.apply_channels(px, par(11)), nd.apply_channels(pax, par(12))), 1, c
        ),
    )

    if mixers is not None:
        ones = nd.constant(np.ones((n, 1, k_in)))
        y_ext = nd.contract_middle(nd.concat([y_t, ones], axis=1), mixers.t_c)        # (N, F, K)
        ay_ext = nd.contract_middle(nd.concat([agg_y, agg_one], axis=1), mixers.t_c)
        feat_new = nd.add(
            feat_new,
            nd.add(nd.apply_channels(y_ext, par(13)), nd.apply_channels(ay_ext, par(14))),
        )
        x_ext = nd.contract_middle(nd.concat([x_t, ones], axis=1), mixers.t_f)        # (N, C, K)
        ax_ext = nd.contract_middle(nd.concat([agg_x, agg_one], axis=1), mixers.t_f)
        lab_new = nd.add(
            lab_new,
            nd.add(nd.apply_channels(x_ext, par(15)), nd.apply_channels(ax_ext, par(16))),
        )

    return NodeState(feat_new, lab_new)


def tsgnn_forward(
    model: TsGnnModel,
    graph: Graph,
    x: np.ndarray,
    y_visible: np.ndarray,
    visible_idx,
    param_tensors: dict[str, nd.Tensor] | None = None,
) -> nd.Tensor:
    """Full network: mixers solved once per call, layers with the
    nonlinearity in between (never after the last), label block returned as
    N x C scores (no softmax)."""
    x = np.asarray(x, dtype=np.float64)
    y_visible = np.asarray(y_visible, dtype=np.float64)
    n = graph.num_nodes
    if x.shape[0] != n or y_visible.shape[0] != n:
        raise DimensionError(f"inputs have {x.shape[0]}/{y_visible.shape[0]} rows for {n} nodes")
    mixers = solve_mixers(graph, x, y_visible, visible_idx, model.ridge) if model.mixers_enabled else None
    edges = nd.build_edge_index(graph.indptr, graph.indices)

    sigma = nd.relu if model.nonlinearity == "relu" else nd.leaky_relu
    state = NodeState(nd.wrap(x[:, :, None]), nd.wrap(y_visible[:, :, None]))
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        state = tsgnn_layer_forward(
            edges, state, layer, mixers, model.aggregator, model.pooling,
            param_tensors=param_tensors, layer_index=i,
        )
        if i != last:
            state = NodeState(sigma(state.feat), sigma(state.lab))
    return nd.reshape(state.lab, (n, y_visible.shape[1]))


# ---------------------------------------------------------------------------
# checkpoint format


def _arch_dict(model: TsGnnModel) -> dict:
    return {
        "layers": len(model.layers),
        "widths": model.widths,
        "aggregator": model.aggregator,
        "pooling": model.pooling,
        "ridge": model.ridge,
        "nonlinearity": model.nonlinearity,
        "mixers": model.mixers_enabled,
    }


def checkpoint_dict(model: TsGnnModel) -> dict:
    params = {
        name: {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}
        for name, arr in model.param_arrays().items()
    }
    return {"version": 1, "arch": _arch_dict(model), "params": params}


def checkpoint_bytes(model: TsGnnModel) -> bytes:
    return (json.dumps(checkpoint_dict(model), sort_keys=True, indent=1) + "\n").encode("utf-8")


def save_checkpoint(path: str | Path, model: TsGnnModel) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path: str | Path) -> TsGnnModel:
    """Parse and validate a checkpoint; shapes are checked against the arch."""
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"checkpoint not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed checkpoint JSON: {exc}") from exc
    if blob.get("version") != 1:
        raise DataError(f"unsupported checkpoint version {blob.get('version')!r}")
    arch = blob.get("arch", {})
    for key in ("layers", "widths", "aggregator", "pooling", "ridge", "nonlinearity", "mixers"):
        if key not in arch:
            raise DataError(f"checkpoint arch missing key {key!r}")
    widths = [int(w) for w in arch["widths"]]
    num_layers = int(arch["layers"])
    if len(widths) != num_layers + 1:
        raise DataError("arch widths do not match layer count")
    params = blob.get("params", {})
    needs_attn = arch["aggregator"] == "attention"

    def fetch(name: str, shape: tuple[int, ...]) -> np.ndarray:
        if name not in params:
            raise DataError(f"checkpoint missing parameter {name!r}")
        entry = params[name]
        if tuple(entry["shape"]) != shape:
            raise DataError(f"parameter {name!r} has shape {entry['shape']}, expected {list(shape)}")
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
        return arr

    layers = []
    expected = set()
    for i in range(num_layers):
        k_in, k_out = widths[i], widths[i + 1]
        weights = [fetch(f"layer{i}.W{j}", (k_out, k_in)) for j in range(1, 17)]
        expected.update(f"layer{i}.W{j}" for j in range(1, 17))
        a_s = a_n = None
        if needs_attn:
            a_s = fetch(f"layer{i}.a_self", (k_out,))
            a_n = fetch(f"layer{i}.a_nbr", (k_out,))
            expected.update({f"layer{i}.a_self", f"layer{i}.a_nbr"})
        layers.append(TsGnnLayerParams(weights, a_s, a_n))
    unknown = set(params) - expected
    if unknown:
        raise DataError(f"checkpoint has unknown parameters: {sorted(unknown)}")
    return TsGnnModel(
        layers=layers,
        aggregator=str(arch["aggregator"]),
        pooling=str(arch["pooling"]),
        ridge=float(arch["ridge"]),
        nonlinearity=str(arch["nonlinearity"]),
        mixers_enabled=bool(arch["mixers"]),
    )
