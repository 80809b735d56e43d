"""Label-inpainting training, evaluation, and zero-shot transfer.

Each epoch re-draws which training labels stay visible, feeds the graph with
the masked label matrix, and optimizes the masked-node cross entropy with
Adam (one graph per optimizer step). Because all learnable weights are
channel-by-channel (K x K), a trained model evaluates on graphs of any node
count, feature dimension, and label-set size.
"""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ndarr as nd
from .errors import NumericError, UsageError
from .graphdata import Graph, load_dataset
from .rng import fisher_yates, stream
from .tsgnn import (
    AGGREGATORS,
    NONLINEARITIES,
    POOLINGS,
    TsGnnLayerParams,
    TsGnnModel,
    tsgnn_forward,
)

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainResult",
    "mask_split",
    "masked_ce_loss",
    "init_model",
    "train",
    "evaluate",
    "correct_count",
    "zeroshot",
]

# Pre-activation variance control: every block output sums four aggregated
# terms, so fan-in is scaled by that term count.
_TERMS_PER_BLOCK = 4


@dataclass
class TrainConfig:
    graphs: list[str] = field(default_factory=list)
    lr: float = 0.01
    epochs: int = 300
    num_layers: int = 2
    hidden_width: int = 16
    visible_fraction: float = 0.5
    aggregator: str = "mean"
    pooling: str = "mean"
    ridge: float = 1e-4
    nonlinearity: str = "relu"
    mixers: bool = True
    seed: int = 0
    precision: str = "float64"
    strict: bool = True

    def validate(self) -> "TrainConfig":
        if not self.graphs:
            raise UsageError("config needs at least one dataset path in 'graphs'")
        if not 0.0 < self.visible_fraction < 1.0:
            raise UsageError(f"visible_fraction must be in (0, 1), got {self.visible_fraction}")
        if self.epochs < 1:
            raise UsageError(f"epochs must be >= 1, got {self.epochs}")
        if self.num_layers < 1:
            raise UsageError("num_layers must be >= 1")
        if self.hidden_width < 1:
            raise UsageError("hidden_width must be >= 1")
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if self.ridge <= 0:
            raise UsageError("ridge must be positive")
        if self.aggregator not in AGGREGATORS:
            raise UsageError(f"aggregator must be one of {AGGREGATORS}")
        if self.pooling not in POOLINGS:
            raise UsageError(f"pooling must be one of {POOLINGS}")
        if self.nonlinearity not in NONLINEARITIES:
            raise UsageError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.precision not in ("float64", "float32"):
            raise UsageError("precision must be float64 or float32")
        return self

    def to_dict(self) -> dict:
        return {
            "graphs": list(self.graphs),
            "lr": self.lr,
            "epochs": self.epochs,
            "num_layers": self.num_layers,
            "hidden_width": self.hidden_width,
            "visible_fraction": self.visible_fraction,
            "aggregator": self.aggregator,
            "pooling": self.pooling,
            "ridge": self.ridge,
            "nonlinearity": self.nonlinearity,
            "mixers": self.mixers,
            "seed": self.seed,
            "precision": self.precision,
            "strict": self.strict,
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "TrainConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(blob) - allowed
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**blob).validate()

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            blob = json.loads(open(path, encoding="utf-8").read())
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed config JSON: {exc}") from exc
        if not isinstance(blob, dict):
            raise UsageError("config must be a JSON object")
        return cls.from_dict(blob)


@dataclass
class TrainReport:
    """Per-epoch curves plus a summary; epoch wall-times are recorded but
    serialized as null in strict mode so reports stay byte-reproducible."""

    seed: int
    config: dict
    losses: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = -1.0
    final_val_acc: float = -1.0
    final_test_acc: float = -1.0
    best_test_acc: float = -1.0

    def to_jsonl(self, strict: bool = True) -> str:
        lines = []
        for i in range(len(self.losses)):
            lines.append(
                json.dumps(
                    {
                        "version": 1,
                        "epoch": i,
                        "loss": self.losses[i],
                        "val_acc": self.val_acc[i],
                        "test_acc": self.test_acc[i],
                        "seconds": None if strict else self.epoch_seconds[i],
                    },
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {
                    "version": 1,
                    "summary": True,
                    "seed": self.seed,
                    "config": self.config,
                    "epochs": len(self.losses),
                    "best_epoch": self.best_epoch,
                    "best_val_acc": self.best_val_acc,
                    "best_test_acc": self.best_test_acc,
                    "final_val_acc": self.final_val_acc,
                    "final_test_acc": self.final_test_acc,
                    "total_seconds": None if strict else sum(self.epoch_seconds),
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model: TsGnnModel       # parameters after the last epoch
    best_model: TsGnnModel  # parameters at the best validation epoch
    report: TrainReport


def mask_split(
    rng: np.random.Generator, train_idx: Sequence[int], visible_fraction: float
) -> tuple[np.ndarray, np.ndarray]:
    """Partition the labeled nodes into visible and hidden subsets.

    The visible count is round(fraction * |train|), clamped to
    [1, |train| - 1] so both sides stay non-empty.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    m = train_idx.size
    if m < 2:
        raise UsageError(f"need at least 2 labeled nodes to mask, got {m}")
    n_vis = int(round(visible_fraction * m))
    n_vis = min(max(n_vis, 1), m - 1)
    order = train_idx[fisher_yates(m, rng)]
    visible = np.sort(order[:n_vis])
    hidden = np.sort(order[n_vis:])
    return visible, hidden


def masked_ce_loss(logits: nd.Tensor, labels: np.ndarray, hidden_idx) -> nd.Tensor:
    """Mean softmax cross entropy over the hidden (masked) nodes."""
    hidden = np.asarray(sorted(int(i) for i in hidden_idx), dtype=np.int64)
    if hidden.size == 0:
        raise UsageError("masked_ce_loss: empty hidden set")
    labels = np.asarray(labels, dtype=np.int64)
    probs = nd.softmax_rows(logits)
    picked = nd.select_rc(probs, hidden, labels[hidden])
    return nd.scale(nd.total(nd.log(picked), "mean"), -1.0)


def visible_onehot(graph: Graph, visible_idx) -> np.ndarray:
    """One-hot label matrix with zero rows wherever the label is hidden."""
    out = np.zeros((graph.num_nodes, graph.num_classes))
    vis = np.asarray(visible_idx, dtype=np.int64)
    if vis.size:
        out[vis, graph.labels[vis]] = 1.0
    return out


def init_model(
    num_layers: int,
    hidden_width: int,
    aggregator: str,
    pooling: str,
    ridge: float,
    nonlinearity: str,
    mixers: bool,
    seed: int,
) -> TsGnnModel:
    """Uniform [-s, s] weights with s = 1/sqrt(k_in * 4), matching the four
    summed terms per block; attention vectors use their own length as fan-in."""
    rng = stream(seed, "init")
    widths = [1] + [hidden_width] * (num_layers - 1) + [1]
    layers = []
    for i in range(num_layers):
        k_in, k_out = widths[i], widths[i + 1]
        s = 1.0 / np.sqrt(k_in * _TERMS_PER_BLOCK)
        weights = [rng.uniform(-s, s, size=(k_out, k_in)) for _ in range(16)]
        a_s = a_n = None
        if aggregator == "attention":
            sa = 1.0 / np.sqrt(k_out * _TERMS_PER_BLOCK)
            a_s = rng.uniform(-sa, sa, size=k_out)
            a_n = rng.uniform(-sa, sa, size=k_out)
        layers.append(TsGnnLayerParams(weights, a_s, a_n))
    return TsGnnModel(
        layers=layers,
        aggregator=aggregator,
        pooling=pooling,
        ridge=ridge,
        nonlinearity=nonlinearity,
        mixers_enabled=mixers,
    )


def model_from_config(config: TrainConfig) -> TsGnnModel:
    return init_model(
        config.num_layers,
        config.hidden_width,
        config.aggregator,
        config.pooling,
        config.ridge,
        config.nonlinearity,
        config.mixers,
        config.seed,
    )


def predictions(model: TsGnnModel, graph: Graph) -> np.ndarray:
    """Argmax class per node with every training label visible as input
    (exact ties resolve to the lowest class index)."""
    y_vis = visible_onehot(graph, graph.train_idx)
    logits = tsgnn_forward(model, graph, graph.features, y_vis, graph.train_idx).data
    return np.argmax(logits, axis=1)


def evaluate(model: TsGnnModel, graph: Graph, eval_idx) -> float:
    """Accuracy on eval_idx with every training label visible as input."""
    eval_idx = np.asarray(eval_idx, dtype=np.int64)
    if eval_idx.size == 0:
        raise UsageError("evaluate: empty eval set")
    return correct_count(model, graph, eval_idx) / eval_idx.size


def correct_count(model: TsGnnModel, graph: Graph, eval_idx) -> int:
    """Number of eval nodes whose argmax score matches the true label."""
    eval_idx = np.asarray(eval_idx, dtype=np.int64)
    preds = predictions(model, graph)
    return int(np.sum(preds[eval_idx] == graph.labels[eval_idx]))


def zeroshot(model: TsGnnModel, graph: Graph) -> float:
    """Evaluate on the test split of a graph never seen in training; works
    for any node count, feature dimension, and label-set size."""
    return evaluate(model, graph, graph.test_idx)


def train(config: TrainConfig) -> TrainResult:
    config.validate()
    nd.set_precision(config.precision)
    graphs = [load_dataset(p) for p in config.graphs]
    for g in graphs:
        if g.train_idx.size < 2:
            raise UsageError("each training graph needs at least 2 labeled train nodes")

    model = model_from_config(config)
    current = {k: v.copy() for k, v in model.param_arrays().items()}
    adam = nd.AdamState(lr=config.lr)
    mask_rng = stream(config.seed, "mask")

    report = TrainReport(seed=config.seed, config=config.to_dict())
    best_params = {k: v.copy() for k, v in current.items()}

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        epoch_losses = []
        for g in graphs:
            visible, hidden = mask_split(mask_rng, g.train_idx, config.visible_fraction)
            y_vis = visible_onehot(g, visible)
            leaves = {k: nd.wrap(v, requires_grad=True, name=k) for k, v in current.items()}
            try:
                logits = tsgnn_forward(model, g, g.features, y_vis, visible, param_tensors=leaves)
                loss = masked_ce_loss(logits, g.labels, hidden)
                nd.backward(loss, leaves.values())
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}: {exc}") from exc
            grads = {k: leaf.grad for k, leaf in leaves.items()}
            current, adam = nd.adam_step(adam, current, grads)
            epoch_losses.append(float(loss.data))

        epoch_model = model.replace_params(current)
        vals, tests = [], []
        for g in graphs:
            preds = predictions(epoch_model, g)
            vals.append(float(np.mean(preds[g.val_idx] == g.labels[g.val_idx])))
            tests.append(float(np.mean(preds[g.test_idx] == g.labels[g.test_idx])))
        val = float(np.mean(vals))
        test = float(np.mean(tests))
        report.losses.append(float(np.mean(epoch_losses)))
        report.val_acc.append(val)
        report.test_acc.append(test)
        report.epoch_seconds.append(time.perf_counter() - t0)
        if val > report.best_val_acc:
            report.best_val_acc = val
            report.best_test_acc = test
            report.best_epoch = epoch
            best_params = {k: v.copy() for k, v in current.items()}

    report.final_val_acc = report.val_acc[-1]
    report.final_test_acc = report.test_acc[-1]
    return TrainResult(
        model=model.replace_params(current),
        best_model=model.replace_params(best_params),
        report=report,
    )
