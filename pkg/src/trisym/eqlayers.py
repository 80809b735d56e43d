"""Closed-form permutation-equivariant linear layers and their stacks.

All sum-and-broadcast products with all-ones matrices are implemented as
reduce-then-broadcast, never as materialized N x N matrices, keeping layers
O(N * F * K) in time and memory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = [
    "TsLinearParams",
    "TsNetModel",
    "deepsets_linear",
    "dss_linear",
    "ts_linear",
    "label_projection",
    "tsnet_forward",
]


@dataclass
class TsLinearParams:
    """The 12 channel-mixing coefficient matrices of a triple-symmetric
    linear layer; all share shape (k_in, k_out).

    Usage map (0-based indices into ``lambdas``): the feature-block output
    consumes 0..3 (feature terms) plus 10, 11 (label-to-feature bridges);
    the label-block output consumes 6..9 (label terms) plus 4, 5
    (feature-to-label bridges).
    """

    lambdas: list[np.ndarray]

    def __post_init__(self):
        if len(self.lambdas) != 12:
            raise DimensionError(f"expected 12 coefficient matrices, got {len(self.lambdas)}")
        self.lambdas = [np.asarray(m, dtype=np.float64) for m in self.lambdas]
        shape = self.lambdas[0].shape
        if len(shape) != 2 or any(m.shape != shape for m in self.lambdas):
            raise DimensionError("all coefficient matrices must share one (k_in, k_out) shape")

    @property
    def k_in(self) -> int:
        return self.lambdas[0].shape[0]

    @property
    def k_out(self) -> int:
        return self.lambdas[0].shape[1]

    @classmethod
    def one_hot(cls, index: int, k_in: int = 1, k_out: int = 1, value: float = 1.0) -> "TsLinearParams":
        """All-zero coefficients except matrix `index` (0-based) filled with
        `value`; realizes a single generator of the equivariant space."""
        mats = [np.zeros((k_in, k_out)) for _ in range(12)]
        mats[index][:] = value
        return cls(mats)


def _mix(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Contract channels: out[n, d, k2] = sum_k1 x[n, d, k1] lam[k1, k2]."""
    return x @ lam


def _node_sum(x: np.ndarray) -> np.ndarray:
    """Left-multiply by the all-ones N x N matrix (sum over nodes, broadcast)."""
    return np.broadcast_to(x.sum(axis=0, keepdims=True), x.shape)


def _col_sum_to(x: np.ndarray, width: int) -> np.ndarray:
    """Right-multiply by the all-ones (cols x width) matrix."""
    s = x.sum(axis=1, keepdims=True)
    return np.broadcast_to(s, (x.shape[0], width) + x.shape[2:])


def deepsets_linear(x: np.ndarray, lam1: np.ndarray, lam2: np.ndarray) -> np.ndarray:
    """Node-permutation equivariant map on N x F1: column-sum term plus
    pointwise term, T(X) = 1_{N,N} X lam1 + X lam2."""
    x = np.asarray(x, dtype=np.float64)
    lam1 = np.asarray(lam1, dtype=np.float64)
    lam2 = np.asarray(lam2, dtype=np.float64)
    if x.ndim != 2 or lam1.shape != lam2.shape or x.shape[1] != lam1.shape[0]:
        raise DimensionError(
            f"deepsets_linear: shapes do not chain: x {x.shape}, lam {lam1.shape}/{lam2.shape}"
        )
    return _node_sum(x @ lam1) + x @ lam2


def dss_linear(x: np.ndarray, lambdas) -> np.ndarray:
    """Node+feature permutation equivariant map on N x F x K1.

    Four terms per output channel: global sum, node sum, feature sum, and
    identity, each with its own channel-mixing matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    lambdas = [np.asarray(m, dtype=np.float64) for m in lambdas]
    if x.ndim != 3 or len(lambdas) != 4 or x.shape[2] != lambdas[0].shape[0]:
        raise DimensionError(f"dss_linear: x {x.shape} incompatible with 4 x {lambdas[0].shape}")
    f = x.shape[1]
    t1 = _col_sum_to(_node_sum(_mix(x, lambdas[0])), f)
    t2 = _node_sum(_mix(x, lambdas[1]))
    t3 = _col_sum_to(_mix(x, lambdas[2]), f)
    t4 = _mix(x, lambdas[3])
    return t1 + t2 + t3 + t4


def ts_linear(x: np.ndarray, y: np.ndarray, params: TsLinearParams) -> tuple[np.ndarray, np.ndarray]:
    """Triple-symmetric linear layer on (N x F x K1, N x C x K1).

    Feature block:
        (node_sum(X1) + X2) summed over features and broadcast,
        + node_sum(X3) + X4
        + (node_sum(Y11) + Y12) summed over labels and broadcast to F,
    with Xi = x . lambdas[i-1] and Yi = y . lambdas[i-1] (0-based below).
    Label block is the mirror image with roles of x and y swapped.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 3 or y.ndim != 3:
        raise DimensionError(f"ts_linear: expected 3-D blocks, got {x.shape}, {y.shape}")
    if x.shape[0] != y.shape[0] or x.shape[2] != y.shape[2]:
        raise DimensionError(f"ts_linear: blocks disagree: {x.shape} vs {y.shape}")
    if x.shape[2] != params.k_in:
        raise DimensionError(f"ts_linear: {x.shape[2]} channels vs params k_in {params.k_in}")
    if x.shape[1] < 1 or y.shape[1] < 1:
        raise DimensionError("ts_linear: need F >= 1 and C >= 1")
    lam = params.lambdas
    f, c = x.shape[1], y.shape[1]

    feat = (
        _col_sum_to(_node_sum(_mix(x, lam[0])) + _mix(x, lam[1]), f)
        + _node_sum(_mix(x, lam[2]))
        + _mix(x, lam[3])
        + _col_sum_to(_node_sum(_mix(y, lam[10])) + _mix(y, lam[11]), f)
    )
    labl = (
        _col_sum_to(_node_sum(_mix(y, lam[6])) + _mix(y, lam[7]), c)
        + _node_sum(_mix(y, lam[8]))
        + _mix(y, lam[9])
        + _col_sum_to(_node_sum(_mix(x, lam[4])) + _mix(x, lam[5]), c)
    )
    return np.ascontiguousarray(feat), np.ascontiguousarray(labl)


def label_projection(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Drop the feature block; the final feature-invariant readout."""
    return y


_NONLINEARITIES = {
    "relu": lambda a: np.maximum(a, 0.0),
    "leaky_relu": lambda a: np.where(a > 0, a, 0.2 * a),
    "tanh": np.tanh,
}


@dataclass
class TsNetModel:
    """A stack of triple-symmetric linear layers with nonlinearities between
    them (not after the last) and the label projection at the end."""

    layers: list[TsLinearParams]
    nonlinearity: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("need at least one layer")
        if self.layers[0].k_in != 1 or self.layers[-1].k_out != 1:
            raise DimensionError("first/last channel width must be 1")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.k_out != b.k_in:
                raise DimensionError(f"widths do not chain: {a.k_out} -> {b.k_in}")
        if self.nonlinearity not in _NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")


def tsnet_forward(model: TsNetModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Run the stack on (N x F, N x C) inputs; returns N x C scores."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"tsnet_forward: bad input shapes {x.shape}, {y.shape}")
    sigma = _NONLINEARITIES[model.nonlinearity]
    xb = x[:, :, None]
    yb = y[:, :, None]
    for i, layer in enumerate(model.layers):
        xb, yb = ts_linear(xb, yb, layer)
        if i + 1 < len(model.layers):
            xb, yb = sigma(xb), sigma(yb)
    return label_projection(xb, yb)[:, :, 0]
