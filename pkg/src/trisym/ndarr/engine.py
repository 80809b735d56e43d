"""Dense array engine with reverse-mode differentiation.

Values are C-order (row-major) numpy arrays in 64-bit precision by default
(32-bit available via :func:`set_precision` for speed runs). Every operation
checks its output for NaN/Inf unless finite checks are disabled.

Differentiation is tape-free reverse mode: each op records its parents and a
vector-Jacobian closure on the output node. :func:`backward` runs a reverse
topological sweep with a stable child order, so gradients are bitwise
reproducible single-threaded.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DimensionError, NumericError

__all__ = [
    "Tensor",
    "wrap",
    "constant",
    "set_precision",
    "get_dtype",
    "set_finite_checks",
    "elementwise",
    "add",
    "sub",
    "hadamard",
    "scale",
    "relu",
    "leaky_relu",
    "exp",
    "log",
    "div",
    "matmul",
    "apply_channels",
    "reduce_axis",
    "total",
    "broadcast_axis",
    "broadcast_cols",
    "concat",
    "reshape",
    "gather_rows",
    "select_rc",
    "softmax_rows",
    "EdgeIndex",
    "build_edge_index",
    "contract_middle",
    "edge_to_node_sum",
    "neighbor_aggregate",
    "segment_sum_sorted",
    "segment_max_sorted",
    "backward",
]

_DTYPE = np.float64
_FINITE_CHECKS = True


def set_precision(precision: str) -> None:
    """Select the scalar type for newly created tensors ("float64"/"float32")."""
    global _DTYPE
    if precision not in ("float64", "float32"):
        raise ValueError(f"unknown precision {precision!r}")
    _DTYPE = np.float64 if precision == "float64" else np.float32


def get_dtype() -> np.dtype:
    return np.dtype(_DTYPE)


def set_finite_checks(enabled: bool) -> None:
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


def _ensure_finite(data: np.ndarray, rule: str) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op {rule!r}")


class Tensor:
    """A value node in the computation graph.

    Leaves are created with :func:`wrap`; interior nodes are produced by ops.
    `grad` is populated by :func:`backward` on every node that requires grad.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_vjp", "_rule", "_needs")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        name: str | None = None,
        parents: tuple["Tensor", ...] = (),
        vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        rule: str = "leaf",
    ):
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = parents
        self._vjp = vjp
        self._rule = rule
        self._needs = requires_grad or any(p._needs for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = self.name or self._rule
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Small conveniences; all defer to the module-level ops.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def wrap(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    """Create a leaf node from array-like data (copied to the default dtype)."""
    arr = np.ascontiguousarray(np.asarray(data, dtype=_DTYPE))
    _ensure_finite(arr, "leaf" if name is None else f"leaf:{name}")
    return Tensor(arr, requires_grad=requires_grad, name=name)


def constant(data) -> Tensor:
    return wrap(data, requires_grad=False)


def _make(data: np.ndarray, rule: str, parents: tuple[Tensor, ...], vjp) -> Tensor:
    _ensure_finite(data, rule)
    if any(p._needs for p in parents):
        return Tensor(data, parents=parents, vjp=vjp, rule=rule)
    # Inference path: drop the tape to keep memory flat.
    return Tensor(data, rule=rule)


def _check_same_shape(a: Tensor, b: Tensor, rule: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{rule}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# pointwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _make(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _make(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "hadamard")
    ad, bd = a.data, b.data
    return _make(ad * bd, "hadamard", (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make(a.data * s, "scale", (a,), lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # derivative at 0 is defined as 0
    return _make(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    slope = float(slope)
    mask = a.data > 0
    out = np.where(mask, a.data, slope * a.data)
    return _make(out, "leaky_relu", (a,), lambda g: (np.where(mask, g, slope * g),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log: non-positive input")
    ad = a.data
    return _make(np.log(ad), "log", (a,), lambda g: (g / ad,))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _make(out, "div", (a, b), lambda g: (g / bd, -g * ad / (bd * bd)))


_ELEMENTWISE = {"add": add, "sub": sub, "hadamard": hadamard}


def elementwise(kind: str, *operands, slope: float = 0.2) -> Tensor:
    """Dispatch by name: add | sub | hadamard | scale | relu | leaky_relu.

    Scalar-with-array is only supported by `scale`; the binary kinds require
    equal shapes.
    """
    if kind in _ELEMENTWISE:
        a, b = operands
        return _ELEMENTWISE[kind](a, b)
    if kind == "scale":
        a, s = operands
        return scale(a, s)
    if kind == "relu":
        (a,) = operands
        return relu(a)
    if kind == "leaky_relu":
        (a,) = operands
        return leaky_relu(a, slope)
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, "matmul", (a, b), lambda g: (g @ bd.T, ad.T @ g))


def apply_channels(x: Tensor, w: Tensor) -> Tensor:
    """Mix the trailing (channel) axis: out[..., j] = sum_i x[..., i] * w[j, i]."""
    if x.data.shape[-1] != w.data.shape[1]:
        raise DimensionError(
            f"apply_channels: channel mismatch {x.data.shape} vs weight {w.data.shape}"
        )
    xd, wd = x.data, w.data

    def vjp(g: np.ndarray):
        gx = g @ wd
        gw = g.reshape(-1, g.shape[-1]).T @ xd.reshape(-1, xd.shape[-1])
        return gx, gw

    return _make(xd @ wd.T, "apply_channels", (x, w), vjp)


def reduce_axis(x: Tensor, axis: int, kind: str = "sum", keepdims: bool = False) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"reduce_axis: axis {axis} out of range for shape {x.data.shape}")
    axis = axis % x.data.ndim
    extent = x.data.shape[axis]
    if kind == "sum":
        out = x.data.sum(axis=axis, keepdims=keepdims)
        factor = 1.0
    elif kind == "mean":
        # Mean over an empty extent is defined as zero (isolated aggregates).
        if extent == 0:
            shp = list(x.data.shape)
            if keepdims:
                shp[axis] = 1
            else:
                del shp[axis]
            out = np.zeros(shp, dtype=x.data.dtype)
            factor = 0.0
        else:
            out = x.data.mean(axis=axis, keepdims=keepdims)
            factor = 1.0 / extent
    else:
        raise ValueError(f"unknown reduction {kind!r}")

    shape = x.data.shape

    def vjp(g: np.ndarray):
        gg = g if keepdims else np.expand_dims(g, axis)
        scale_ = factor if kind == "mean" else 1.0
        return (np.broadcast_to(gg * scale_, shape).copy() if extent else np.zeros(shape, x.data.dtype),)

    return _make(out, f"reduce_{kind}", (x,), vjp)


def total(x: Tensor, kind: str = "sum") -> Tensor:
    """Reduce all entries to a scalar (shape ())."""
    n = x.data.size
    if kind == "sum":
        out = x.data.sum()
        factor = 1.0
    elif kind == "mean":
        out = x.data.mean() if n else 0.0
        factor = (1.0 / n) if n else 0.0
    else:
        raise ValueError(f"unknown reduction {kind!r}")
    shape = x.data.shape

    def vjp(g: np.ndarray):
        return (np.full(shape, float(g) * factor if kind == "mean" else float(g), x.data.dtype),)

    return _make(np.asarray(out, dtype=x.data.dtype), f"total_{kind}", (x,), vjp)


def broadcast_axis(x: Tensor, axis: int, size: int) -> Tensor:
    """Repeat a length-1 axis to `size`; the gradient sums back over it."""
    if size < 1:
        raise DimensionError(f"broadcast_axis: size {size} < 1")
    if x.data.shape[axis] != 1:
        raise DimensionError(f"broadcast_axis: axis {axis} of {x.data.shape} is not 1")
    out = np.repeat(x.data, size, axis=axis)
    return _make(out, "broadcast_axis", (x,), lambda g: (g.sum(axis=axis, keepdims=True),))


def broadcast_cols(v: Tensor, width: int) -> Tensor:
    """K x 1 column vector -> K x width, each column equal to v."""
    if v.data.ndim != 2 or v.data.shape[1] != 1:
        raise DimensionError(f"broadcast_cols: expected K x 1, got {v.data.shape}")
    return broadcast_axis(v, 1, width)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    datas = [p.data for p in parts]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: np.ndarray):
        sl = [slice(None)] * g.ndim
        grads = []
        for i in range(len(sizes)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _make(out, "concat", tuple(parts), vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.data.shape
    out = x.data.reshape(shape)
    return _make(out, "reshape", (x,), lambda g: (g.reshape(old),))


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows (axis 0); the gradient scatter-adds back."""
    idx = np.asarray(idx, dtype=np.int64)
    xd = x.data
    out = xd[idx]

    def vjp(g: np.ndarray):
        gx = np.zeros_like(xd)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(out, "gather_rows", (x,), vjp)


def select_rc(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Pick x[rows[i], cols[i]] as a 1-D vector."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    xd = x.data
    out = xd[rows, cols]

    def vjp(g: np.ndarray):
        gx = np.zeros_like(xd)
        np.add.at(gx, (rows, cols), g)
        return (gx,)

    return _make(out, "select_rc", (x,), vjp)


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction.

    With a boolean mask (True = participate), masked entries are exactly 0 and
    each row must keep at least one unmasked entry.
    """
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows: expected 2-D, got {x.data.shape}")
    xd = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != xd.shape:
            raise DimensionError(f"softmax_rows: mask shape {mask.shape} != {xd.shape}")
        if not mask.any(axis=1).all():
            raise NumericError("softmax_rows: fully masked row")
        shifted = np.where(mask, xd, -np.inf)
        m = shifted.max(axis=1, keepdims=True)
        z = np.exp(np.where(mask, xd - m, -np.inf))
        z = np.where(mask, z, 0.0)
    else:
        m = xd.max(axis=1, keepdims=True)
        z = np.exp(xd - m)
    p = z / z.sum(axis=1, keepdims=True)

    def vjp(g: np.ndarray):
        dot = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - dot),)

    return _make(p, "softmax_rows", (x,), vjp)


# ---------------------------------------------------------------------------
# graph-segment ops

class EdgeIndex:
    """Directed edge arrays for an undirected graph, sorted by destination.

    `src[e] -> dst[e]` lists every ordered incidence, grouped contiguously by
    destination (`indptr` gives the group boundaries). `rev[e]` is the index
    of the opposite orientation, used to run the backward pass with the same
    contiguous reductions as the forward pass.
    """

    __slots__ = ("num_nodes", "src", "dst", "indptr", "rev")

    def __init__(self, num_nodes: int, src: np.ndarray, dst: np.ndarray, indptr: np.ndarray):
        self.num_nodes = num_nodes
        self.src = src
        self.dst = dst
        self.indptr = indptr
        key = dst.astype(np.int64) * num_nodes + src
        rev_key = src.astype(np.int64) * num_nodes + dst
        self.rev = np.searchsorted(key, rev_key)

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


def build_edge_index(indptr: np.ndarray, indices: np.ndarray) -> EdgeIndex:
    """From CSR adjacency (sorted, symmetric, no self-loops)."""
    n = indptr.shape[0] - 1
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    src = indices.astype(np.int64)
    return EdgeIndex(n, src, dst, indptr.astype(np.int64))


def segment_sum_sorted(values: np.ndarray, indptr: np.ndarray, num_segments: int) -> np.ndarray:
    """Sum rows of `values` into segments delimited by `indptr` (empty -> 0)."""
    out = np.zeros((num_segments,) + values.shape[1:], dtype=values.dtype)
    if values.shape[0] == 0:
        return out
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    if nonempty.any():
        out[nonempty] = np.add.reduceat(values, starts[nonempty], axis=0)
    return out


def segment_max_sorted(values: np.ndarray, indptr: np.ndarray, num_segments: int) -> np.ndarray:
    """Per-segment max of 1-D values; empty segments yield -inf."""
    out = np.full(num_segments, -np.inf, dtype=values.dtype)
    if values.shape[0] == 0:
        return out
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    if nonempty.any():
        out[nonempty] = np.maximum.reduceat(values, starts[nonempty])
    return out


def contract_middle(x: Tensor, m: np.ndarray) -> Tensor:
    """Apply a constant matrix along axis 1: out[n, e, k] = sum_d x[n, d, k] m[d, e]."""
    m = np.asarray(m, dtype=x.data.dtype)
    if x.data.ndim != 3 or x.data.shape[1] != m.shape[0]:
        raise DimensionError(f"contract_middle: {x.data.shape} incompatible with {m.shape}")
    out = np.einsum("ndk,de->nek", x.data, m)
    return _make(out, "contract_middle", (x,), lambda g: (np.einsum("nek,de->ndk", g, m),))


def edge_to_node_sum(values: Tensor, edges: "EdgeIndex") -> Tensor:
    """Sum per-edge scalars into their destination nodes (empty -> 0)."""
    if values.data.shape != (edges.num_edges,):
        raise DimensionError(
            f"edge_to_node_sum: {values.data.shape} != ({edges.num_edges},)"
        )
    out = segment_sum_sorted(values.data, edges.indptr, edges.num_nodes)
    return _make(out, "edge_to_node_sum", (values,), lambda g: (g[edges.dst],))


def neighbor_aggregate(x: Tensor, edges: EdgeIndex, weights=None) -> Tensor:
    """out[v] = sum over incident edges e (dst[e] = v) of w[e] * x[src[e]].

    `weights` may be None (unweighted), a constant per-edge array (e.g. 1/deg
    for mean aggregation), or a Tensor (attention coefficients, which then
    receive gradients). Nodes with no edges get zero rows.
    """
    xd = x.data
    if xd.shape[0] != edges.num_nodes:
        raise DimensionError(
            f"neighbor_aggregate: {xd.shape[0]} rows for {edges.num_nodes} nodes"
        )
    w_t = weights if isinstance(weights, Tensor) else None
    wd = w_t.data if w_t is not None else weights
    gathered = xd[edges.src]
    if wd is not None:
        gathered = gathered * wd.reshape((-1,) + (1,) * (xd.ndim - 1))
    out = segment_sum_sorted(gathered, edges.indptr, edges.num_nodes)

    parents = (x, w_t) if w_t is not None else (x,)

    def vjp(g: np.ndarray):
        # dL/dx[u] = sum over edges f with dst[f] = u of w[rev[f]] * g[dst[rev[f]]]
        g_rev = g[edges.dst[edges.rev]]
        if wd is not None:
            g_rev = g_rev * wd[edges.rev].reshape((-1,) + (1,) * (xd.ndim - 1))
        gx = segment_sum_sorted(g_rev, edges.indptr, edges.num_nodes)
        if w_t is None:
            return (gx,)
        gw = (g[edges.dst] * xd[edges.src]).reshape(edges.num_edges, -1).sum(axis=1)
        return gx, gw

    return _make(out, "neighbor_aggregate", parents, vjp)


# ---------------------------------------------------------------------------
# reverse sweep


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        # Reversed so children are visited in declaration order (stable).
        for p in reversed(node._parents):
            if id(p) not in seen and p._needs:
                stack.append((p, False))
    return order


def backward(loss: Tensor, leaves: Iterable[Tensor] = ()) -> None:
    """Accumulate gradients of a scalar loss into every requires-grad node.

    `leaves` may list parameter nodes that must end up with a gradient even

    if the loss does not depend on them (they get zeros).
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward: loss has shape {loss.data.shape}, expected scalar")
    if not np.isfinite(loss.data).all():
        raise NumericError("backward: loss is not finite")

    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericError(f"backward: non-finite gradient at op {node._rule!r}")
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p._needs:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg

    for leaf in leaves:
        if leaf.requires_grad and leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
