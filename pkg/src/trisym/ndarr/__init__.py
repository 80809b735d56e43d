"""Array engine: reverse-mode autodiff, Adam, ridge least squares, grad checks."""
from .engine import (
    EdgeIndex,
    Tensor,
    add,
    apply_channels,
    backward,
    broadcast_axis,
    broadcast_cols,
    build_edge_index,
    concat,
    constant,
    contract_middle,
    div,
    edge_to_node_sum,
    elementwise,
    exp,
    gather_rows,
    get_dtype,
    hadamard,
    leaky_relu,
    log,
    matmul,
    neighbor_aggregate,
    reduce_axis,
    relu,
    reshape,
    scale,
    segment_max_sorted,
    segment_sum_sorted,
    select_rc,
    set_finite_checks,
    set_precision,
    softmax_rows,
    sub,
    total,
    wrap,
)
from .gradcheck import GradCheckReport, grad_check
from .optim import AdamState, adam_step
from .ridge import ridge_solve

__all__ = [
    "EdgeIndex",
    "Tensor",
    "AdamState",
    "GradCheckReport",
    "add",
    "adam_step",
    "apply_channels",
    "backward",
    "broadcast_axis",
    "broadcast_cols",
    "build_edge_index",
    "concat",
    "constant",
    "contract_middle",
    "div",
    "edge_to_node_sum",
    "elementwise",
    "exp",
    "gather_rows",
    "get_dtype",
    "grad_check",
    "hadamard",
    "leaky_relu",
    "log",
    "matmul",
    "neighbor_aggregate",
    "reduce_axis",
    "relu",
    "reshape",
    "ridge_solve",
    "scale",
    "segment_max_sorted",
    "segment_sum_sorted",
    "select_rc",
    "set_finite_checks",
    "set_precision",
    "softmax_rows",
    "sub",
    "total",
    "wrap",
]
