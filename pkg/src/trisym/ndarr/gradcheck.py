"""Central-difference verification of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import NumericError
from .engine import Tensor, backward, wrap

__all__ = ["GradCheckReport", "grad_check"]

LossBuilder = Callable[[dict[str, Tensor]], Tensor]


@dataclass
class GradCheckReport:
    tol: float
    max_rel_err: float = 0.0
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def grad_check(
    build_loss: LossBuilder,
    params: dict[str, np.ndarray],
    tol: float = 1e-5,
    h: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar loss against central differences.

    `build_loss` must construct the loss from the given parameter tensors and
    be deterministic; it is evaluated twice to detect nondeterminism. The
    relative error uses denominator max(1, |analytic|, |numeric|) so that
    zero-gradient parameters do not produce spurious failures.
    """
    report = GradCheckReport(tol=tol)
    if not params:
        return report

    def eval_loss(overrides: dict[str, np.ndarray]) -> float:
        leaves = {k: wrap(v) for k, v in overrides.items()}
        return float(build_loss(leaves).data)

    first = eval_loss(params)
    second = eval_loss(params)
    if first != second:
        raise NumericError(
            f"grad_check: builder is not deterministic ({first!r} != {second!r})"
        )

    leaves = {k: wrap(v, requires_grad=True, name=k) for k, v in params.items()}
    loss = build_loss(leaves)
    backward(loss, leaves.values())
    analytic = {k: leaf.grad for k, leaf in leaves.items()}

    for name in sorted(params):
        base = params[name]
        worst = 0.0
        flat = base.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            plus = {k: (v.copy() if k == name else v) for k, v in params.items()}
            plus[name].reshape(-1)[i] = orig + h
            minus = {k: (v.copy() if k == name else v) for k, v in params.items()}
            minus[name].reshape(-1)[i] = orig - h
            fd = (eval_loss(plus) - eval_loss(minus)) / (2.0 * h)
            an = float(analytic[name].reshape(-1)[i])
            worst = max(worst, _rel_err(an, fd))
        report.per_param[name] = worst
        report.max_rel_err = max(report.max_rel_err, worst)
    return report
