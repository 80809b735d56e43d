"""Ridge least squares via the normal equations.

Solves argmin_W ||T - R W||_F^2 + lam ||W||_F^2 through a symmetric
(Cholesky) factorization of R^T R + lam I. The result is a plain array,
constant with respect to any gradient tape.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import DimensionError, NumericError

__all__ = ["ridge_solve"]

_MAX_ESCALATION = 6  # lam is retried at 10x steps, up to 1e6x the initial value


def ridge_solve(r: np.ndarray, t: np.ndarray, lam: float) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if r.ndim != 2 or t.ndim != 2 or r.shape[0] != t.shape[0]:
        raise DimensionError(f"ridge_solve: incompatible shapes {r.shape} and {t.shape}")
    if lam < 0:
        raise ValueError("ridge_solve: lam must be nonnegative")
    if r.shape[0] < 1:
        raise DimensionError("ridge_solve: need at least one row")

    gram = r.T @ r
    rhs = r.T @ t
    p = r.shape[1]
    eye = np.eye(p)

    attempts = [lam * 10.0**k for k in range(_MAX_ESCALATION + 1)] if lam > 0 else [0.0]
    for attempt in attempts:
        try:
            cf = scipy.linalg.cho_factor(gram + attempt * eye, lower=True, check_finite=False)
            w = scipy.linalg.cho_solve(cf, rhs, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            continue
        if np.all(np.isfinite(w)):
            return w
    raise NumericError(
        f"ridge_solve: system stays singular after escalating lam from {lam} "
        f"to {attempts[-1]}"
    )
