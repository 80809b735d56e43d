"""Joint node/feature/label permutation actions and verification oracles.

This module is the verification backbone of the repo: it provides the group
action on stacked feature|label matrices and on graphs, membership tests for
the degenerate-input exclusion set, permutation-invariant polynomial families
used as test utilities, and a brute-force null-space computation of the
dimension of equivariant linear map spaces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import DimensionError
from .graphdata import Graph, make_graph
from .rng import fisher_yates, stream

__all__ = [
    "PermTriple",
    "identity_triple",
    "compose_triples",
    "invert_triple",
    "sample_perm_triple",
    "apply_triple",
    "apply_to_graph",
    "in_exclusion_set",
    "multi_indices",
    "pmp",
    "dmp",
    "BasisResult",
    "equivariant_basis_dim",
]


@dataclass(frozen=True)
class PermTriple:
    """A node permutation, feature permutation and label permutation.

    Each component maps position i to sigma(i) (one-line notation).
    """

    sigma_n: np.ndarray
    sigma_f: np.ndarray
    sigma_c: np.ndarray

    def __post_init__(self):
        for name, sig in (("sigma_n", self.sigma_n), ("sigma_f", self.sigma_f), ("sigma_c", self.sigma_c)):
            sig = np.asarray(sig, dtype=np.int64)
            object.__setattr__(self, name, sig)
            if sorted(sig.tolist()) != list(range(len(sig))):
                raise ValueError(f"{name} is not a permutation: {sig}")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.sigma_n), len(self.sigma_f), len(self.sigma_c)


def identity_triple(n: int, f: int, c: int) -> PermTriple:
    return PermTriple(np.arange(n), np.arange(f), np.arange(c))


def _inv(sigma: np.ndarray) -> np.ndarray:
    out = np.empty_like(sigma)
    out[sigma] = np.arange(len(sigma))
    return out


def compose_triples(p2: PermTriple, p1: PermTriple) -> PermTriple:
    """The triple acting as 'first p1, then p2'."""
    return PermTriple(
        p2.sigma_n[p1.sigma_n], p2.sigma_f[p1.sigma_f], p2.sigma_c[p1.sigma_c]
    )


def invert_triple(p: PermTriple) -> PermTriple:
    return PermTriple(_inv(p.sigma_n), _inv(p.sigma_f), _inv(p.sigma_c))


def sample_perm_triple(n: int, f: int, c: int, seed: int) -> PermTriple:
    """Uniform triple via per-component Fisher-Yates, deterministic in seed."""
    if min(n, f, c) < 1:
        raise ValueError("component sizes must be >= 1")
    rng = stream(seed, "perm")
    return PermTriple(fisher_yates(n, rng), fisher_yates(f, rng), fisher_yates(c, rng))


def apply_triple(p: PermTriple, xy: np.ndarray) -> np.ndarray:
    """Act on an N x (F+C) matrix: rows by sigma_n, the first F columns by
    sigma_f, the last C columns by sigma_c.

    out[i, j] = xy[sigma_n^-1(i), sigma_f^-1(j)]          for j <  F
    out[i, j] = xy[sigma_n^-1(i), F + sigma_c^-1(j - F)]  otherwise
    """
    n, f, c = p.sizes
    xy = np.asarray(xy)
    if xy.shape[:2] != (n, f + c):
        raise DimensionError(f"apply_triple: matrix {xy.shape} does not match sizes {(n, f, c)}")
    col_src = np.concatenate([_inv(p.sigma_f), f + _inv(p.sigma_c)])
    return xy[_inv(p.sigma_n)][:, col_src]


def apply_to_graph(p: PermTriple, g: Graph) -> Graph:
    """Relabel nodes, permute feature columns, remap class ids."""
    n, f, c = p.sizes
    if (n, f, c) != (g.num_nodes, g.feature_dim, g.num_classes):
        raise DimensionError(
            f"apply_to_graph: triple sizes {(n, f, c)} do not match graph "
            f"({g.num_nodes}, {g.feature_dim}, {g.num_classes})"
        )
    inv_n = _inv(p.sigma_n)
    pairs = []
    for v in range(n):
        sv = p.sigma_n[v]
        for u in g.neighbors(v):
            if v < u:
                pairs.append((sv, p.sigma_n[u]))
    features = g.features[inv_n][:, _inv(p.sigma_f)]
    labels = p.sigma_c[g.labels[inv_n]]
    return make_graph(
        n,
        np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        features,
        labels,
        c,
        p.sigma_n[g.train_idx],
        p.sigma_n[g.val_idx],
        p.sigma_n[g.test_idx],
    )


# ---------------------------------------------------------------------------
# exclusion set


def in_exclusion_set(xy: np.ndarray, num_feature_cols: int, tol: float) -> bool:
    """True iff two feature-column sums, two label-column sums, or two full
    row sums coincide within tol.

    These are the degenerate hyperplanes on which orbit-separating descriptors
    lose injectivity; generic (e.g. Gaussian) inputs avoid them almost surely.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    xy = np.asarray(xy, dtype=np.float64)
    f = num_feature_cols
    groups = [xy[:, :f].sum(axis=0), xy[:, f:].sum(axis=0), xy.sum(axis=1)]
    for sums in groups:
        if sums.size < 2:
            continue
        s = np.sort(sums)
        if np.min(np.diff(s)) <= tol:
            return True
    return False


# ---------------------------------------------------------------------------
# invariant polynomial families


def multi_indices(dims: int, max_degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree <= max_degree, in graded
    lexicographic order (degree ascending, then lexicographic ascending)."""
    out: list[tuple[int, ...]] = []
    for deg in range(max_degree + 1):
        block = set()
        for slots in combinations_with_replacement(range(dims), deg):
            alpha = [0] * dims
            for s in slots:
                alpha[s] += 1
            block.add(tuple(alpha))
        out.extend(sorted(block))
    return out


def pmp(x: np.ndarray, max_degree: int) -> np.ndarray:
    """Power-sum polynomials over rows: entry t is sum_n prod_d x[n,d]^alpha_d
    for the t-th multi-index. Length is binom(max_degree + D, D); invariant
    under any row permutation."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    alphas = multi_indices(d, max_degree)
    out = np.empty(len(alphas))
    for t, alpha in enumerate(alphas):
        out[t] = np.prod(x ** np.asarray(alpha, dtype=np.float64), axis=1).sum()
    assert len(alphas) == math.comb(max_degree + d, d)
    return out


def dmp(xy: np.ndarray, num_feature_cols: int, num_label_cols: int, max_degree: int) -> np.ndarray:
    """Doubly power-sum polynomials: for each N-variate multi-index, sum the
    monomial over feature columns and, separately, over label columns; the two
    blocks are concatenated. Invariant under any feature/label permutation."""
    xy = np.asarray(xy, dtype=np.float64)
    n = xy.shape[0]
    f, c = num_feature_cols, num_label_cols
    if xy.shape[1] != f + c:
        raise DimensionError(f"dmp: {xy.shape[1]} columns != {f} + {c}")
    alphas = np.asarray(multi_indices(n, max_degree), dtype=np.float64)  # (T, N)
    # cols ** alpha for every (t, column) pair: powers[t, j] = prod_n xy[n, j]^alpha[t, n]
    powers = np.prod(xy[None, :, :] ** alphas[:, :, None], axis=1)
    return np.concatenate([powers[:, :f].sum(axis=1), powers[:, f:].sum(axis=1)])


# ---------------------------------------------------------------------------
# equivariant linear map spaces by brute force


@dataclass
class BasisResult:
    group: str
    dim_in: int
    dim_out: int
    dimension: int
    basis: np.ndarray  # (dimension, dim_out * dim_in), orthonormal rows
    singular_values: np.ndarray

    def residual(self, flat_map: np.ndarray) -> float:
        """Distance of a vectorized map from the computed null space."""
        v = np.asarray(flat_map, dtype=np.float64).reshape(-1)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            return 0.0
        v = v / nrm
        return float(np.linalg.norm(v - self.basis.T @ (self.basis @ v)))


def _perm_matrix(sigma: np.ndarray) -> np.ndarray:
    n = len(sigma)
    out = np.zeros((n, n))
    out[sigma, np.arange(n)] = 1.0
    return out


def _adjacent_transpositions(n: int) -> list[np.ndarray]:
    gens = []
    for i in range(n - 1):
        sig = np.arange(n)
        sig[i], sig[i + 1] = sig[i + 1], sig[i]
        gens.append(sig)
    return gens


def _group_generators(group: str, n: int, f: int, c: int) -> list[np.ndarray]:
    """Column-space representation matrices of adjacent-transposition
    generators, acting on the flattened (node, column) input."""
    gens: list[np.ndarray] = []
    if group == "deepsets":
        for t in _adjacent_transpositions(n):
            gens.append(_perm_matrix(t))
        return gens
    width = f if group == "dss" else f + c
    eye_cols = np.eye(width)
    for t in _adjacent_transpositions(n):
        gens.append(np.kron(_perm_matrix(t), eye_cols))
    for t in _adjacent_transpositions(f):
        q = np.eye(width)
        pf = _perm_matrix(t)
        q[:f, :f] = pf
        gens.append(np.kron(np.eye(n), q))
    if group == "triple":
        for t in _adjacent_transpositions(c):
            q = np.eye(width)
            q[f:, f:] = _perm_matrix(t)
            gens.append(np.kron(np.eye(n), q))
    return gens


def equivariant_basis_dim(
    group: str,
    n: int,
    f: int = 0,
    c: int = 0,
    k1: int = 1,
    k2: int = 1,
    tol: float = 1e-9,
    max_map_dim: int = 4000,
) -> BasisResult:
    """Dimension and orthonormal basis of the space of equivariant linear maps.

    group: "deepsets" (node permutations acting on N x k arrays),
           "dss" (node x feature permutations on N x F x k),
           "triple" (node x feature x label permutations on N x (F+C) x k).

    A map L is equivariant iff L P(g) = P(g) L for the adjacent-transposition
    generators g of each factor; the null space of the stacked commutation
    constraints is computed by SVD with singular values below tol * s_max
    treated as zero.
    """
    if group not in ("deepsets", "dss", "triple"):
        raise ValueError(f"unknown group {group!r}")
    if group == "dss" and f < 1:
        raise ValueError("dss needs f >= 1")
    if group == "triple" and (f < 1 or c < 1):
        raise ValueError("triple needs f >= 1 and c >= 1")

    base = {"deepsets": n, "dss": n * f, "triple": n * (f + c)}[group]
    dim_in, dim_out = base * k1, base * k2
    if dim_in * dim_out > max_map_dim:
        raise DimensionError(
            f"map dimension {dim_in}x{dim_out} exceeds the guard ({max_map_dim} unknowns)"
        )

    blocks = []
    for g in _group_generators(group, n, f, c):
        p_in = np.kron(g, np.eye(k1)) if k1 > 1 else g
        p_out = np.kron(g, np.eye(k2)) if k2 > 1 else g
        blocks.append(np.kron(np.eye(dim_out), p_in.T) - np.kron(p_out, np.eye(dim_in)))
    constraints = np.vstack(blocks)
    _, s, vh = np.linalg.svd(constraints, full_matrices=True)
    cutoff = tol * (s[0] if s.size else 1.0)
    rank = int(np.sum(s > cutoff))
    null = vh[rank:]
    return BasisResult(
        group=group,
        dim_in=dim_in,
        dim_out=dim_out,
        dimension=null.shape[0],
        basis=null,
        singular_values=s,
    )
