"""Graph data model, on-disk dataset format, preprocessing, and synthetic graphs.

Dataset directory layout (all text, UTF-8, LF newlines):

* ``edges.tsv``     one edge per line, ``u<TAB>v``, 0-indexed; undirected.
* ``features.csv``  N lines of F comma-separated floats.
* ``labels.csv``    N lines, one integer class id each.
* ``meta.json``     ``{"num_nodes": N, "num_classes": C, "feature_dim": F}``.
* ``splits.json``   ``{"train": [...], "val": [...], "test": [...]}``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, NumericError
from .rng import fisher_yates, stream

__all__ = [
    "Graph",
    "load_dataset",
    "save_dataset",
    "l2_normalize_rows",
    "RandomWalkOperator",
    "rw_normalize",
    "pca_reduce",
    "gen_sbm",
]


@dataclass(frozen=True)
class Graph:
    """Immutable node/edge/feature/label/split record for one dataset.

    Adjacency is CSR-compressed: ``indices[indptr[v]:indptr[v+1]]`` is the
    sorted neighbor list of node v. Lists are deduplicated and symmetric, and
    hold no self-loops (the message-passing update carries an explicit self
    term instead).
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return int(self.indices.shape[0]) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def onehot_labels(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_classes))
        out[np.arange(self.num_nodes), self.labels] = 1.0
        return out


def _csr_from_pairs(num_nodes: int, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrize + dedupe an edge pair list into CSR arrays."""
    if pairs.size == 0:
        return np.zeros(num_nodes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    both = np.vstack([pairs, pairs[:, ::-1]])
    both = np.unique(both, axis=0)
    u, v = both[:, 0], both[:, 1]
    counts = np.bincount(u, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, v.astype(np.int64)


def make_graph(
    num_nodes: int,
    edge_pairs: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    train_idx,
    val_idx,
    test_idx,
    drop_self_loops: bool = True,
) -> Graph:
    """Validate inputs and build a Graph (used by loaders and generators)."""
    edge_pairs = np.asarray(edge_pairs, dtype=np.int64).reshape(-1, 2)
    if edge_pairs.size and (edge_pairs.min() < 0 or edge_pairs.max() >= num_nodes):
        raise DataError("edge endpoint out of range")
    if drop_self_loops and edge_pairs.size:
        loops = edge_pairs[:, 0] == edge_pairs[:, 1]
        if loops.any():
            warnings.warn(f"dropping {int(loops.sum())} self-loop edge(s)")
            edge_pairs = edge_pairs[~loops]
    features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != num_nodes:
        raise DataError(f"features have {features.shape[0]} rows for {num_nodes} nodes")
    if labels.shape != (num_nodes,):
        raise DataError(f"labels have shape {labels.shape}, expected ({num_nodes},)")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"label id outside [0, {num_classes})")
    splits = []
    seen = np.zeros(num_nodes, dtype=bool)
    for name, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx)):
        idx = np.asarray(sorted(int(i) for i in idx), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= num_nodes):
            raise DataError(f"{name} split index out of range")
        if len(np.unique(idx)) != len(idx) or seen[idx].any():
            raise DataError(f"{name} split overlaps another split or repeats indices")
        seen[idx] = True
        splits.append(idx)
    indptr, indices = _csr_from_pairs(num_nodes, edge_pairs)
    return Graph(
        num_nodes=num_nodes,
        indptr=indptr,
        indices=indices,
        features=features,
        labels=labels,
        num_classes=num_classes,
        train_idx=splits[0],
        val_idx=splits[1],
        test_idx=splits[2],
    )


# ---------------------------------------------------------------------------
# dataset directory IO


def _read_edges(path: Path) -> np.ndarray:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer endpoint") from exc
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _read_features(path: Path, feature_dim: int) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != feature_dim:
                raise DataError(
                    f"{path}:{lineno}: expected {feature_dim} values, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed float") from exc
    return np.asarray(rows, dtype=np.float64).reshape(-1, feature_dim)


def _read_labels(path: Path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed label") from exc
    return np.asarray(out, dtype=np.int64)


def load_dataset(path: str | Path) -> Graph:
    """Load a dataset directory; edges are symmetrized and deduplicated."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root}: not a dataset directory")
    try:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
        splits = json.loads((root / "splits.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{root}: missing {exc.filename}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{root}: malformed JSON: {exc}") from exc
    for key in ("num_nodes", "num_classes", "feature_dim"):
        if key not in meta:
            raise DataError(f"{root}/meta.json: missing key {key!r}")
    n = int(meta["num_nodes"])
    c = int(meta["num_classes"])
    f = int(meta["feature_dim"])

    features = _read_features(root / "features.csv", f)
    if features.shape[0] != n:
        raise DataError(f"{root}/features.csv: {features.shape[0]} rows, meta says {n}")
    labels = _read_labels(root / "labels.csv")
    if labels.shape[0] != n:
        raise DataError(f"{root}/labels.csv: {labels.shape[0]} rows, meta says {n}")
    pairs = _read_edges(root / "edges.tsv")
    for key in ("train", "val", "test"):
        if key not in splits:
            raise DataError(f"{root}/splits.json: missing key {key!r}")
    return make_graph(n, pairs, features, labels, c, splits["train"], splits["val"], splits["test"])


def save_dataset(path: str | Path, graph: Graph) -> None:
    """Write a Graph in the dataset directory layout (deterministic bytes)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for v in range(graph.num_nodes):
        for u in graph.neighbors(v):
            if v < u:
                lines.append(f"{v}\t{u}\n")
    (root / "edges.tsv").write_text("".join(lines), encoding="utf-8")
    (root / "features.csv").write_text(
        "".join(",".join(repr(float(x)) for x in row) + "\n" for row in graph.features),
        encoding="utf-8",
    )
    (root / "labels.csv").write_text(
        "".join(f"{int(l)}\n" for l in graph.labels), encoding="utf-8"
    )
    (root / "meta.json").write_text(
        json.dumps(
            {
                "num_nodes": graph.num_nodes,
                "num_classes": graph.num_classes,
                "feature_dim": graph.feature_dim,
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    (root / "splits.json").write_text(
        json.dumps(
            {
                "train": [int(i) for i in graph.train_idx],
                "val": [int(i) for i in graph.val_idx],
                "test": [int(i) for i in graph.test_idx],
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# preprocessing


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe


class RandomWalkOperator:
    """Row-stochastic adjacency D^-1 A applied as a sparse product.

    Rows of degree-0 nodes are all-zero.
    """

    def __init__(self, graph: Graph):
        self._indptr = graph.indptr
        self._indices = graph.indices
        self._n = graph.num_nodes
        deg = graph.degrees().astype(np.float64)
        self._inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)

    def apply(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if m.shape[0] != self._n:
            raise DimensionError(f"operator expects {self._n} rows, got {m.shape[0]}")
        gathered = m[self._indices]
        out = np.zeros_like(m)
        starts = self._indptr[:-1]
        nonempty = self._indptr[1:] > starts
        if nonempty.any():
            out[nonempty] = np.add.reduceat(gathered, starts[nonempty], axis=0)
        return out * self._inv_deg.reshape((-1,) + (1,) * (m.ndim - 1))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self._n, self._n))
        for v in range(self._n):
            nbrs = self._indices[self._indptr[v] : self._indptr[v + 1]]
            if nbrs.size:
                out[v, nbrs] = 1.0 / nbrs.size
        return out


def rw_normalize(graph: Graph) -> RandomWalkOperator:
    return RandomWalkOperator(graph)


def pca_reduce(x: np.ndarray, d: int, tol: float = 1e-9, max_iter: int = 5000) -> np.ndarray:
    """Project rows onto the top-d principal directions of mean-centered x.

    Eigenpairs of the smaller Gram matrix are extracted one at a time by power
    iteration with deflation; a component is converged when its residual
    ||G v - lam v|| drops below tol * lam_max. The sign of each component is
    fixed by making its largest-magnitude feature loading positive.
    """
    x = np.asarray(x, dtype=np.float64)
    n, f = x.shape
    if not 1 <= d <= min(n, f):
        raise DimensionError(f"pca_reduce: d={d} outside [1, min({n}, {f})]")
    xc = x - x.mean(axis=0, keepdims=True)
    use_rows = n <= f
    gram = (xc @ xc.T) if use_rows else (xc.T @ xc)
    m = gram.shape[0]

    rng = stream(0, "pca-start")
    vectors = np.zeros((m, d))
    lam_max = None
    deflated = gram.copy()
    for comp in range(d):
        v = rng.standard_normal(m)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            gv = deflated @ v
            lam = float(v @ gv)
            norm = np.linalg.norm(gv)
            if norm == 0.0:
                # Exhausted the spectrum; remaining variance is zero.
                break
            resid = np.linalg.norm(gv - lam * v)
            v = gv / norm
            ref = lam_max if lam_max is not None else max(abs(lam), 1.0)
            if resid <= tol * ref:
                break
        else:
            raise NumericError(f"pca_reduce: component {comp} did not converge in {max_iter} iterations")
        if lam_max is None:
            lam_max = max(abs(lam), np.finfo(float).tiny)
        vectors[:, comp] = v
        deflated = deflated - lam * np.outer(v, v)

    if use_rows:
        # Row-space eigenvectors u -> feature directions X^T u / ||X^T u||.
        loadings = xc.T @ vectors
        norms = np.linalg.norm(loadings, axis=0, keepdims=True)
        loadings = loadings / np.where(norms > 0, norms, 1.0)
    else:
        loadings = vectors
    # Deterministic sign convention.
    for comp in range(d):
        col = loadings[:, comp]
        if col[np.argmax(np.abs(col))] < 0:
            loadings[:, comp] = -col
    return xc @ loadings


# ---------------------------------------------------------------------------
# synthetic graphs


def gen_sbm(
    classes: int,
    nodes_per_class: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_noise: float,
    seed: int,
) -> Graph:
    """Stochastic block model with class-mean features and 50/25/25 splits.

    Class means are orthonormal vectors in R^feature_dim (requires
    feature_dim >= classes); features add isotropic Gaussian noise of scale
    `feature_noise`. Everything is a pure function of the arguments.
    """
    if not 0 <= p_out <= p_in <= 1:
        raise ValueError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if feature_noise < 0:
        raise ValueError("feature_noise must be nonnegative")
    if feature_dim < classes:
        raise DimensionError(f"feature_dim {feature_dim} < classes {classes}")

    n = classes * nodes_per_class
    labels = np.repeat(np.arange(classes), nodes_per_class)

    rng_edges = stream(seed, "sbm-edges")
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    probs = np.where(same, p_in, p_out)
    keep = rng_edges.random(iu.shape[0]) < probs
    pairs = np.stack([iu[keep], ju[keep]], axis=1)

    rng_feat = stream(seed, "sbm-features")
    means = np.zeros((classes, feature_dim))
    means[np.arange(classes), np.arange(classes)] = 1.0
    features = means[labels] + feature_noise * rng_feat.standard_normal((n, feature_dim))

    rng_split = stream(seed, "sbm-splits")
    train, val, test = [], [], []
    for c in range(classes):
        members = np.where(labels == c)[0]
        order = members[fisher_yates(len(members), rng_split)]
        n_train = int(round(0.5 * len(order)))
        n_val = int(round(0.25 * len(order)))
        train.extend(order[:n_train])
        val.extend(order[n_train : n_train + n_val])
        test.extend(order[n_train + n_val :])

    return make_graph(n, pairs, features, labels, classes, train, val, test)

