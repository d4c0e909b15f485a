"""Undirected graphs in compressed row form, normalization operators and edge splits."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """Raised for malformed edge-list, feature or manifest files."""


@dataclass(frozen=True, eq=False)
class CsrGraph:
    """Symmetric adjacency in CSR form.

    Both directions of every undirected edge are stored. ``weights`` holds
    edge multiplicities and is ``None`` for simple graphs; sampled negative
    graphs may repeat an edge, in which case the repeat shows up as weight 2
    rather than as a duplicate column entry.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        if self.weights is None:
            return len(self.col_indices) // 2
        return int(round(self.weights.sum())) // 2

    def degrees(self) -> np.ndarray:
        return degrees(self)

    def edges(self) -> np.ndarray:
        """Canonical (i < j) undirected edge list, one row per distinct edge."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.row_offsets))
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def adjacency(self) -> sp.csr_matrix:
        """Adjacency as a scipy CSR matrix (cached)."""
        if "adj" not in self._cache:
            data = (np.ones(len(self.col_indices)) if self.weights is None
                    else self.weights.astype(np.float64))
            self._cache["adj"] = sp.csr_matrix(
                (data, self.col_indices, self.row_offsets),
                shape=(self.num_nodes, self.num_nodes))
        return self._cache["adj"]

    def edge_keys(self) -> np.ndarray:
        """Sorted int64 keys ``i * n + j`` for canonical edges; used for membership tests."""
        if "keys" not in self._cache:
            e = self.edges()
            self._cache["keys"] = np.sort(e[:, 0].astype(np.int64) * self.num_nodes + e[:, 1])
        return self._cache["keys"]

    def has_edges(self, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
        return keys_member(pair_keys(src, dst, self.num_nodes), self.edge_keys())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.num_nodes).tobytes())
        h.update(self.row_offsets.astype(np.int64).tobytes())
        h.update(self.col_indices.astype(np.int64).tobytes())
        if self.weights is not None:
            h.update(self.weights.astype(np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix has non-finite entries")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EdgeSplit:
    train_edges: np.ndarray
    valid_edges: np.ndarray
    test_edges: np.ndarray
    split_seed: int
    ratios: tuple = (0.7, 0.1, 0.2)
    num_nodes: int = 0
    # fixed evaluation pools of non-edges, keyed by "valid"/"test"
    neg_pools: dict = field(default_factory=dict)
    pool_seed: int | None = None

    def all_edges(self) -> np.ndarray:
        return np.concatenate([self.train_edges, self.valid_edges, self.test_edges])

    def train_graph(self) -> CsrGraph:
        return from_edges(self.train_edges, self.num_nodes)

    def full_graph(self) -> CsrGraph:
        return from_edges(self.all_edges(), self.num_nodes)


def pair_keys(src, dst, n: int) -> np.ndarray:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    return np.minimum(src, dst) * n + np.maximum(src, dst)


def keys_member(keys: np.ndarray, sorted_keys: np.ndarray) -> np.ndarray:
    if len(sorted_keys) == 0:
        return np.zeros(len(keys), dtype=bool)
    pos = np.searchsorted(sorted_keys, keys)
    pos = np.minimum(pos, len(sorted_keys) - 1)
    return sorted_keys[pos] == keys


def from_edges(edges, num_nodes: int | None = None, multi: bool = False) -> CsrGraph:
    """Build a symmetric, self-loop-free graph from an (m, 2) edge array.

    With ``multi=False`` repeated edges collapse to one; with ``multi=True``
    they are kept as multiplicities in ``weights``.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes is None:
        num_nodes = int(edges.max()) + 1 if len(edges) else 0
    if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
        raise IndexError(f"node id out of range [0, {num_nodes})")
    edges = edges[edges[:, 0] != edges[:, 1]]
    keys = pair_keys(edges[:, 0], edges[:, 1], num_nodes)
    keys, counts = np.unique(keys, return_counts=True)
    lo, hi = np.divmod(keys, max(num_nodes, 1))
    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    w = np.concatenate([counts, counts]).astype(np.float64)
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])
    weights = w if multi and np.any(w != 1) else None
    return CsrGraph(num_nodes, offsets, dst.astype(np.int64), weights)


def load_edge_list(path, num_nodes: int | None = None) -> CsrGraph:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'src dst', got {line.strip()!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line.strip()!r}") from None
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if num_nodes is not None and len(edges) and edges.max() >= num_nodes:
        bad = int(np.argmax(edges.max(axis=1) >= num_nodes))
        raise IndexError(f"{path}: node id {edges[bad].max()} >= num_nodes {num_nodes} (edge {bad + 1})")
    if len(edges) and edges.min() < 0:
        raise GraphFormatError(f"{path}: negative node id")
    return from_edges(edges, num_nodes)


def save_edge_list(path, edges) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in np.asarray(edges).reshape(-1, 2):
            fh.write(f"{i} {j}\n")


def load_features(path) -> FeatureMatrix:
    try:
        data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None
    return FeatureMatrix(data)


def save_features(path, X) -> None:
    np.savetxt(path, np.asarray(X), delimiter=",", fmt="%.17g")


def degrees(g: CsrGraph) -> np.ndarray:
    if g.weights is None:
        return np.diff(g.row_offsets)
    rows = np.repeat(np.arange(g.num_nodes), np.diff(g.row_offsets))
    return np.bincount(rows, weights=g.weights, minlength=g.num_nodes)


def safe_degrees(deg) -> np.ndarray:
    """Degrees as floats with zeros replaced by one."""
    deg = np.asarray(deg, dtype=np.float64)
    return np.where(deg > 0, deg, 1.0)


def normalized_adjacency(g: CsrGraph, degree_norm=None) -> sp.csr_matrix:
    """D^{-1/2} A D^{-1/2} as a sparse matrix; ``degree_norm`` overrides D."""
    deg = degrees(g) if degree_norm is None else degree_norm
    s = 1.0 / np.sqrt(safe_degrees(deg))
    return (sp.diags(s) @ g.adjacency() @ sp.diags(s)).tocsr()


def normalized_adj_apply(g: CsrGraph, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != g.num_nodes:
        raise ValueError(f"Y has {Y.shape[0]} rows, graph has {g.num_nodes} nodes")
    s = 1.0 / np.sqrt(safe_degrees(degrees(g)))
    squeeze = Y.ndim == 1
    Y2 = Y[:, None] if squeeze else Y
    out = s[:, None] * (g.adjacency() @ (s[:, None] * Y2))
    return out[:, 0] if squeeze else out


def laplacian_quadratic(g: CsrGraph, Y: np.ndarray, degree_norm) -> float:
    """Sum over edges of ||y_i/sqrt(d_i) - y_j/sqrt(d_j)||^2 (multiplicity-weighted)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != g.num_nodes:
        raise ValueError(f"Y has {Y.shape[0]} rows, graph has {g.num_nodes} nodes")
    Y2 = Y.reshape(g.num_nodes, -1)
    Z = Y2 / np.sqrt(safe_degrees(degree_norm))[:, None]
    rows = np.repeat(np.arange(g.num_nodes), np.diff(g.row_offsets))
    keep = rows < g.col_indices
    diff = Z[rows[keep]] - Z[g.col_indices[keep]]
    w = 1.0 if g.weights is None else g.weights[keep][:, None]
    return float(np.sum(w * diff * diff))


def split_edges(g: CsrGraph, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> EdgeSplit:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0:
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios sum to {sum(ratios)!r}, expected 1")
    edges = g.edges()
    m = len(edges)
    perm = np.random.default_rng(seed).permutation(m)
    n_train = math.floor(ratios[0] * m)
    n_valid = math.floor(ratios[1] * m)
    shuffled = edges[perm]
    return EdgeSplit(
        train_edges=shuffled[:n_train],
        valid_edges=shuffled[n_train:n_train + n_valid],
        test_edges=shuffled[n_train + n_valid:],
        split_seed=seed,
        ratios=ratios,
        num_nodes=g.num_nodes,
    )


def sample_non_edges(g: CsrGraph, count: int, rng: np.random.Generator,
                     exclude_keys: np.ndarray | None = None) -> np.ndarray:
    """Uniform distinct non-edges (canonical i < j), avoiding ``g`` and ``exclude_keys``."""
    n = g.num_nodes
    total = n * (n - 1) // 2
    taken = g.edge_keys() if exclude_keys is None else np.union1d(g.edge_keys(), exclude_keys)
    if total - len(taken) < count:
        raise ValueError(f"graph has fewer than {count} non-edges")
    chosen = np.empty(0, dtype=np.int64)
    while len(chosen) < count:
        need = count - len(chosen)
        i = rng.integers(0, n, size=2 * need + 16)
        j = rng.integers(0, n, size=2 * need + 16)
        ok = i != j
        keys = pair_keys(i[ok], j[ok], n)
        keys = keys[~keys_member(keys, taken)]
        keys = keys[~np.isin(keys, chosen)]
        _, first = np.unique(keys, return_index=True)
        chosen = np.concatenate([chosen, keys[np.sort(first)][:need]])
    return np.stack([chosen // n, chosen % n], axis=1)


def with_eval_pools(split: EdgeSplit, pool_size: int = 5000, seed: int = 0) -> EdgeSplit:
    """Attach fixed negative pools for validation and test, drawn from non-edges of the full graph."""
    full = split.full_graph()
    rng = np.random.default_rng(seed)
    n = split.num_nodes
    size = min(pool_size, (n * (n - 1) // 2 - full.num_edges) // 2)
    valid = sample_non_edges(full, size, rng)
    used = pair_keys(valid[:, 0], valid[:, 1], n)
    test = sample_non_edges(full, size, rng, exclude_keys=np.sort(used))
    return EdgeSplit(split.train_edges, split.valid_edges, split.test_edges, split.split_seed,
                     split.ratios, split.num_nodes, {"valid": valid, "test": test}, seed)


_SECTIONS = ("train", "valid", "test", "valid_neg", "test_neg")


def save_split(path, split: EdgeSplit) -> None:
    lines = [f"seed={split.split_seed}",
             "ratios=" + ",".join(repr(r) for r in split.ratios),
             f"num_nodes={split.num_nodes}"]
    if split.pool_seed is not None:
        lines.append(f"pool_seed={split.pool_seed}")
    blocks = {"train": split.train_edges, "valid": split.valid_edges, "test": split.test_edges,
              "valid_neg": split.neg_pools.get("valid"), "test_neg": split.neg_pools.get("test")}
    for name in _SECTIONS:
        if blocks[name] is None:
            continue
        lines.append(f"[{name}]")
        lines.extend(f"{i} {j}" for i, j in blocks[name])
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_split(path) -> EdgeSplit:
    meta: dict[str, str] = {}
    blocks: dict[str, list] = {}
    current = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in _SECTIONS:
                raise GraphFormatError(f"{path}:{lineno}: unknown section {current!r}")
            blocks[current] = []
        elif current is None:
            key, sep, value = line.partition("=")
            if not sep:
                raise GraphFormatError(f"{path}:{lineno}: expected key=value")
            meta[key] = value
        else:
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected edge 'i j'")
            blocks[current].append((int(parts[0]), int(parts[1])))
    try:
        seed = int(meta["seed"])
        ratios = tuple(float(r) for r in meta["ratios"].split(","))
        num_nodes = int(meta["num_nodes"])
    except KeyError as exc:
        raise GraphFormatError(f"{path}: missing header field {exc}") from None

    def arr(name):
        return np.array(blocks.get(name, []), dtype=np.int64).reshape(-1, 2)

    pools = {k: arr(f"{k}_neg") for k in ("valid", "test") if f"{k}_neg" in blocks}
    pool_seed = int(meta["pool_seed"]) if "pool_seed" in meta else None
    return EdgeSplit(arr("train"), arr("valid"), arr("test"), seed, ratios, num_nodes, pools, pool_seed)
