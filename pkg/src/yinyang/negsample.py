"""Negative graphs for the forward pass and negative pairs for the link loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CsrGraph, EdgeSplit, from_edges, keys_member, pair_keys, save_edge_list

MODES = ("global_uniform", "source_uniform")


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NegativeGraphSet:
    graphs: list
    edges: list  # per graph, (|E|, 2) sampled pairs in draw order
    combined_degrees: np.ndarray
    epoch_seed: int

    @property
    def K(self) -> int:
        return len(self.graphs)

    def dump(self, prefix) -> None:
        for k, e in enumerate(self.edges):
            save_edge_list(f"{prefix}.{k}.txt", e)


@dataclass(frozen=True)
class SupervisionNegatives:
    pairs: np.ndarray  # (|E_train|, N, 2)
    seed: int

    @property
    def N(self) -> int:
        return self.pairs.shape[1]


def _draw(n: int, sources: np.ndarray | None, forbidden: np.ndarray, rng, max_attempts: int,
          count: int) -> np.ndarray:
    """Rejection-sample ``count`` pairs that avoid self-loops and ``forbidden`` keys.

    ``sources`` fixes the first endpoint per slot (entries of -1 draw both
    endpoints uniformly).
    """
    out = np.empty((count, 2), dtype=np.int64)
    pending = np.arange(count)
    attempts = 0
    while len(pending):
        if attempts >= max_attempts:
            raise SamplingError(f"no non-edge found for {len(pending)} slot(s) after {max_attempts} attempts")
        attempts += 1
        j = rng.integers(0, n, size=len(pending))
        if sources is None:
            i = rng.integers(0, n, size=len(pending))
        else:
            i = sources[pending].copy()
            free = i < 0
            i[free] = rng.integers(0, n, size=int(free.sum()))
        ok = (i != j) & ~keys_member(pair_keys(i, j, n), forbidden)
        out[pending[ok], 0] = i[ok]
        out[pending[ok], 1] = j[ok]
        pending = pending[~ok]
    return out


def _check_not_complete(g: CsrGraph, forbidden: np.ndarray) -> None:
    n = g.num_nodes
    if n < 2 or len(forbidden) >= n * (n - 1) // 2:
        raise SamplingError("graph is complete; there are no non-edges to sample")


def _negative_edges(g_train: CsrGraph, mode: str, rng) -> np.ndarray:
    if mode not in MODES:
        raise ValueError(f"unknown sampling mode {mode!r}; expected one of {MODES}")
    n = g_train.num_nodes
    forbidden = g_train.edge_keys()
    _check_not_complete(g_train, forbidden)
    pos = g_train.edges()
    sources = None
    if mode == "source_uniform":
        deg = g_train.degrees()
        sources = pos[:, 0].copy()
        # a saturated source has no non-neighbour: use the other endpoint, else draw freely
        sat = deg[sources] >= n - 1
        sources[sat] = pos[sat, 1]
        sources[deg[sources] >= n - 1] = -1
    return _draw(n, sources, forbidden, rng, 100 * n, len(pos))


def sample_negative_graph(g_train: CsrGraph, mode: str = "source_uniform", seed: int = 0) -> CsrGraph:
    edges = _negative_edges(g_train, mode, np.random.default_rng(seed))
    return from_edges(edges, g_train.num_nodes, multi=True)


def sample_negative_set(g_train: CsrGraph, K: int = 1, mode: str = "source_uniform",
                        epoch_seed: int = 0) -> NegativeGraphSet:
    if K < 1:
        raise ValueError("K must be >= 1")
    graphs, edge_lists = [], []
    for k in range(K):
        rng = np.random.default_rng(np.random.SeedSequence([epoch_seed, k]))
        e = _negative_edges(g_train, mode, rng)
        edge_lists.append(e)
        graphs.append(from_edges(e, g_train.num_nodes, multi=True))
    combined = np.sum([g.degrees() for g in graphs], axis=0).astype(np.float64)
    return NegativeGraphSet(graphs, edge_lists, combined, epoch_seed)


def negative_set_from_edges(num_nodes: int, edge_lists, epoch_seed: int = -1) -> NegativeGraphSet:
    """Wrap hand-picked negative edge lists (one per negative graph)."""
    edge_lists = [np.asarray(e, dtype=np.int64).reshape(-1, 2) for e in edge_lists]
    graphs = [from_edges(e, num_nodes, multi=True) for e in edge_lists]
    combined = np.sum([g.degrees() for g in graphs], axis=0).astype(np.float64)
    return NegativeGraphSet(graphs, edge_lists, combined, epoch_seed)


def sample_supervision_negatives(split: EdgeSplit, N: int = 1, seed: int = 0,
                                 mode: str = "global_uniform") -> SupervisionNegatives:
    if N < 1:
        raise ValueError("N must be >= 1")
    full = split.full_graph()
    n = split.num_nodes
    forbidden = full.edge_keys()
    _check_not_complete(full, forbidden)
    rng = np.random.default_rng(seed)
    m = len(split.train_edges)
    sources = None
    if mode == "source_uniform":
        sources = np.repeat(split.train_edges[:, 0], N)
        sources[full.degrees()[sources] >= n - 1] = -1
    elif mode != "global_uniform":
        raise ValueError(f"unknown sampling mode {mode!r}")
    pairs = _draw(n, sources, forbidden, rng, 100 * n, m * N)
    return SupervisionNegatives(pairs.reshape(m, N, 2), seed)
