"""Synthetic graphs and features for tests, presets and scaling runs."""
from __future__ import annotations

import numpy as np

from .graph import CsrGraph, FeatureMatrix, from_edges


def random_graph(n: int, p: float, seed: int = 0) -> CsrGraph:
    """Erdos-Renyi G(n, p)."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return from_edges(np.stack([iu[keep], ju[keep]], axis=1), n)


def random_graph_m(n: int, m: int, seed: int = 0) -> CsrGraph:
    """About ``m`` uniformly drawn distinct edges on ``n`` nodes (sparse regime)."""
    rng = np.random.default_rng(seed)
    draw = int(m * 1.1) + 10
    i = rng.integers(0, n, draw)
    j = rng.integers(0, n, draw)
    e = np.stack([i, j], axis=1)[i != j]
    key = np.minimum(e[:, 0], e[:, 1]) * n + np.maximum(e[:, 0], e[:, 1])
    _, first = np.unique(key, return_index=True)
    return from_edges(e[np.sort(first)][:m], n)


def sbm(sizes, p_in: float, p_out: float, seed: int = 0) -> tuple[CsrGraph, np.ndarray]:
    """Stochastic block model; returns the graph and block labels."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, 1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < p
    return from_edges(np.stack([iu[keep], ju[keep]], axis=1), n), labels


def block_features(labels, dim: int, noise: float = 1.0, seed: int = 0) -> FeatureMatrix:
    """Per-block Gaussian centroid plus isotropic noise."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(labels.max() + 1, dim))
    return FeatureMatrix(centers[labels] + noise * rng.normal(size=(len(labels), dim)))


def hexagon() -> CsrGraph:
    """Six-cycle v1..v6 (ids 0..5)."""
    return from_edges([(i, (i + 1) % 6) for i in range(6)], 6)
