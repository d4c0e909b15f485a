"""Ranking metrics and neighbourhood heuristics for link prediction."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .graph import CsrGraph, degrees


def hits_at_k(pos_scores, neg_scores, k: int) -> float:
    """Fraction of positives scoring at or above the k-th best negative."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("hits_at_k needs nonempty positive and negative scores")
    if k > len(neg):
        raise ValueError(f"k={k} exceeds the {len(neg)} negative scores")
    kth = np.partition(neg, len(neg) - k)[len(neg) - k]
    return float(np.mean(pos >= kth))


def reciprocal_ranks(per_source) -> np.ndarray:
    """1 / (1 + #negatives scoring strictly above the positive), per source.

    Ties rank the positive first, matching the "equal or above" rule of
    :func:`hits_at_k`.
    """
    out = []
    for pos, negs in per_source:
        negs = np.asarray(negs, dtype=np.float64)
        if negs.size == 0:
            raise ValueError("each source needs at least one negative score")
        out.append(1.0 / (1.0 + np.count_nonzero(negs > pos)))
    return np.array(out)


def mrr(per_source) -> float:
    per_source = list(per_source)
    if not per_source:
        raise ValueError("mrr of an empty list")
    # exact rational mean, rounded once, so the value is independent of summation order
    ranks, counts = np.unique(np.rint(1.0 / reciprocal_ranks(per_source)).astype(np.int64), return_counts=True)
    total = sum(Fraction(int(c), int(r)) for r, c in zip(ranks, counts))
    return float(total / len(per_source))


HEURISTICS = ("CN", "AA", "RA")


def heuristic_score(g: CsrGraph, pairs, kind: str = "CN") -> np.ndarray:
    """Common Neighbours, Adamic-Adar or Resource Allocation for each pair."""
    kind = kind.upper()
    if kind not in HEURISTICS:
        raise ValueError(f"unknown heuristic {kind!r}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    A = g.adjacency().copy()
    A.data[:] = 1.0
    deg = degrees(g).astype(np.float64)
    if kind == "CN":
        w = np.ones_like(deg)
    elif kind == "RA":
        w = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    else:
        # for i != j a common neighbour has degree >= 2, so log(deg) > 0 wherever it matters
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError("Adamic-Adar is undefined for self pairs")
        w = np.divide(1.0, np.log(np.maximum(deg, 2.0)), out=np.zeros_like(deg), where=deg > 1)
    left = A[pairs[:, 0]].multiply(w[None, :])
    return np.asarray(left.multiply(A[pairs[:, 1]]).sum(axis=1)).ravel()
