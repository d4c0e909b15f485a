"""Comparator encoders: GCN layers with subtracted negative propagation, and random input features."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .graph import CsrGraph, FeatureMatrix
from .negsample import NegativeGraphSet
from .propagation import negative_operators, positive_operators


def gcn_neg_forward(g: CsrGraph, negset: NegativeGraphSet | None, X, layer_params, lambda_k: float = 0.0,
                    K: int | None = None, tape: ad.Tape | None = None, prefix: str = "gcn"):
    """Y <- ReLU[(A~ - (lambda_k/K) A~^-) Y W_t] for each weight matrix W_t.

    ``A~^-`` is the sum of the K normalized negative adjacencies; with
    ``lambda_k == 0`` (or no negative set) this is a plain GCN stack.
    """
    adj, _, _ = positive_operators(g)
    neg_adj = None
    if negset is not None and lambda_k != 0:
        K = negset.K if K is None else K
        neg_adj = sum(negative_operators(negset)["adj"]).tocsr()
    Y = X
    for t, W in enumerate(layer_params):
        if tape is not None:
            W = tape.param(f"{prefix}.{t}.W", W)
        if np.shape(ad.value(Y))[1] != np.shape(ad.value(W))[0]:
            raise ValueError(f"layer {t}: input width {np.shape(ad.value(Y))[1]} != weight rows {np.shape(ad.value(W))[0]}")
        YW = ad.matmul(Y, W)
        Z = ad.spmm(adj, YW)
        if neg_adj is not None:
            Z = ad.sub(Z, ad.mul(lambda_k / K, ad.spmm(neg_adj, YW)))
        Y = ad.relu(Z)
    return Y


def random_feature_variant(X, noise_scale: float, seed: int) -> FeatureMatrix:
    """X + X_R with X_R iid uniform on [-noise_scale, noise_scale]."""
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    data = X.data if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if noise_scale == 0:
        return FeatureMatrix(data.copy())
    rng = np.random.default_rng(seed)
    return FeatureMatrix(data + rng.uniform(-noise_scale, noise_scale, size=data.shape))
