"""Lower-level energy, its unrolled gradient-descent layers, and convergence helpers.

Embeddings are produced by descending an energy that pulls each row toward
the base-model output, smooths it over the positive graph and pushes it
apart along sampled negative edges, with a softplus floor on the negative
term.  Each descent step is one network layer.

All functions accept plain arrays or autodiff tensors for ``Y``, ``fX`` and
the per-graph negative weights, so the same code runs under the tape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .graph import CsrGraph, degrees, safe_degrees
from .negsample import NegativeGraphSet


class NonConvexError(ValueError):
    pass


@dataclass
class PropagationConfig:
    lam: float = 1.0
    lambda_k: tuple = (1.0,)
    learnable_lambda_k: bool = False
    gamma: float = 0.0
    alpha: float = 0.5
    T: int = 8
    K: int = 1
    lower_bound: bool = True

    def __post_init__(self):
        self.lambda_k = tuple(float(x) for x in np.atleast_1d(self.lambda_k))
        if len(self.lambda_k) == 1 and self.K > 1:
            self.lambda_k = self.lambda_k * self.K
        if len(self.lambda_k) != self.K:
            raise ValueError(f"lambda_k has {len(self.lambda_k)} entries, K = {self.K}")
        if self.T < 1 or self.K < 1:
            raise ValueError("T and K must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


@dataclass
class EmbeddingState:
    Y: object
    t: int = 0
    Q_trace: list = field(default_factory=list)


@dataclass(frozen=True)
class Operators:
    """Sparse operators for one (training graph, negative set) pair."""

    adj: sp.csr_matrix          # D^-1/2 A D^-1/2
    pos_mask: np.ndarray        # 1 where deg > 0
    pos_lap: sp.csr_matrix      # diag(pos_mask) - adj
    fit_inv: np.ndarray         # 1 / (D + D_K^-)
    neg_adj: list               # D_K^-1/2 A_k^- D_K^-1/2
    neg_ratio: np.ndarray       # (n, K): deg_k / D_K
    neg_lap: list               # diag(neg_ratio[:, k]) - neg_adj[k]
    num_pos_edges: int

    @property
    def n(self) -> int:
        return len(self.fit_inv)


def positive_operators(g: CsrGraph):
    if "prop_ops" not in g._cache:
        deg = degrees(g).astype(np.float64)
        s = 1.0 / np.sqrt(safe_degrees(deg))
        adj = (sp.diags(s) @ g.adjacency() @ sp.diags(s)).tocsr()
        mask = (deg > 0).astype(np.float64)
        g._cache["prop_ops"] = (adj, mask, (sp.diags(mask) - adj).tocsr())
    return g._cache["prop_ops"]


def negative_operators(negset: NegativeGraphSet):
    cache = negset.__dict__.setdefault("_ops", {})
    if not cache:
        dk = negset.combined_degrees
        s = 1.0 / np.sqrt(safe_degrees(dk))
        adjs, laps, ratios = [], [], []
        for g in negset.graphs:
            a = (sp.diags(s) @ g.adjacency() @ sp.diags(s)).tocsr()
            r = degrees(g) / safe_degrees(dk)
            adjs.append(a)
            ratios.append(r)
            laps.append((sp.diags(r) - a).tocsr())
        cache.update(adj=adjs, lap=laps, ratio=np.stack(ratios, axis=1))
    return cache


def build_operators(g_train: CsrGraph, negset: NegativeGraphSet) -> Operators:
    if negset.graphs and negset.graphs[0].num_nodes != g_train.num_nodes:
        raise ValueError("negative graphs and training graph have different node counts")
    adj, mask, lap = positive_operators(g_train)
    neg = negative_operators(negset)
    fit_inv = 1.0 / safe_degrees(degrees(g_train) + negset.combined_degrees)
    return Operators(adj, mask, lap, fit_inv, neg["adj"], neg["ratio"], neg["lap"], g_train.num_edges)


def _lambda_vec(cfg: PropagationConfig, lambda_k):
    return np.asarray(cfg.lambda_k, dtype=np.float64) if lambda_k is None else lambda_k


def _check_shapes(Y, ops: Operators):
    shape = np.shape(ad.value(Y))
    if len(shape) != 2 or shape[0] != ops.n:
        raise ValueError(f"embedding shape {shape} does not match {ops.n} nodes")


def negative_traces(Y, ops: Operators) -> list:
    """tr[Y^T L_k^- Y] per negative graph (normalized by the combined degrees)."""
    return [ad.trace_quadratic(L, Y) for L in ops.neg_lap]


def _weights(lam_vec, K):
    """lambda_k / mean(lambda); equal weights when all lambda_k are zero."""
    lv = ad.value(lam_vec)
    mean = float(np.mean(lv))
    if mean <= 0:
        return np.ones(K), mean
    return ad.div(lam_vec, ad.mul(ad.total(lam_vec), 1.0 / K)), mean


def compute_Q_ops(Y, ops: Operators, cfg: PropagationConfig, lambda_k=None):
    lam_vec = _lambda_vec(cfg, lambda_k)
    w, _ = _weights(lam_vec, cfg.K)
    tr = negative_traces(Y, ops)
    acc = 0.0
    for k in range(cfg.K):
        acc = ad.add(acc, ad.mul(ad.index(w, k), tr[k]))
    return ad.sub(cfg.gamma * ops.num_pos_edges, acc)


def compute_Q(Y, negset: NegativeGraphSet, cfg: PropagationConfig, num_pos_edges: int, lambda_k=None):
    """gamma|E| minus the weighted negative-graph quadratic form."""
    neg = negative_operators(negset)
    if np.shape(ad.value(Y))[0] != len(negset.combined_degrees):
        raise ValueError("embedding rows do not match the negative graphs")
    lam_vec = _lambda_vec(cfg, lambda_k)
    w, _ = _weights(lam_vec, cfg.K)
    acc = 0.0
    for k, L in enumerate(neg["lap"]):
        acc = ad.add(acc, ad.mul(ad.index(w, k), ad.trace_quadratic(L, Y)))
    return ad.sub(cfg.gamma * num_pos_edges, acc)


def energy_ops(Y, fX, ops: Operators, cfg: PropagationConfig, lambda_k=None, literal_fit: bool = False):
    _check_shapes(Y, ops)
    if np.shape(ad.value(fX)) != np.shape(ad.value(Y)):
        raise ValueError("fX and Y shapes differ")
    lam_vec = _lambda_vec(cfg, lambda_k)
    diff = ad.sub(Y, fX)
    scale = ops.fit_inv ** (2 if literal_fit else 1)
    e = ad.total(ad.mul(scale[:, None], ad.mul(diff, diff)))
    e = ad.add(e, cfg.lam * ad.trace_quadratic(ops.pos_lap, Y))
    if cfg.lower_bound:
        Q = compute_Q_ops(Y, ops, cfg, lam_vec)
        lbar = ad.mul(ad.total(lam_vec), 1.0 / cfg.K)
        e = ad.add(e, ad.mul(ad.mul(lbar, 1.0 / cfg.K), ad.softplus(Q)))
    else:
        tr = negative_traces(Y, ops)
        for k in range(cfg.K):
            e = ad.sub(e, ad.mul(ad.index(lam_vec, k), tr[k] * (1.0 / cfg.K)))
    return e


def energy(Y, fX, g_train: CsrGraph, negset: NegativeGraphSet, cfg: PropagationConfig,
           lambda_k=None, literal_fit: bool = False):
    """Monitored energy.

    By default the fit term is ``sum_i (Y_i - fX_i)^2 / (d_i + d_i^-)``, the
    form whose exact gradient is the update used by :func:`propagate_step`.
    ``literal_fit=True`` squares the degree scaling instead.
    """
    return energy_ops(Y, fX, build_operators(g_train, negset), cfg, lambda_k, literal_fit)


def energy_gradient_ops(Y, fX, ops: Operators, cfg: PropagationConfig, lambda_k=None) -> np.ndarray:
    """Exact gradient of the monitored energy (numpy only)."""
    Y = np.asarray(ad.value(Y))
    lam_vec = np.asarray(ad.value(_lambda_vec(cfg, lambda_k)))
    s = float(ad.sigmoid_value(compute_Q_ops(Y, ops, cfg, lam_vec))) if cfg.lower_bound else 1.0
    g = 2.0 * ops.fit_inv[:, None] * (Y - np.asarray(ad.value(fX))) + 2.0 * cfg.lam * (ops.pos_lap @ Y)
    for k, L in enumerate(ops.neg_lap):
        g -= 2.0 * s * lam_vec[k] / cfg.K * (L @ Y)
    return g


def step_ops(Y, fX, ops: Operators, cfg: PropagationConfig, lambda_k=None):
    """One layer: C1 Y + C2 fX + c3 A~ Y - sum_k c4_k A~_k^- Y.

    The diagonal C1 uses the per-node factors of the normalized Laplacians,
    which equal the identity for nodes with nonzero degree.
    Returns (Y_next, Q).
    """
    _check_shapes(Y, ops)
    lam_vec = _lambda_vec(cfg, lambda_k)
    a = cfg.alpha
    Q = compute_Q_ops(Y, ops, cfg, lam_vec)
    gate = ad.sigmoid(Q) if cfg.lower_bound else 1.0
    c4 = ad.mul(lam_vec, ad.mul(gate, a / cfg.K))                     # (K,)
    c1 = 1.0 - a * cfg.lam * ops.pos_mask - a * ops.fit_inv           # constant part of C1
    c1 = ad.add(c1, ad.matmul(ops.neg_ratio, c4))
    out = ad.mul(ad.reshape(c1, (ops.n, 1)), Y)
    out = ad.add(out, ad.mul((a * ops.fit_inv)[:, None], fX))
    out = ad.add(out, ad.mul(a * cfg.lam, ad.spmm(ops.adj, Y)))
    for k, A in enumerate(ops.neg_adj):
        out = ad.sub(out, ad.mul(ad.index(c4, k), ad.spmm(A, Y)))
    return out, Q


def propagate_step(state: EmbeddingState, fX, g_train: CsrGraph, negset: NegativeGraphSet,
                   cfg: PropagationConfig, lambda_k=None, ops: Operators | None = None) -> EmbeddingState:
    Yv = ad.value(state.Y)
    if not np.all(np.isfinite(Yv)):
        raise FloatingPointError(f"non-finite embeddings entering layer {state.t}")
    ops = ops or build_operators(g_train, negset)
    Y1, Q = step_ops(state.Y, fX, ops, cfg, lambda_k)
    return EmbeddingState(Y1, state.t + 1, state.Q_trace + [float(ad.value(Q))])


def forward(fX, g_train: CsrGraph, negset: NegativeGraphSet, cfg: PropagationConfig,
            lambda_k=None, diagnostics: list | None = None) -> EmbeddingState:
    """T unrolled layers starting from Y0 = fX.

    If ``diagnostics`` is a list, one ``(t, energy, Q, sigma(Q))`` tuple is
    appended per layer (values after the step).
    """
    ops = build_operators(g_train, negset)
    state = EmbeddingState(fX, 0, [])
    for _ in range(cfg.T):
        state = propagate_step(state, fX, g_train, negset, cfg, lambda_k, ops)
        if diagnostics is not None:
            Yv, fv = ad.value(state.Y), ad.value(fX)
            lv = ad.value(_lambda_vec(cfg, lambda_k))
            q = float(compute_Q_ops(Yv, ops, cfg, lv))
            diagnostics.append((state.t, float(energy_ops(Yv, fv, ops, cfg, lv)), q,
                                float(ad.sigmoid_value(q))))
    return state


# ---- quadratic (unbounded, unnormalized-or-normalized) variant and its oracles ----

def _laplacian(g: CsrGraph, normalized: bool, degree_norm=None) -> sp.csr_matrix:
    A = g.adjacency()
    deg = np.asarray(A.sum(axis=1)).ravel()
    L = sp.diags(deg) - A
    if normalized:
        s = 1.0 / np.sqrt(safe_degrees(deg if degree_norm is None else degree_norm))
        L = sp.diags(s) @ L @ sp.diags(s)
    return L.tocsr()


def quadratic_operator(g_train: CsrGraph, negset: NegativeGraphSet, cfg: PropagationConfig,
                       normalized: bool) -> sp.csr_matrix:
    """I + lam L - (1/K) sum_k lambda_k L_k^- (normalized with D and D_K^- when asked)."""
    n = g_train.num_nodes
    H = sp.identity(n, format="csr") + cfg.lam * _laplacian(g_train, normalized)
    dk = negset.combined_degrees
    for lk, g in zip(cfg.lambda_k, negset.graphs):
        H = H - (lk / cfg.K) * _laplacian(g, normalized, dk)
    return H.tocsr()


def _extreme_eig(M: sp.csr_matrix, which: str) -> float:
    n = M.shape[0]
    if n <= 2000:
        w = np.linalg.eigvalsh(M.toarray())
        return float(w[0] if which == "SA" else w[-1])
    from scipy.sparse.linalg import eigsh
    return float(eigsh(M, k=1, which=which, return_eigenvectors=False)[0])


def convexity_margin(g_train, negset, cfg, normalized: bool = True) -> float:
    """1 + lam * delta_min(L) - delta_max((1/K) sum_k lambda_k L_k^-)."""
    dk = negset.combined_degrees
    Lneg = sum((lk / cfg.K) * _laplacian(g, normalized, dk) for lk, g in zip(cfg.lambda_k, negset.graphs))
    dmin = _extreme_eig(_laplacian(g_train, normalized), "SA")
    return 1.0 + cfg.lam * dmin - _extreme_eig(sp.csr_matrix(Lneg), "LA")


def step_size_bound(g_train: CsrGraph, negset: NegativeGraphSet, cfg: PropagationConfig,
                    normalized: bool = True) -> tuple[float, bool]:
    """(alpha_max, convex): inverse Frobenius norm of the quadratic operator and the Hessian test."""
    H = quadratic_operator(g_train, negset, cfg, normalized)
    fro = float(sp.linalg.norm(H, "fro"))
    return 1.0 / fro, convexity_margin(g_train, negset, cfg, normalized) > 0


def quadratic_step(Y, fX, g_train, negset, cfg: PropagationConfig, normalized: bool = False,
                   H: sp.csr_matrix | None = None):
    """Y - alpha (H Y - fX): one descent step on the quadratic energy."""
    H = quadratic_operator(g_train, negset, cfg, normalized) if H is None else H
    return Y - cfg.alpha * (H @ Y - fX)


def closed_form_minimizer(fX, g_train, negset, cfg: PropagationConfig, normalized: bool = False) -> np.ndarray:
    if g_train.num_nodes > 2000:
        raise ValueError("dense solve limited to n <= 2000")
    margin = convexity_margin(g_train, negset, cfg, normalized)
    if margin <= 0:
        raise NonConvexError(f"quadratic energy is not strictly convex (Hessian margin {margin:.3g})")
    H = quadratic_operator(g_train, negset, cfg, normalized).toarray()
    return np.linalg.solve(H, np.asarray(fX, dtype=np.float64))
