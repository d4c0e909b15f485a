"""Property batteries: gradient fidelity, energy descent, convex-case oracle,
symmetry breaking, metric oracles and encode-time scaling.

Each battery generates its own instances from a seed and returns a
:class:`CheckReport` listing observed values against tolerances.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from .graph import from_edges
from .metrics import heuristic_score, hits_at_k, mrr
from .model import LinkModel, TrainConfig, decode_pairs, encode_model, init_model, link_loss, predict_topk
from .negsample import negative_set_from_edges, sample_negative_set
from .nn import init_mlp, mlp_forward
from .propagation import (PropagationConfig, build_operators, closed_form_minimizer, convexity_margin,
                          energy_gradient_ops, energy_ops, forward, quadratic_operator, step_ops,
                          step_size_bound)
from .synthetic import hexagon, random_graph, random_graph_m

SUITES = ("gradients", "descent", "convexity", "isomorphism", "metrics-oracle", "scaling")


@dataclass
class CheckReport:
    suite: str
    rows: list = field(default_factory=list)  # (label, observed, tolerance, passed)
    seconds: float = 0.0

    def add(self, label: str, observed: float, tolerance: str, passed: bool) -> None:
        self.rows.append((label, observed, tolerance, bool(passed)))

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r[3] for r in self.rows)

    def lines(self) -> list:
        out = [f"{'PASS' if ok else 'FAIL'}\t{self.suite}\t{label}\tobserved={obs:.3e}\ttol={tol}"
               for label, obs, tol, ok in self.rows]
        out.append(f"{'PASS' if self.passed else 'FAIL'}\t{self.suite}\tsummary\t{len(self.rows)} checks in {self.seconds:.2f}s")
        return out


def _connected_random_graph(rng, n_lo=6, n_hi=12, p_lo=0.25, p_hi=0.5):
    while True:
        n = int(rng.integers(n_lo, n_hi + 1))
        g = random_graph(n, float(rng.uniform(p_lo, p_hi)), seed=int(rng.integers(1 << 30)))
        if 0 < g.num_edges < n * (n - 1) // 2:
            return g


# ---- gradients ----

def _gradient_instance(rng):
    g = _connected_random_graph(rng)
    n = g.num_nodes
    K = int(rng.integers(1, 3))
    d = int(rng.integers(1, 5))
    dx = int(rng.integers(2, 5))
    learnable = bool(rng.integers(0, 2))
    cfg = PropagationConfig(lam=float(rng.uniform(0.5, 2.0)), lambda_k=rng.uniform(0.3, 2.0, K).tolist(),
                            learnable_lambda_k=learnable, gamma=float(rng.uniform(0.0, 0.5)),
                            alpha=float(rng.uniform(0.1, 0.6)), T=int(rng.integers(1, 5)), K=K)
    tc = TrainConfig(hidden=int(rng.integers(2, 5)), dim=d, seed=int(rng.integers(1 << 30)))
    model = init_model(dx, cfg, tc)
    # nonzero biases so no ReLU sits at an exact kink by construction
    model.base.layers = [(W, rng.normal(scale=0.3, size=b.shape)) for W, b in model.base.layers]
    model.decoder.layers = [(W, rng.normal(scale=0.3, size=b.shape)) for W, b in model.decoder.layers]
    negset = sample_negative_set(g, K, "source_uniform", int(rng.integers(1 << 30)))
    X = rng.normal(size=(n, dx))
    pos = g.edges()
    N = int(rng.integers(1, 3))
    neg = rng.integers(0, n, size=(len(pos) * N, 2))
    return g, negset, X, model, pos, neg, N


def _pipeline_loss(model: LinkModel, params, g, negset, X, pos, neg, N, tape=None):
    model.load_named(params)
    Y, _ = encode_model(model, g, X, negset, tape)
    p = decode_pairs(Y, pos, model.decoder, tape)
    q = decode_pairs(Y, neg, model.decoder, tape)
    return link_loss(p, ad.reshape(q, (len(pos), N)), tape)


def gradient_check(n_instances: int = 20, seed: int = 0, h: float = 1e-5, tol: float = 1e-5,
                   kink_margin: float = 1e-3) -> CheckReport:
    """Tape gradients of base MLP -> unrolled layers -> HadamardMLP -> link loss vs central differences.

    Relative error per parameter tensor is ||g_tape - g_fd|| / max(||g_tape||, ||g_fd||).
    Instances with a ReLU pre-activation within ``kink_margin`` of zero are
    redrawn, since a central difference across a kink is not a derivative.
    """
    rep = CheckReport("gradients")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    done = 0
    while done < n_instances:
        g, negset, X, model, pos, neg, N = _gradient_instance(rng)
        params = {k: v.copy() for k, v in model.named_params().items()}
        tape = ad.Tape()
        loss = _pipeline_loss(model, params, g, negset, X, pos, neg, N, tape)
        pre = [v[0] for v in tape.inputs_of("relu")]
        if pre and min(np.min(np.abs(p)) for p in pre) < kink_margin:
            continue
        grads = tape.backward(loss)
        names = model.trainable_names()
        worst, count = 0.0, 0
        for name in names:
            base = params[name]
            fd = np.zeros_like(base)
            for i in np.ndindex(base.shape):
                pp = {k: v.copy() for k, v in params.items()}
                pp[name][i] += h
                lp = float(_pipeline_loss(model, pp, g, negset, X, pos, neg, N))
                pp[name][i] -= 2 * h
                lm = float(_pipeline_loss(model, pp, g, negset, X, pos, neg, N))
                fd[i] = (lp - lm) / (2 * h)
            count += base.size
            denom = max(np.linalg.norm(fd), np.linalg.norm(grads[name]), 1e-300)
            worst = max(worst, float(np.linalg.norm(fd - grads[name]) / denom))
        cfg = model.prop
        rep.add(f"instance {done}: n={g.num_nodes} d={model.decoder.in_dim} T={cfg.T} K={cfg.K} "
                f"params={count} learnable_lambda={cfg.learnable_lambda_k}", worst, f"< {tol:g}", worst < tol)
        done += 1
    rep.seconds = time.perf_counter() - t0
    return rep


# ---- descent (bounded, normalized energy) ----

def _descent_instance(rng):
    g = _connected_random_graph(rng)
    K = int(rng.integers(1, 3))
    negset = sample_negative_set(g, K, "source_uniform", int(rng.integers(1 << 30)))
    cfg = PropagationConfig(lam=float(rng.uniform(0.5, 3.0)), lambda_k=rng.uniform(0.5, 3.0, K).tolist(),
                            gamma=float(rng.uniform(0.0, 0.5)), alpha=1.0, T=50, K=K)
    fX = rng.normal(size=(g.num_nodes, int(rng.integers(1, 5))))
    return g, negset, cfg, fX


def descent_check(n_instances: int = 20, seed: int = 0, layers: int = 50, max_steps: int = 5000,
                  energy_tol: float = 1e-12, grad_tol: float = 1e-6) -> CheckReport:
    """Monotone energy over ``layers`` steps with alpha halved until accepted, then ||grad|| -> 0."""
    rep = CheckReport("descent")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for inst in range(n_instances):
        g, negset, cfg, fX = _descent_instance(rng)
        ops = build_operators(g, negset)
        alpha = 1.0
        while True:
            cfg.alpha = alpha
            Y, e_prev, worst_rise = fX, float(energy_ops(fX, fX, ops, cfg)), -np.inf
            for _ in range(layers):
                Y, _ = step_ops(Y, fX, ops, cfg)
                e = float(energy_ops(Y, fX, ops, cfg))
                worst_rise = max(worst_rise, e - e_prev)
                e_prev = e
            if worst_rise <= energy_tol or alpha < 1e-6:
                break
            alpha /= 2
        rep.add(f"instance {inst}: n={g.num_nodes} K={cfg.K} alpha={alpha:g} max energy rise over {layers} layers",
                worst_rise, f"<= {energy_tol:g}", worst_rise <= energy_tol)
        gnorm = float(np.linalg.norm(energy_gradient_ops(Y, fX, ops, cfg)))
        steps = layers
        while gnorm >= grad_tol and steps < max_steps:
            Y, _ = step_ops(Y, fX, ops, cfg)
            steps += 1
            gnorm = float(np.linalg.norm(energy_gradient_ops(Y, fX, ops, cfg)))
        rep.add(f"instance {inst}: ||grad||_F after {steps} steps", gnorm, f"< {grad_tol:g} before step {max_steps}",
                gnorm < grad_tol and steps < max_steps)
    rep.seconds = time.perf_counter() - t0
    return rep


# ---- convex quadratic case ----

def convexity_check(n_instances: int = 10, seed: int = 0, max_steps: int = 10_000,
                    tol: float = 1e-6) -> CheckReport:
    """Gradient descent on the unbounded quadratic energy reaches the linear-solve minimizer."""
    rep = CheckReport("convexity")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    done = 0
    while done < n_instances:
        g = _connected_random_graph(rng)
        K = int(rng.integers(1, 3))
        negset = sample_negative_set(g, K, "source_uniform", int(rng.integers(1 << 30)))
        cfg = PropagationConfig(lam=float(rng.uniform(0.2, 2.0)), lambda_k=rng.uniform(0.05, 0.6, K).tolist(),
                                K=K, lower_bound=False)
        margin = convexity_margin(g, negset, cfg, normalized=False)
        if margin <= 0.05:
            continue
        alpha_max, convex = step_size_bound(g, negset, cfg, normalized=False)
        cfg.alpha = 0.9 * alpha_max
        fX = rng.normal(size=(g.num_nodes, int(rng.integers(1, 5))))
        target = closed_form_minimizer(fX, g, negset, cfg)
        H = quadratic_operator(g, negset, cfg, normalized=False)
        Y = fX.copy()
        steps = 0
        dist = float(np.linalg.norm(Y - target))
        while dist >= tol and steps < max_steps:
            Y = Y - cfg.alpha * (H @ Y - fX)
            steps += 1
            dist = float(np.linalg.norm(Y - target))
        rep.add(f"instance {done}: n={g.num_nodes} K={K} Hessian margin={margin:.3f} convex={convex} "
                f"alpha={cfg.alpha:.4f} steps={steps}", dist, f"< {tol:g}", convex and dist < tol)
        done += 1
    rep.seconds = time.perf_counter() - t0
    return rep


# ---- symmetry breaking on the hexagon ----

# one negative edge per cycle edge; degrees (3, 3, 1, 2, 2, 1) break the v2 <-> v3 automorphism
HEXAGON_NEGATIVES = [(0, 2), (0, 3), (0, 4), (1, 3), (1, 4), (1, 5)]


def isomorphism_embeddings(negatives, T: int = 8, seed: int = 0):
    g = hexagon()
    negset = negative_set_from_edges(6, [negatives])
    rng = np.random.default_rng(seed)
    base = init_mlp([3, 8, 4], rng)
    X = np.ones((6, 3))
    fX = mlp_forward(X, base)
    cfg = PropagationConfig(lam=1.0, lambda_k=1.0, gamma=0.1, alpha=0.5, T=T, K=1)
    return forward(fX, g, negset, cfg).Y


def isomorphism_check(seed: int = 0) -> CheckReport:
    rep = CheckReport("isomorphism")
    t0 = time.perf_counter()
    Y0 = isomorphism_embeddings([], seed=seed)
    Y1 = isomorphism_embeddings(HEXAGON_NEGATIVES, seed=seed)
    d0 = float(np.linalg.norm(Y0[1] - Y0[2]))
    d1 = float(np.linalg.norm(Y1[1] - Y1[2]))
    rep.add("||y2 - y3|| without negative edges", d0, "< 1e-12", d0 < 1e-12)
    rep.add("||y2 - y3|| with symmetry-breaking negative edges", d1, "> 1e-6", d1 > 1e-6)
    rep.seconds = time.perf_counter() - t0
    return rep


# ---- metric oracles ----

def brute_hits(pos, neg, k) -> float:
    hits = 0
    for p in pos:
        above = 0
        for q in neg:
            if q > p:
                above += 1
        if above < k:
            hits += 1
    return hits / len(pos)


def brute_mrr(per_source) -> float:
    total = Fraction(0)
    for p, negs in per_source:
        rank = 1
        for q in negs:
            if q > p:
                rank += 1
        total += Fraction(1, rank)
    return float(total / len(per_source))


def brute_heuristic(g, i, j, kind) -> float:
    ni, nj = set(g.neighbors(i).tolist()), set(g.neighbors(j).tolist())
    out = 0.0
    for z in sorted(ni & nj):
        dz = len(g.neighbors(z))
        assert dz >= 2
        out += {"CN": 1.0, "RA": 1.0 / dz, "AA": 1.0 / math.log(dz)}[kind]
    return out


def metrics_oracle_check(n_instances: int = 1000, seed: int = 0, n_graphs: int = 20) -> CheckReport:
    rep = CheckReport("metrics-oracle")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    hit_bad = mrr_bad = 0
    for _ in range(n_instances):
        P, Nn = int(rng.integers(1, 30)), int(rng.integers(1, 30))
        # coarse integer grid forces ties
        pos = rng.integers(0, 10, P).astype(float)
        neg = rng.integers(0, 10, Nn).astype(float)
        k = int(rng.integers(1, Nn + 1))
        hit_bad += hits_at_k(pos, neg, k) != brute_hits(pos, neg, k)
        per = [(float(rng.integers(0, 10)), rng.integers(0, 10, int(rng.integers(1, 20))).astype(float))
               for _ in range(int(rng.integers(1, 10)))]
        mrr_bad += mrr(per) != brute_mrr(per)
    rep.add(f"hits_at_k mismatches over {n_instances} fuzz instances", hit_bad, "== 0", hit_bad == 0)
    rep.add(f"mrr mismatches over {n_instances} fuzz instances", mrr_bad, "== 0", mrr_bad == 0)
    worst = {"CN": 0.0, "AA": 0.0, "RA": 0.0}
    for _ in range(n_graphs):
        n = int(rng.integers(5, 51))
        g = random_graph(n, float(rng.uniform(0.05, 0.4)), seed=int(rng.integers(1 << 30)))
        pairs = rng.integers(0, n, size=(60, 2))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        for kind in worst:
            fast = heuristic_score(g, pairs, kind)
            slow = np.array([brute_heuristic(g, i, j, kind) for i, j in pairs])
            worst[kind] = max(worst[kind], float(np.max(np.abs(fast - slow))))
    for kind, err in worst.items():
        tol = 0.0 if kind == "CN" else 1e-12
        rep.add(f"{kind} max |fast - set brute force| on {n_graphs} random graphs (n<=50)", err,
                f"<= {tol:g}", err <= tol)
    rep.seconds = time.perf_counter() - t0
    return rep


# ---- complexity scaling ----

def encode_timing(edge_counts=(1_000, 3_000, 10_000, 30_000, 100_000), avg_degree: float = 10.0, d: int = 32,
                  T: int = 8, K: int = 1, repeats: int = 3, seed: int = 0):
    """Median encode wall time per graph size (node count grows with |E| at fixed average degree)."""
    rows = []
    rng = np.random.default_rng(seed)
    for m in edge_counts:
        n = max(int(2 * m / avg_degree), 20)
        g = random_graph_m(n, m, seed=int(rng.integers(1 << 30)))
        base = init_mlp([16, d, d], rng)
        X = rng.normal(size=(n, 16))
        cfg = PropagationConfig(lam=1.0, lambda_k=1.0, gamma=0.1, alpha=0.5, T=T, K=K)
        times = []
        for r in range(repeats + 1):
            t0 = time.perf_counter()
            negset = sample_negative_set(g, K, "source_uniform", r)
            forward(mlp_forward(X, base), g, negset, cfg)
            times.append(time.perf_counter() - t0)
        rows.append((g.num_edges, float(np.median(times[1:]))))
    return rows


def loglog_fit(rows):
    x = np.log([r[0] for r in rows])
    y = np.log([r[1] for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    r2 = 1.0 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    return float(slope), float(r2)


def topk_timing(n: int = 10_000, d: int = 32, queries: int = 1000, k: int = 10, seed: int = 0):
    """Pruned vs brute-force dot-product top-k on vectors with spread-out norms."""
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(n, d))
    Y *= (rng.lognormal(0.0, 1.0, n) / np.linalg.norm(Y, axis=1))[:, None]
    src = rng.choice(n, queries, replace=False)
    t0 = time.perf_counter()
    brute = predict_topk(Y, None, src, k, "dot", pruned=False)
    t_brute = time.perf_counter() - t0
    t0 = time.perf_counter()
    fast = predict_topk(Y, None, src, k, "dot", pruned=True)
    t_fast = time.perf_counter() - t0
    return brute == fast, queries / t_brute, queries / t_fast


def scaling_check(seed: int = 0, slope_range=(0.8, 1.2), min_r2: float = 0.95) -> CheckReport:
    rep = CheckReport("scaling")
    t0 = time.perf_counter()
    rows = encode_timing(seed=seed)
    slope, r2 = loglog_fit(rows)
    rep.add(f"encode log-log slope over |E| in {[r[0] for r in rows]}", slope,
            f"in [{slope_range[0]}, {slope_range[1]}]", slope_range[0] <= slope <= slope_range[1])
    rep.add("encode log-log fit R^2", r2, f"> {min_r2}", r2 > min_r2)
    same, brute_tp, fast_tp = topk_timing(seed=seed)
    rep.add("pruned dot top-10 identical to brute force (n=1e4)", float(same), "== 1", same)
    rep.add(f"pruned throughput {fast_tp:.0f} vs brute {brute_tp:.0f} nodes/s (ratio)", fast_tp / brute_tp,
            ">= 1", fast_tp >= brute_tp)
    rep.seconds = time.perf_counter() - t0
    rep.timings = rows
    return rep


def run_suite(name: str, seed: int = 0) -> CheckReport:
    return {
        "gradients": gradient_check,
        "descent": descent_check,
        "convexity": convexity_check,
        "isomorphism": isomorphism_check,
        "metrics-oracle": metrics_oracle_check,
        "scaling": scaling_check,
    }[name](seed=seed)
