import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from yinyang.graph import from_edges

# filled by test_acceptance.py, shown in the terminal summary
ACCEPTANCE_LINES = []

DATA_DIR = Path(os.environ.get("YYG_DATA", Path(__file__).resolve().parents[1] / "data"))


def dataset_files(name):
    """(edges, features) paths for a prepared dataset, or None when absent."""
    e, f = DATA_DIR / f"{name}.edges", DATA_DIR / f"{name}.features"
    return (e, f) if e.is_file() and f.is_file() else None


def dense_adj(g):
    """Dense adjacency read straight off the CSR arrays (multiplicities included)."""
    A = np.zeros((g.num_nodes, g.num_nodes))
    for i in range(g.num_nodes):
        lo, hi = g.row_offsets[i], g.row_offsets[i + 1]
        for p in range(lo, hi):
            A[i, g.col_indices[p]] += 1.0 if g.weights is None else g.weights[p]
    return A


@st.composite
def graphs(draw, min_nodes=2, max_nodes=30):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    return from_edges(np.array(pairs, dtype=np.int64).reshape(-1, 2), n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---- dense-algebra reference for the propagation energy ----

def _sub1(d):
    return np.where(d > 0, d, 1.0)


def dense_operators(g, negset):
    """Dense L~, L~^-_k (D^-_K normalized) and fit weights 1/(D + D^-_K)."""
    A = dense_adj(g)
    d = A.sum(axis=1)
    s = 1.0 / np.sqrt(_sub1(d))
    L = np.diag(d / _sub1(d)) - s[:, None] * A * s[None, :]
    dk = sum(dense_adj(h).sum(axis=1) for h in negset.graphs)
    sk = 1.0 / np.sqrt(_sub1(dk))
    Lk = []
    for h in negset.graphs:
        Ak = dense_adj(h)
        Lk.append(np.diag(Ak.sum(axis=1) / _sub1(dk)) - sk[:, None] * Ak * sk[None, :])
    return L, Lk, 1.0 / _sub1(d + dk), A, d, dk


def softplus(x):
    return np.log1p(np.exp(-abs(x))) + max(x, 0.0)


def dense_energy_and_grad(Y, fX, g, negset, lam, lambda_k, gamma, lower_bound=True):
    L, Lk, w, *_ = dense_operators(g, negset)
    K = len(Lk)
    lk = np.asarray(lambda_k, dtype=float)
    tr = np.array([np.trace(Y.T @ M @ Y) for M in Lk])
    fit = float(np.sum(w[:, None] * (Y - fX) ** 2))
    e = fit + lam * np.trace(Y.T @ L @ Y)
    grad = 2 * w[:, None] * (Y - fX) + 2 * lam * L @ Y
    neg_grad = sum(l * M @ Y for l, M in zip(lk, Lk))
    if lower_bound:
        lbar = lk.mean()
        wk = lk / lbar if lbar > 0 else np.ones(K)
        Q = gamma * g.num_edges - float(wk @ tr)
        e += lbar / K * softplus(Q)
        sig = 1.0 / (1.0 + np.exp(-Q))
        grad = grad - 2 * sig / K * neg_grad
    else:
        Q = None
        e -= float(lk @ tr) / K
        grad = grad - 2.0 / K * neg_grad
    return e, grad, Q


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda ln: int(ln.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
