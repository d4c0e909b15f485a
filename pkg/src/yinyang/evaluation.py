"""Seeded evaluation: HR@k / MRR over a negative pool, aggregated as mean and std."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graph import CsrGraph, EdgeSplit, with_eval_pools
from .metrics import HEURISTICS, heuristic_score, hits_at_k, mrr
from .model import Checkpoint, TrainConfig, encode, score_pairs, train
from .propagation import PropagationConfig

METRICS = ("hits", "mrr")


@dataclass(frozen=True)
class EvalProtocol:
    """Which split, which metrics, and where the negatives come from.

    ``pool="fixed"`` uses the split's recorded pool for every seed;
    ``pool="per_seed"`` redraws a pool of ``pool_size`` non-edges from the seed.
    """
    which: str = "test"
    k: int = 100
    metrics: tuple = ("hits",)
    pool: str = "fixed"
    pool_size: int = 5000

    def __post_init__(self):
        if self.which not in ("valid", "test"):
            raise ValueError(f"which must be valid or test, got {self.which!r}")
        if self.pool not in ("fixed", "per_seed"):
            raise ValueError(f"pool must be fixed or per_seed, got {self.pool!r}")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ValueError(f"unknown metrics {bad}")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def describe(self) -> str:
        return (f"{self.which} edges vs {self.pool} pool of non-edges (size {self.pool_size}); "
                f"HR@{self.k} counts ties as hits; MRR ranks each positive against the whole pool, ties optimistic")

    def metric_name(self, metric: str) -> str:
        return f"HR@{self.k}" if metric == "hits" else "MRR"


@dataclass
class EvalResult:
    name: str
    metric: str
    value: float
    std: float
    per_seed: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    protocol: str = ""

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be >= 0")

    def formatted(self) -> str:
        return format_pm(self.value, self.std)

    def row(self) -> str:
        seeds = ",".join(str(s) for s in self.seeds)
        return f"{self.name}\t{self.metric}\t{self.value!r}\t{self.std!r}\t{seeds}"


def format_pm(mean: float, std: float) -> str:
    """Percent with two decimals, e.g. 0.9383, 0.0078 -> '93.83 ± 0.78'."""
    return f"{100 * mean:.2f} ± {100 * std:.2f}"


def aggregate(name: str, metric: str, values, seeds, protocol: str = "") -> EvalResult:
    values = [float(v) for v in values]
    if not values:
        raise ValueError("aggregate needs at least one value")
    # population std, so a single seed reports 0
    return EvalResult(name, metric, float(np.mean(values)), float(np.std(values)), values, list(seeds), protocol)


def _pool(split: EdgeSplit, protocol: EvalProtocol, seed: int) -> np.ndarray:
    if protocol.pool == "per_seed":
        return with_eval_pools(split, protocol.pool_size, seed).neg_pools[protocol.which]
    if protocol.which not in split.neg_pools:
        raise ValueError(f"split has no recorded {protocol.which} pool; attach one or use pool=per_seed")
    return split.neg_pools[protocol.which]


def _positives(split: EdgeSplit, which: str) -> np.ndarray:
    pos = split.valid_edges if which == "valid" else split.test_edges
    if len(pos) == 0:
        raise ValueError(f"split has no {which} edges")
    return pos


def score_metrics(pos: np.ndarray, neg: np.ndarray, protocol: EvalProtocol) -> dict:
    out = {}
    for m in protocol.metrics:
        if m == "hits":
            out[m] = hits_at_k(pos, neg, min(protocol.k, len(neg)))
        else:
            out[m] = mrr([(p, neg) for p in pos])
    return out


def evaluate(ckpt: Checkpoint, g_train: CsrGraph, X, split: EdgeSplit, protocol: EvalProtocol,
             seeds, name: str = "model", override: bool = False) -> list[EvalResult]:
    """Encode and score once per seed; the seed drives the negative graphs and, if per_seed, the pool."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("evaluate needs at least one seed")
    pos_edges = _positives(split, protocol.which)
    per = {m: [] for m in protocol.metrics}
    for s in seeds:
        Y = encode(ckpt, g_train, X, s, override=override)
        pos = score_pairs(ckpt.model, Y, pos_edges)
        neg = score_pairs(ckpt.model, Y, _pool(split, protocol, s))
        for m, v in score_metrics(pos, neg, protocol).items():
            per[m].append(v)
    return [aggregate(name, protocol.metric_name(m), per[m], seeds, protocol.describe()) for m in protocol.metrics]


def heuristic_results(g_train: CsrGraph, split: EdgeSplit, protocol: EvalProtocol, kinds=HEURISTICS,
                      seeds=(0,)) -> list[EvalResult]:
    """CN / AA / RA on the training graph, evaluated with the same protocol."""
    seeds = list(seeds)
    pos_edges = _positives(split, protocol.which)
    out = []
    for kind in kinds:
        per = {m: [] for m in protocol.metrics}
        for s in seeds:
            pos = heuristic_score(g_train, pos_edges, kind)
            neg = heuristic_score(g_train, _pool(split, protocol, s), kind)
            for m, v in score_metrics(pos, neg, protocol).items():
                per[m].append(v)
        out += [aggregate(kind.upper(), protocol.metric_name(m), per[m], seeds, protocol.describe())
                for m in protocol.metrics]
    return out


def seed_sweep(g: CsrGraph, X, split: EdgeSplit, prop: PropagationConfig, tc: TrainConfig, seeds,
               protocol: EvalProtocol, name: str = "model", progress=None) -> list[EvalResult]:
    """Train one model per seed (weights, negative graphs and inference all seeded) and aggregate."""
    seeds = list(seeds)
    g_train = split.train_graph()
    per = {m: [] for m in protocol.metrics}
    pos_edges = _positives(split, protocol.which)
    for s in seeds:
        tc_s = replace(tc, seed=s)
        ckpt = train(g, X, split, prop, tc_s)
        Y = encode(ckpt, g_train, X, s)
        pos = score_pairs(ckpt.model, Y, pos_edges)
        neg = score_pairs(ckpt.model, Y, _pool(split, protocol, s))
        vals = score_metrics(pos, neg, protocol)
        for m, v in vals.items():
            per[m].append(v)
        if progress is not None:
            progress(s, vals)
    return [aggregate(name, protocol.metric_name(m), per[m], seeds, protocol.describe()) for m in protocol.metrics]


VARIANTS = ("full", "no_negative", "random_features", "gcn")


def variant(name: str, prop: PropagationConfig, tc: TrainConfig, noise_scale: float = 0.5):
    """Configs for an ablation variant.

    ``no_negative`` zeroes every lambda_k so the negative term vanishes;
    ``random_features`` also trains on X + X_R; ``gcn`` is the plain GCN
    encoder with the same decoder.
    """
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}")
    if name == "full":
        return prop, tc
    if name == "gcn":
        return prop, replace(tc, encoder="gcn", gcn_lambda_k=0.0)
    zero = replace(prop, lambda_k=[0.0] * prop.K, learnable_lambda_k=False)
    if name == "no_negative":
        return zero, replace(tc, feature_noise=0.0)
    return zero, replace(tc, feature_noise=noise_scale)


RESULTS_HEADER = "name\tmetric\tmean\tstd\tseeds"


def write_results(path, results) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for r in results:
            fh.write(r.row() + "\n")


def read_results(path) -> list[EvalResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise ValueError(f"{path}: missing results header")
    for line in lines[1:]:
        name, metric, mean, std, seeds = line.split("\t")
        out.append(EvalResult(name, metric, float(mean), float(std),
                              seeds=[int(s) for s in seeds.split(",") if s]))
    return out
