"""Encoder + HadamardMLP decoder, the link loss, the bilevel training loop and top-k serving."""
from __future__ import annotations

import copy
import logging
import struct
import time
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .baselines import gcn_neg_forward
from .graph import CsrGraph, EdgeSplit, FeatureMatrix
from .metrics import hits_at_k
from .negsample import NegativeGraphSet, sample_negative_set, sample_supervision_negatives
from .nn import AdamState, MlpParams, adam_step, init_mlp, mlp_forward
from .propagation import EmbeddingState, PropagationConfig, forward

log = logging.getLogger(__name__)

MAGIC = b"YYG1"
FORMAT_VERSION = 1
ENCODERS = ("yinyang", "gcn")
SCORERS = ("hadamard_mlp", "dot")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch


class FingerprintMismatch(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.005
    epochs: int = 100
    N: int = 1
    batch: int = 0              # train edges per step; 0 = full batch
    hidden: int = 128
    dim: int = 128
    P: int = 2
    decoder_layers: int = 2
    dropout: float = 0.0
    seed: int = 0
    eval_every: int = 1
    k: int = 100
    sampler: str = "source_uniform"
    encoder: str = "yinyang"
    gcn_layers: int = 2
    gcn_lambda_k: float = 0.0
    feature_noise: float = 0.0
    eval_seed: int = 12345


@dataclass
class LinkModel:
    encoder: str
    prop: PropagationConfig
    decoder: MlpParams
    base: MlpParams | None = None
    gcn: list | None = None
    lambda_k: np.ndarray = None
    gcn_lambda_k: float = 0.0

    def named_params(self) -> dict:
        out = {}
        if self.base is not None:
            out.update(self.base.named("base"))
        if self.gcn is not None:
            out.update({f"gcn.{t}.W": W for t, W in enumerate(self.gcn)})
        out.update(self.decoder.named("dec"))
        out["lambda_k"] = np.asarray(self.lambda_k, dtype=np.float64)
        return out

    def load_named(self, values: dict) -> None:
        if self.base is not None:
            self.base.load_named("base", values)
        if self.gcn is not None:
            self.gcn = [values[f"gcn.{t}.W"] for t in range(len(self.gcn))]
        self.decoder.load_named("dec", values)
        self.lambda_k = np.asarray(values["lambda_k"], dtype=np.float64)

    def trainable_names(self) -> list:
        names = [n for n in self.named_params() if n != "lambda_k"]
        if self.encoder == "yinyang" and self.prop.learnable_lambda_k:
            names.append("lambda_k")
        return names


@dataclass
class Checkpoint:
    model: LinkModel
    graph_hash: str
    split_seed: int
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION
    history: list = field(default_factory=list, compare=False)


def init_model(in_dim: int, prop: PropagationConfig, tc: TrainConfig) -> LinkModel:
    if tc.encoder not in ENCODERS:
        raise ValueError(f"unknown encoder {tc.encoder!r}")
    rng = np.random.default_rng(tc.seed)
    base = gcn = None
    if tc.encoder == "yinyang":
        dims = [in_dim] + [tc.hidden] * (tc.P - 1) + [tc.dim]
        base = init_mlp(dims, rng)
    else:
        dims = [in_dim] + [tc.hidden] * (tc.gcn_layers - 1) + [tc.dim]
        gcn = [init_mlp([a, b], rng).layers[0][0] for a, b in zip(dims[:-1], dims[1:])]
    dec = init_mlp([tc.dim] * tc.decoder_layers + [1], rng)
    return LinkModel(tc.encoder, prop, dec, base, gcn, np.array(prop.lambda_k, dtype=np.float64),
                     tc.gcn_lambda_k)


# ---- decoder and loss ----

def hadamard_score(y_i, y_j, dec: MlpParams, tape: ad.Tape | None = None):
    """Logit MLP(y_i * y_j) for one pair."""
    if np.shape(ad.value(y_i)) != np.shape(ad.value(y_j)) or np.shape(ad.value(y_i))[-1] != dec.in_dim:
        raise ValueError("embedding dimensions do not match the decoder")
    h = ad.reshape(ad.mul(y_i, y_j), (1, dec.in_dim))
    return ad.reshape(mlp_forward(h, dec, tape, "dec"), ())


def decode_pairs(Y, pairs, dec: MlpParams, tape: ad.Tape | None = None, dropout: float = 0.0, rng=None):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    h = ad.mul(ad.take_rows(Y, pairs[:, 0]), ad.take_rows(Y, pairs[:, 1]))
    out = mlp_forward(h, dec, tape, "dec", dropout=dropout, rng=rng)
    return ad.reshape(out, (len(pairs),))


def link_loss(pos_logits, neg_logits, tape: ad.Tape | None = None):
    """sum_e [-log sig(pos_e) - (1/N) sum_a log(1 - sig(neg_ea))] in log-sigmoid form."""
    pv, nv = np.shape(ad.value(pos_logits)), np.shape(ad.value(neg_logits))
    if len(nv) != 2 or len(pv) != 1 or nv[0] != pv[0]:
        raise ValueError(f"expected pos (m,) and neg (m, N); got {pv} and {nv}")
    pos_term = ad.total(ad.log_sigmoid(pos_logits))
    neg_term = ad.total(ad.log_sigmoid(ad.mul(neg_logits, -1.0)))
    return ad.sub(ad.mul(pos_term, -1.0), ad.mul(neg_term, 1.0 / nv[1]))


# ---- encoder ----

def encode_model(model: LinkModel, g_train: CsrGraph, X, negset: NegativeGraphSet | None,
                 tape: ad.Tape | None = None, dropout: float = 0.0, rng=None,
                 diagnostics: list | None = None):
    """Embeddings for every node; returns (Y, EmbeddingState or None)."""
    Xv = X.data if isinstance(X, FeatureMatrix) else X
    if model.encoder == "gcn":
        gcn = [tape.param(f"gcn.{t}.W", W) for t, W in enumerate(model.gcn)] if tape else model.gcn
        Y = gcn_neg_forward(g_train, negset, Xv, gcn, model.gcn_lambda_k)
        return Y, None
    fX = mlp_forward(Xv, model.base, tape, "base", dropout=dropout, rng=rng)
    lam = model.lambda_k
    if tape is not None and model.prop.learnable_lambda_k:
        lam = tape.param("lambda_k", lam)
    state = forward(fX, g_train, negset, model.prop, lam, diagnostics=diagnostics)
    return state.Y, state


def _needs_negatives(model: LinkModel) -> bool:
    return model.encoder == "yinyang" or model.gcn_lambda_k != 0


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def embed(model: LinkModel, g_train: CsrGraph, X, negset_seed: int, mode: str = "source_uniform",
          diagnostics: list | None = None) -> tuple[np.ndarray, EmbeddingState | None]:
    negset = sample_negative_set(g_train, model.prop.K, mode, negset_seed) if _needs_negatives(model) else None
    Y, state = encode_model(model, g_train, X, negset, diagnostics=diagnostics)
    return np.asarray(Y), state


def encode(ckpt: Checkpoint, g: CsrGraph, X, negset_seed: int, override: bool = False,
           diagnostics: list | None = None) -> np.ndarray:
    """One tape-free forward pass with the checkpoint's weights."""
    if g.fingerprint() != ckpt.graph_hash and not override:
        raise FingerprintMismatch(f"graph fingerprint {g.fingerprint()} != checkpoint {ckpt.graph_hash}")
    mode = ckpt.meta.get("sampler", "source_uniform")
    noise = float(ckpt.meta.get("train.feature_noise", 0.0))
    if noise > 0:
        # the random-feature variant sees the same X + X_R at inference as in training
        from .baselines import random_feature_variant
        X = random_feature_variant(X, noise, int(ckpt.meta.get("train.seed", 0)))
    return embed(ckpt.model, g, X, negset_seed, mode, diagnostics)[0]


def score_pairs(model: LinkModel, Y: np.ndarray, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    out = np.empty(len(pairs))
    step = max(1, 2_000_000 // max(Y.shape[1], 1))
    for s in range(0, len(pairs), step):
        out[s:s + step] = decode_pairs(Y, pairs[s:s + step], model.decoder)
    return out


# ---- training ----

def train(g: CsrGraph, X, split: EdgeSplit, cfg: PropagationConfig, train_cfg: TrainConfig,
          progress=None) -> Checkpoint:
    """Bilevel training: unrolled encoder forward, link loss, Adam on {W, theta, lambda_k}.

    Returns the checkpoint with the best validation HR@k; per-epoch records
    are in ``Checkpoint.history``.
    """
    tc = train_cfg
    if tc.epochs < 1:
        raise ValueError("epochs must be >= 1")
    Xv = X.data if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if Xv.shape[0] != g.num_nodes:
        raise ValueError(f"feature rows {Xv.shape[0]} != graph nodes {g.num_nodes}")
    if tc.feature_noise > 0:
        from .baselines import random_feature_variant
        Xv = random_feature_variant(Xv, tc.feature_noise, tc.seed).data
    g_train = split.train_graph()
    model = init_model(Xv.shape[1], cfg, tc)
    params = model.named_params()
    trainable = model.trainable_names()
    adam = AdamState(lr=tc.lr)
    rng = np.random.default_rng(tc.seed)
    has_valid = len(split.valid_edges) > 0 and "valid" in split.neg_pools
    best_val, best_params, history = -np.inf, copy.deepcopy(params), []
    train_edges = split.train_edges
    m = len(train_edges)
    batch = m if tc.batch <= 0 else min(tc.batch, m)

    for epoch in range(tc.epochs):
        t0 = time.perf_counter()
        eseed = _epoch_seed(tc.seed, epoch)
        negset = sample_negative_set(g_train, cfg.K, tc.sampler, eseed) if _needs_negatives(model) else None
        sup = sample_supervision_negatives(split, tc.N, eseed + 1)
        order = rng.permutation(m) if batch < m else np.arange(m)
        losses, q_first, q_last = [], None, None
        for start in range(0, m, batch):
            idx = order[start:start + batch]
            model.load_named(params)
            tape = ad.Tape()
            try:
                Y, state = encode_model(model, g_train, Xv, negset, tape, tc.dropout, rng)
            except FloatingPointError:
                raise TrainingDiverged(epoch, float("nan")) from None
            pos = decode_pairs(Y, train_edges[idx], model.decoder, tape)
            neg = decode_pairs(Y, sup.pairs[idx].reshape(-1, 2), model.decoder, tape)
            loss = link_loss(pos, ad.reshape(neg, (len(idx), tc.N)), tape)
            lv = float(ad.value(loss))
            if not np.isfinite(lv):
                raise TrainingDiverged(epoch, lv)
            grads = tape.backward(loss)
            params = adam_step(adam, params, {n: grads[n] for n in trainable})
            if not all(np.all(np.isfinite(params[n])) for n in trainable):
                raise TrainingDiverged(epoch, lv)
            if "lambda_k" in trainable:
                params["lambda_k"] = np.maximum(params["lambda_k"], 0.0)
            losses.append(lv)
            if state is not None:
                q_first = q_first if q_first is not None else state.Q_trace[0]
                q_last = state.Q_trace[-1]
        record = {"epoch": epoch, "loss": float(np.sum(losses)), "Q_first": q_first, "Q_last": q_last,
                  "seconds": time.perf_counter() - t0}
        model.load_named(params)
        if has_valid and (epoch % tc.eval_every == 0 or epoch == tc.epochs - 1):
            try:
                val = validation_hits(model, g_train, Xv, split, "valid", tc.k, tc.eval_seed, tc.sampler)
            except FloatingPointError:
                raise TrainingDiverged(epoch, record["loss"]) from None
            record["val"] = val
            if val > best_val:
                best_val, best_params = val, copy.deepcopy(params)
        history.append(record)
        if progress is not None:
            progress(record)
        log.debug("epoch %d loss %.6g val %s", epoch, record["loss"], record.get("val"))
    if not has_valid:
        best_params = copy.deepcopy(params)
    model.load_named(best_params)
    meta = {"sampler": tc.sampler, "best_val": float(best_val) if np.isfinite(best_val) else float("nan")}
    meta.update({f"train.{f.name}": getattr(tc, f.name) for f in fields(tc)})
    return Checkpoint(model, g_train.fingerprint(), split.split_seed, meta, history=history)


def validation_hits(model: LinkModel, g_train: CsrGraph, X, split: EdgeSplit, which: str, k: int,
                    seed: int, sampler: str = "source_uniform") -> float:
    Y, _ = embed(model, g_train, X, seed, sampler)
    pos_edges = split.valid_edges if which == "valid" else split.test_edges
    neg_edges = split.neg_pools[which]
    pos = score_pairs(model, Y, pos_edges)
    neg = score_pairs(model, Y, neg_edges)
    return hits_at_k(pos, neg, min(k, len(neg)))


# ---- top-k serving ----

def _topk_rows(S: np.ndarray, idx: np.ndarray, k: int):
    """Top-k per row by (score desc, index asc); ``idx`` holds the column node ids."""
    order = np.lexsort((np.broadcast_to(idx, S.shape), -S), axis=-1)[:, :k]
    return np.take_along_axis(S, order, axis=1), np.take_along_axis(np.broadcast_to(idx, S.shape), order, axis=1)


def _exclusion(n: int, exclude: CsrGraph | None) -> sp.csr_matrix:
    E = sp.identity(n, format="csr", dtype=np.float64)
    if exclude is not None:
        E = (E + exclude.adjacency()).tocsr()
    E.data[:] = 1.0
    return E


def _mask(S, E, src, cand):
    block = E[src][:, cand].toarray() > 0
    return np.where(block, -np.inf, S)


def _collect(top_s, top_i, src):
    out = []
    for r in range(len(src)):
        keep = np.isfinite(top_s[r])
        out.append(list(zip(top_i[r][keep].tolist(), top_s[r][keep].tolist())))
    return out


def _topk_exact(S: np.ndarray, k: int):
    """Row-wise top-k of a full score matrix, ordered by (score desc, column asc)."""
    rows, n = S.shape
    kth = np.partition(S, n - k, axis=1)[:, n - k][:, None]
    above = S > kth
    need = k - above.sum(axis=1, keepdims=True)
    tie = S == kth
    mask = above | (tie & (np.cumsum(tie, axis=1) <= need))
    cols = np.nonzero(mask)[1].reshape(rows, k)
    return _topk_rows(np.take_along_axis(S, cols, axis=1), cols, k)


def topk_brute(Y, src, k, score_fn, E, block_rows: int = 256):
    n = Y.shape[0]
    res = []
    for s in range(0, len(src), block_rows):
        rows = src[s:s + block_rows]
        S = _mask(score_fn(rows), E, rows, np.arange(n))
        res.extend(_collect(*_topk_exact(S, k), rows))
    return res


def _pair_dot(Y, rows, cols) -> np.ndarray:
    """Inner products of (rows[i], cols[i]) accumulated in a fixed order, so every search path agrees bit for bit."""
    acc = np.zeros(len(rows))
    for j in range(Y.shape[1]):
        acc += Y[rows, j] * Y[cols, j]
    return acc


def _dot_slack(qn, ymax: float, d: int):
    # twice the worst-case rounding error of a length-d dot product, with a small cushion
    return 2.0 * (d + 2) * np.finfo(np.float64).eps * qn * ymax + 1e-300


def _refine_dot(Y, rows, qi, cols, k: int):
    """Rescore screened candidates exactly; rank by (score desc, node asc) per query."""
    exact = _pair_dot(Y, rows[qi], cols)
    o = np.lexsort((cols, -exact, qi))
    qi, cols, exact = qi[o], cols[o], exact[o]
    q = np.arange(len(rows))
    lo, hi = np.searchsorted(qi, q), np.searchsorted(qi, q, side="right")
    hi = np.minimum(hi, lo + k)
    return [list(zip(cols[a:b].tolist(), exact[a:b].tolist())) for a, b in zip(lo, hi)]


def topk_dot_brute(Y, src, k, E, block_rows: int = 256):
    """Full score matrix per block of sources, then exact rescoring of everything near the k-th score."""
    n, d = Y.shape
    norms = np.linalg.norm(Y, axis=1)
    ymax = float(norms.max())
    res = []
    for s in range(0, len(src), block_rows):
        rows = src[s:s + block_rows]
        S = _mask(Y[rows] @ Y.T, E, rows, np.arange(n))
        kth = np.partition(S, n - k, axis=1)[:, n - k]
        thr = kth - _dot_slack(norms[rows], ymax, d)
        qi, cols = np.nonzero((S >= thr[:, None]) & np.isfinite(S))
        res.extend(_refine_dot(Y, rows, qi, cols, k))
    return res


def topk_dot_pruned(Y, src, k, E, block: int = 512):
    """Exact top-k inner-product search with a norm bound.

    Candidates are visited in decreasing norm order; a query stops once
    ``|q| * |y_next|`` falls below its current k-th score. Candidates within
    rounding distance of the running k-th score are rescored exactly at the end.
    """
    n, d = Y.shape
    norms = np.linalg.norm(Y, axis=1)
    order = np.argsort(-norms, kind="stable")
    ymax = float(norms[order[0]])
    Q = Y[src]
    qn = np.linalg.norm(Q, axis=1)
    slack = _dot_slack(qn, ymax, d)
    m = len(src)
    top_s = np.full((m, k), -np.inf)  # running k best approximate scores, unordered
    kth = np.full(m, -np.inf)
    active = np.arange(m)
    kept_q, kept_c, kept_s = [], [], []
    for start in range(0, n, block):
        cand = order[start:start + block]
        S = _mask(Q[active] @ Y[cand].T, E, src[active], cand)
        allS = np.concatenate([top_s[active], S], axis=1)
        top_s[active] = -np.partition(-allS, k - 1, axis=1)[:, :k]
        kth[active] = top_s[active].min(axis=1)
        thr = kth[active] - slack[active]
        qi, ci = np.nonzero((S >= thr[:, None]) & np.isfinite(S))
        kept_q.append(active[qi])
        kept_c.append(cand[ci])
        kept_s.append(S[qi, ci])
        nxt = start + block
        if nxt >= n:
            break
        bound = qn[active] * norms[order[nxt]]
        bound = bound + 1e-12 * np.abs(bound)
        active = active[bound >= kth[active] - slack[active]]
        if len(active) == 0:
            break
    qi, cols, approx = np.concatenate(kept_q), np.concatenate(kept_c), np.concatenate(kept_s)
    keep = approx >= kth[qi] - slack[qi]
    return _refine_dot(Y, src, qi[keep], cols[keep], k)


def predict_topk(Y, dec: MlpParams | None, src_nodes, k: int, scorer: str = "hadamard_mlp",
                 exclude: CsrGraph | None = None, pruned: bool = True):
    """Per source, the k best other nodes as (node, score) lists, ties by ascending node id.

    ``exclude`` removes known edges (typically the training graph).
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of nodes {n}")
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}")
    src = np.asarray(list(src_nodes), dtype=np.int64)
    if len(src) == 0:
        return []
    if src.min() < 0 or src.max() >= n:
        raise IndexError("source id out of range")
    E = _exclusion(n, exclude)
    if scorer == "dot":
        if pruned:
            return topk_dot_pruned(Y, src, k, E)
        return topk_dot_brute(Y, src, k, E)

    def mlp_scores(rows):
        H = Y[rows][:, None, :] * Y[None, :, :]
        out = mlp_forward(H.reshape(-1, Y.shape[1]), dec)
        return out.reshape(len(rows), n)

    rows_per_block = max(1, 4_000_000 // max(n * Y.shape[1], 1))
    return topk_brute(Y, src, k, mlp_scores, E, block_rows=rows_per_block)


# ---- checkpoint IO ----

def _config_lines(ckpt: Checkpoint, names: list) -> str:
    m = ckpt.model
    p = m.prop
    items = {
        "format_version": ckpt.version,
        "encoder": m.encoder,
        "graph_hash": ckpt.graph_hash,
        "split_seed": ckpt.split_seed,
        "tensors": ",".join(names),
        "prop.lam": repr(p.lam),
        "prop.lambda_k": ",".join(repr(x) for x in p.lambda_k),
        "prop.learnable_lambda_k": p.learnable_lambda_k,
        "prop.gamma": repr(p.gamma),
        "prop.alpha": repr(p.alpha),
        "prop.T": p.T,
        "prop.K": p.K,
        "prop.lower_bound": p.lower_bound,
        "gcn_lambda_k": repr(m.gcn_lambda_k),
        "decoder.activations": ",".join(m.decoder.activations),
    }
    if m.base is not None:
        items["base.activations"] = ",".join(m.base.activations)
    for key, val in ckpt.meta.items():
        items[f"meta.{key}"] = repr(val)
    return "".join(f"{k}={v}\n" for k, v in items.items())


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tensors = ckpt.model.named_params()
    names = list(tensors)
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        buf += struct.pack("<I", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    cfg = _config_lines(ckpt, names).encode("utf-8")
    buf += struct.pack("<I", len(cfg)) + cfg
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def _as_bool(s: str) -> bool:
    return s in ("True", "true", "1")


def load_checkpoint(path) -> Checkpoint:
    import ast

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {raw[:4]!r}")
    pos = 4

    def u32(count=1):
        nonlocal pos
        vals = struct.unpack_from(f"<{count}I", raw, pos)
        pos += 4 * count
        return vals

    (ntensors,) = u32()
    arrays = []
    for _ in range(ntensors):
        (ndim,) = u32()
        shape = u32(ndim) if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arrays.append(np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64))
        pos += 8 * size
    (clen,) = u32()
    cfg = dict(line.split("=", 1) for line in raw[pos:pos + clen].decode("utf-8").splitlines() if line)
    if int(cfg["format_version"]) != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {cfg['format_version']}")
    names = cfg["tensors"].split(",")
    tensors = dict(zip(names, arrays))
    prop = PropagationConfig(
        lam=float(cfg["prop.lam"]), lambda_k=[float(x) for x in cfg["prop.lambda_k"].split(",")],
        learnable_lambda_k=_as_bool(cfg["prop.learnable_lambda_k"]), gamma=float(cfg["prop.gamma"]),
        alpha=float(cfg["prop.alpha"]), T=int(cfg["prop.T"]), K=int(cfg["prop.K"]),
        lower_bound=_as_bool(cfg["prop.lower_bound"]))

    def mlp(prefix, acts):
        count = sum(1 for n in names if n.startswith(prefix + ".") and n.endswith(".W"))
        return MlpParams([(tensors[f"{prefix}.{i}.W"], tensors[f"{prefix}.{i}.b"]) for i in range(count)],
                         acts.split(","))

    base = mlp("base", cfg["base.activations"]) if "base.activations" in cfg else None
    ngcn = sum(1 for n in names if n.startswith("gcn."))
    gcn = [tensors[f"gcn.{t}.W"] for t in range(ngcn)] if ngcn else None
    model = LinkModel(cfg["encoder"], prop, mlp("dec", cfg["decoder.activations"]), base, gcn,
                      tensors["lambda_k"], float(cfg["gcn_lambda_k"]))
    meta = {k[5:]: ast.literal_eval(v) if v not in ("nan", "inf") else float(v)
            for k, v in cfg.items() if k.startswith("meta.")}
    return Checkpoint(model, cfg["graph_hash"], int(cfg["split_seed"]), meta, int(cfg["format_version"]))
