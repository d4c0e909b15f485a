import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yinyang import autodiff as ad
from yinyang.checks import _pipeline_loss
from yinyang.graph import FeatureMatrix, from_edges, split_edges, with_eval_pools
from yinyang.model import (CheckpointFormatError, FingerprintMismatch, TrainConfig, TrainingDiverged, decode_pairs,
                           encode, encode_model, hadamard_score, init_model, link_loss, load_checkpoint,
                           predict_topk, save_checkpoint, train)
from yinyang.negsample import sample_negative_set
from yinyang.nn import MlpParams, init_mlp
from yinyang.propagation import PropagationConfig
from yinyang.synthetic import block_features, random_graph, sbm


def toy_problem(n=10, seed=0, dim=4):
    g = random_graph(n, 0.4, seed=seed)
    X = np.random.default_rng(seed).normal(size=(n, dim))
    split = with_eval_pools(split_edges(g, seed=seed), pool_size=10, seed=1)
    return g, X, split


class TestHadamardScore:
    dec = MlpParams([(np.array([[0.5], [-1.0]]), np.array([0.25]))], ["identity"])

    def test_zero_vector_gives_bias(self):
        assert float(hadamard_score(np.zeros(2), np.array([3.0, 4.0]), self.dec)) == 0.25

    def test_symmetric(self):
        a, b = np.array([1.5, -2.0]), np.array([0.3, 0.7])
        assert float(hadamard_score(a, b, self.dec)) == float(hadamard_score(b, a, self.dec))

    def test_sum_decoder_is_dot_product(self):
        dec = MlpParams([(np.ones((2, 1)), np.zeros(1))], ["identity"])
        y = np.array([1.0, 2.0])
        assert float(hadamard_score(y, y, dec)) == 5.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            hadamard_score(np.ones(3), np.ones(3), self.dec)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        Y = rng.normal(size=(6, 4))
        dec = init_mlp([4, 4, 1], rng)
        pairs = np.array([[0, 1], [2, 5], [3, 3]])
        batch = decode_pairs(Y, pairs, dec)
        single = [float(hadamard_score(Y[i], Y[j], dec)) for i, j in pairs]
        assert np.allclose(batch, single, rtol=0, atol=1e-14)


class TestLinkLoss:
    def test_perfect_separation(self):
        assert float(link_loss(np.array([800.0, 900.0]), np.array([[-800.0], [-750.0]]))) == 0.0

    def test_all_zero_logits(self):
        assert float(link_loss(np.zeros(1), np.zeros((1, 1)))) == pytest.approx(2 * np.log(2), rel=1e-15)

    def test_naive_oracle(self):
        rng = np.random.default_rng(3)
        pos, neg = rng.normal(size=7), rng.normal(size=(7, 3))
        sig = lambda x: 1 / (1 + np.exp(-x))
        want = 0.0
        for e in range(7):
            want -= np.log(sig(pos[e]))
            for a in range(3):
                want -= np.log(1 - sig(neg[e, a])) / 3
        assert float(link_loss(pos, neg)) == pytest.approx(want, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            link_loss(np.zeros(3), np.zeros((2, 1)))


class TestGradients:
    def test_eight_node_two_layer_t3(self):
        """Every parameter group vs central differences (h = 1e-5) on an 8-node graph, T = 3."""
        g = from_edges([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (0, 4), (2, 6)], 8)
        rng = np.random.default_rng(5)
        prop = PropagationConfig(lam=1.0, lambda_k=(0.8, 1.4), learnable_lambda_k=True, gamma=0.3, alpha=0.4, T=3, K=2)
        model = init_model(3, prop, TrainConfig(hidden=4, dim=3, P=2, seed=2))
        model.base.layers = [(W, rng.normal(scale=0.3, size=b.shape)) for W, b in model.base.layers]
        model.decoder.layers = [(W, rng.normal(scale=0.3, size=b.shape)) for W, b in model.decoder.layers]
        neg = sample_negative_set(g, 2, epoch_seed=3)
        X = rng.normal(size=(8, 3))
        pos, negp = g.edges(), rng.integers(0, 8, size=(2 * g.num_edges, 2))
        params = {k: v.copy() for k, v in model.named_params().items()}
        tape = ad.Tape()
        loss = _pipeline_loss(model, params, g, neg, X, pos, negp, 2, tape)
        assert min(np.min(np.abs(v[0])) for v in tape.inputs_of("relu")) > 1e-4
        grads = tape.backward(loss)
        assert set(model.trainable_names()) == {"base.0.W", "base.0.b", "base.1.W", "base.1.b",
                                                "dec.0.W", "dec.0.b", "dec.1.W", "dec.1.b", "lambda_k"}
        h = 1e-5
        for name in model.trainable_names():
            fd = np.zeros_like(params[name])
            for i in np.ndindex(fd.shape):
                p = {k: v.copy() for k, v in params.items()}
                p[name][i] += h
                up = float(_pipeline_loss(model, p, g, neg, X, pos, negp, 2))
                p[name][i] -= 2 * h
                dn = float(_pipeline_loss(model, p, g, neg, X, pos, negp, 2))
                fd[i] = (up - dn) / (2 * h)
            err = np.linalg.norm(fd - grads[name]) / max(np.linalg.norm(fd), np.linalg.norm(grads[name]))
            assert err < 1e-5, name

    def test_zero_lambda_k_forward_finite(self):
        # with every lambda_k = 0 the negative graphs only enter through the fit weights
        g, X, _ = toy_problem()
        prop = PropagationConfig(lambda_k=0.0, K=1, T=3, gamma=0.5)
        model = init_model(4, prop, TrainConfig(hidden=4, dim=4))
        a = encode_model(model, g, X, sample_negative_set(g, 1, epoch_seed=0))[0]
        state = encode_model(model, g, X, sample_negative_set(g, 1, epoch_seed=0))[1]
        assert np.all(np.isfinite(a)) and len(state.Q_trace) == 3


class TestTrain:
    def test_one_epoch_toy(self, tmp_path):
        g, X, split = toy_problem()
        ckpt = train(g, X, split, PropagationConfig(T=2), TrainConfig(epochs=1, hidden=8, dim=8, k=3))
        assert len(ckpt.history) == 1 and np.isfinite(ckpt.history[0]["loss"])
        save_checkpoint(tmp_path / "m.yyg", ckpt)
        back = load_checkpoint(tmp_path / "m.yyg")
        for k, v in ckpt.model.named_params().items():
            assert np.array_equal(v, back.model.named_params()[k])
        assert back.graph_hash == ckpt.graph_hash and back.split_seed == ckpt.split_seed
        assert back.model.prop == ckpt.model.prop and back.meta == ckpt.meta

    def test_sbm_loss_decreases(self):
        g, labels = sbm([30, 30], 0.25, 0.02, seed=0)
        X = block_features(labels, 8, noise=1.0, seed=0)
        split = with_eval_pools(split_edges(g, seed=0), pool_size=200, seed=0)
        ckpt = train(g, X, split, PropagationConfig(T=4, K=1, gamma=0.1),
                     TrainConfig(epochs=50, lr=0.01, hidden=16, dim=16, k=20, eval_every=10))
        assert ckpt.history[-1]["loss"] < ckpt.history[0]["loss"]

    def test_divergence_reports_epoch(self):
        g, X, split = toy_problem()
        with pytest.raises(TrainingDiverged) as info, np.errstate(all="ignore"):
            train(g, X * 1e150, split, PropagationConfig(T=2), TrainConfig(epochs=3, lr=1e150, hidden=4, dim=4))
        assert info.value.epoch >= 0

    def test_learnable_lambda_clamped(self):
        g, X, split = toy_problem()
        prop = PropagationConfig(T=2, K=2, lambda_k=(0.001, 0.002), learnable_lambda_k=True)
        ckpt = train(g, X, split, prop, TrainConfig(epochs=5, lr=0.5, hidden=4, dim=4, k=3))
        assert np.all(ckpt.model.lambda_k >= 0)

    def test_minibatch_and_gcn_encoder(self):
        g, X, split = toy_problem(n=14)
        for tc in (TrainConfig(epochs=2, batch=3, hidden=4, dim=4, k=3),
                   TrainConfig(epochs=2, encoder="gcn", hidden=4, dim=4, k=3)):
            ckpt = train(g, X, split, PropagationConfig(T=2), tc)
            assert all(np.isfinite(h["loss"]) for h in ckpt.history)

    def test_deterministic(self):
        g, X, split = toy_problem()
        run = lambda: train(g, X, split, PropagationConfig(T=2), TrainConfig(epochs=3, hidden=4, dim=4, k=3, seed=4))
        a, b = run(), run()
        assert all(np.array_equal(a.model.named_params()[k], v) for k, v in b.model.named_params().items())

    def test_feature_shape_checked(self):
        g, X, split = toy_problem()
        with pytest.raises(ValueError):
            train(g, X[:5], split, PropagationConfig(), TrainConfig(epochs=1))


class TestEncode:
    @pytest.fixture(scope="class")
    @classmethod
    def trained(cls):
        g, X, split = toy_problem()
        ckpt = train(g, X, split, PropagationConfig(T=5), TrainConfig(epochs=2, hidden=4, dim=4, k=3))
        return ckpt, split.train_graph(), X

    def test_same_seed_identical(self, trained):
        ckpt, g, X = trained
        assert np.array_equal(encode(ckpt, g, X, 3), encode(ckpt, g, X, 3))

    def test_q_trace_length(self, trained):
        ckpt, g, X = trained
        rows = []
        encode(ckpt, g, X, 0, diagnostics=rows)
        assert len(rows) == ckpt.model.prop.T == 5

    def test_fingerprint(self, trained):
        ckpt, g, X = trained
        other = from_edges(g.edges()[1:], g.num_nodes)
        with pytest.raises(FingerprintMismatch):
            encode(ckpt, other, X, 0)
        assert encode(ckpt, other, X, 0, override=True).shape == (10, 4)

    def test_checkpoint_roundtrip_bit_identical(self, trained, tmp_path):
        ckpt, g, X = trained
        save_checkpoint(tmp_path / "c.yyg", ckpt)
        assert np.array_equal(encode(ckpt, g, X, 1), encode(load_checkpoint(tmp_path / "c.yyg"), g, X, 1))
        # byte-level round trip as well
        save_checkpoint(tmp_path / "d.yyg", load_checkpoint(tmp_path / "c.yyg"))
        assert (tmp_path / "c.yyg").read_bytes() == (tmp_path / "d.yyg").read_bytes()

    def test_bad_files(self, trained, tmp_path):
        ckpt, *_ = trained
        (tmp_path / "bad.yyg").write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / "bad.yyg")
        save_checkpoint(tmp_path / "v.yyg", ckpt)
        raw = (tmp_path / "v.yyg").read_bytes().replace(b"format_version=1", b"format_version=9")
        (tmp_path / "v.yyg").write_bytes(raw)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / "v.yyg")

    def test_random_feature_variant_seen_at_inference(self):
        g, X, split = toy_problem()
        tc = TrainConfig(epochs=1, hidden=4, dim=4, k=3, feature_noise=0.5)
        ckpt = train(g, X, split, PropagationConfig(T=2, lambda_k=0.0), tc)
        from yinyang.baselines import random_feature_variant
        from yinyang.model import embed
        want = embed(ckpt.model, split.train_graph(), random_feature_variant(X, 0.5, 0), 7)[0]
        assert np.array_equal(encode(ckpt, split.train_graph(), X, 7), want)


class TestPredictTopk:
    def test_hand_dot(self):
        Y = np.array([[1.0, 0.0], [2.0, 1.0], [-1.0, 3.0]])
        out = predict_topk(Y, None, [0, 1, 2], 2, "dot")
        assert out[0] == [(1, 2.0), (2, -1.0)]
        assert out[1] == [(0, 2.0), (2, 1.0)]
        assert out[2] == [(1, 1.0), (0, -1.0)]

    def test_ties_ascending_index(self):
        Y = np.ones((5, 2))
        assert [d for d, _ in predict_topk(Y, None, [2], 3, "dot")[0]] == [0, 1, 3]
        assert [d for d, _ in predict_topk(Y, None, [2], 3, "dot", pruned=False)[0]] == [0, 1, 3]

    def test_excludes_training_edges(self):
        Y = np.array([[1.0], [5.0], [4.0], [3.0]])
        g = from_edges([(0, 1)], 4)
        assert predict_topk(Y, None, [0], 2, "dot", exclude=g)[0] == [(2, 4.0), (3, 3.0)]

    def test_errors(self):
        Y = np.ones((3, 2))
        with pytest.raises(ValueError):
            predict_topk(Y, None, [0], 3, "dot")
        with pytest.raises(ValueError):
            predict_topk(Y, None, [0], 1, "cosine")
        with pytest.raises(IndexError):
            predict_topk(Y, None, [3], 1, "dot")
        assert predict_topk(Y, None, [], 1, "dot") == []

    def test_pruned_equals_brute_1e4(self):
        rng = np.random.default_rng(0)
        Y = rng.normal(size=(10_000, 16))
        src = rng.choice(10_000, 200, replace=False)
        assert predict_topk(Y, None, src, 10, "dot") == predict_topk(Y, None, src, 10, "dot", pruned=False)

    @given(st.integers(0, 10_000), st.integers(2, 300), st.integers(1, 6), st.booleans(), st.booleans())
    @settings(max_examples=80, deadline=None)
    def test_pruned_equals_brute_fuzz(self, seed, n, d, integer, with_exclude):
        rng = np.random.default_rng(seed)
        Y = rng.integers(-2, 3, size=(n, d)).astype(float) if integer else rng.normal(size=(n, d)) * rng.lognormal(size=(n, 1))
        k = int(rng.integers(1, n))
        src = rng.choice(n, min(n, 20), replace=False)
        ex = random_graph(n, 0.05, seed=seed) if with_exclude else None
        assert predict_topk(Y, None, src, k, "dot", exclude=ex) == \
            predict_topk(Y, None, src, k, "dot", exclude=ex, pruned=False)

    def test_hadamard_matches_pairwise(self):
        rng = np.random.default_rng(1)
        Y = rng.normal(size=(30, 4))
        dec = init_mlp([4, 4, 1], rng)
        out = predict_topk(Y, dec, [3], 5, "hadamard_mlp")[0]
        scores = np.array([float(hadamard_score(Y[3], Y[j], dec)) for j in range(30)])
        scores[3] = -np.inf
        order = sorted(range(30), key=lambda j: (-scores[j], j))[:5]
        assert [d for d, _ in out] == order
        assert np.allclose([s for _, s in out], scores[order], rtol=0, atol=1e-13)

    def test_dot_faster_than_mlp(self):
        rng = np.random.default_rng(2)
        Y = rng.normal(size=(3000, 32))
        dec = init_mlp([32, 32, 1], rng)
        src = np.arange(200)
        t0 = time.perf_counter()
        predict_topk(Y, dec, src, 10, "dot")
        t_dot = time.perf_counter() - t0
        t0 = time.perf_counter()
        predict_topk(Y, dec, src, 10, "hadamard_mlp")
        t_mlp = time.perf_counter() - t0
        assert t_dot < t_mlp
