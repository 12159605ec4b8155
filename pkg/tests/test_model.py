"""Classifier contracts: architecture, gradients, optimizer, fit, IO."""

import numpy as np
import pytest

from repocat import model as M
from repocat.model import ClassifierConfig, TrainExample


def tiny_config(**overrides):
    base = dict(
        num_categories=3, seq_len=10, embed_dims=8, filters=4, kernel_size=3,
        strides=1, pool_size=2, lstm_units=5, hide_u=8, dropout_level=0.0,
        epochs=2, batch_size=8, seed=0,
    )
    base.update(overrides)
    return ClassifierConfig(**base)


def make_model(cfg=None, seed=0, vocab_size=12):
    cfg = cfg or tiny_config()
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(vocab_size, cfg.embed_dims))
    emb[:2] = 0.0
    return M.init_model(cfg, emb, seed=seed + 1)


def oracle_forward(model, ids_1d):
    """Slow per-element re-implementation of the forward pass."""
    cfg, p = model.config, model.params
    X = model.embedding[np.asarray(ids_1d)]
    T, T2, U = cfg.conv_len, cfg.pooled_len, cfg.lstm_units
    Z = np.zeros((T, cfg.filters))
    for t in range(T):
        for f in range(cfg.filters):
            acc = p["conv_b"][f]
            for k in range(cfg.kernel_size):
                for d in range(cfg.embed_dims):
                    acc += X[t * cfg.strides + k, d] * p["conv_w"][k, d, f]
            Z[t, f] = acc
    A = np.maximum(Z, 0.0)
    P = np.zeros((T2, cfg.filters))
    for t2 in range(T2):
        for f in range(cfg.filters):
            P[t2, f] = max(A[t2 * cfg.pool_size + k, f] for k in range(cfg.pool_size))
    h = np.zeros(U)
    c = np.zeros(U)
    for t in range(T2):
        z = P[t] @ p["lstm_wx"] + h @ p["lstm_wh"] + p["lstm_b"]
        gi = 1.0 / (1.0 + np.exp(-z[:U]))
        gf = 1.0 / (1.0 + np.exp(-z[U : 2 * U]))
        gg = np.tanh(z[2 * U : 3 * U])
        go = 1.0 / (1.0 + np.exp(-z[3 * U :]))
        c = gf * c + gi * gg
        h = go * np.tanh(c)
    hid = np.maximum(h @ p["hid_w"] + p["hid_b"], 0.0)
    logits = hid @ p["out_w"] + p["out_b"]
    ex = np.exp(logits - logits.max())
    return ex / ex.sum()


class TestConfig:
    def test_shape_arithmetic_at_stock_defaults(self):
        cfg = ClassifierConfig(num_categories=6)
        assert (cfg.seq_len, cfg.embed_dims) == (60, 100)
        assert cfg.conv_len == 58
        assert cfg.pooled_len == 29
        assert (cfg.filters, cfg.lstm_units, cfg.hide_u) == (250, 100, 512)
        assert cfg.dropout_level == 0.5
        assert cfg.optimizer == "adamax"
        assert (cfg.learning_rate, cfg.beta1, cfg.beta2) == (0.002, 0.9, 0.999)
        assert cfg.epochs == 3 and cfg.batch_size == 128

    def test_validation(self):
        with pytest.raises(ValueError):
            tiny_config(num_categories=1).validate()
        with pytest.raises(ValueError):
            tiny_config(kernel_size=11).validate()
        with pytest.raises(ValueError):
            tiny_config(pool_size=50).validate()
        with pytest.raises(ValueError):
            tiny_config(dropout_level=1.0).validate()
        with pytest.raises(ValueError):
            tiny_config(optimizer="sgd").validate()


class TestInit:
    def test_deterministic_and_seed_sensitive(self):
        a, b, c = make_model(seed=3), make_model(seed=3), make_model(seed=4)
        for name in M.PARAM_NAMES:
            np.testing.assert_array_equal(a.params[name], b.params[name])
        assert any(np.abs(a.params[n] - c.params[n]).max() > 0 for n in M.PARAM_NAMES)

    def test_glorot_bounds(self):
        m = make_model()
        cfg = m.config
        K, D, F = cfg.kernel_size, cfg.embed_dims, cfg.filters
        limit = np.sqrt(6.0 / (K * D + F))
        assert np.abs(m.params["conv_w"]).max() <= limit
        limit_wx = np.sqrt(6.0 / (F + cfg.lstm_units))
        assert np.abs(m.params["lstm_wx"]).max() <= limit_wx

    def test_biases(self):
        m = make_model()
        U = m.config.lstm_units
        np.testing.assert_array_equal(m.params["conv_b"], 0.0)
        np.testing.assert_array_equal(m.params["lstm_b"][:U], 0.0)
        np.testing.assert_array_equal(m.params["lstm_b"][U : 2 * U], 1.0)  # forget
        np.testing.assert_array_equal(m.params["lstm_b"][2 * U :], 0.0)
        np.testing.assert_array_equal(m.params["hid_b"], 0.0)
        np.testing.assert_array_equal(m.params["out_b"], 0.0)

    def test_embedding_shape_mismatch_rejected(self):
        cfg = tiny_config()
        with pytest.raises(ValueError):
            M.init_model(cfg, np.zeros((12, cfg.embed_dims + 1)))


class TestForward:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        m = make_model(seed=1)
        for _ in range(5):
            ids = rng.integers(0, 12, size=m.config.seq_len)
            got = M.predict_proba(m, ids)[0]
            want = oracle_forward(m, ids)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_probabilities_normalize(self):
        m = make_model()
        rng = np.random.default_rng(0)
        ids = rng.integers(0, 12, size=(7, m.config.seq_len))
        probs = M.predict_proba(m, ids)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert (probs >= 0).all()

    def test_batching_invariance(self):
        m = make_model(seed=2)
        rng = np.random.default_rng(5)
        ids = rng.integers(0, 12, size=(9, m.config.seq_len))
        whole = M.predict_proba(m, ids)
        batched = M.predict_proba(m, ids, batch_size=2)
        np.testing.assert_allclose(whole, batched, atol=1e-15)

    def test_forward_returns_prediction(self):
        m = make_model()
        pred = M.forward(m, np.zeros(m.config.seq_len, dtype=np.int64))
        assert pred.probabilities.shape == (3,)
        assert 0 <= pred.predicted < 3

    def test_bad_ids_rejected(self):
        m = make_model()
        with pytest.raises(ValueError):
            M.predict_proba(m, np.zeros((1, 5), dtype=np.int64))
        bad = np.zeros((1, m.config.seq_len), dtype=np.int64)
        bad[0, 0] = 99
        with pytest.raises(ValueError):
            M.predict_proba(m, bad)

    def test_dropout_requires_rng_and_scales(self):
        m = make_model(tiny_config(dropout_level=0.5))
        ids = np.zeros((4, m.config.seq_len), dtype=np.int64)
        with pytest.raises(ValueError):
            M._forward(m, ids, training=True)
        _, cache = M._forward(
            m, ids, training=True, rng=np.random.default_rng(0), want_cache=True
        )
        mask = cache["mask"]
        assert set(np.unique(mask)) <= {0.0, 2.0}  # inverted dropout at p=0.5
        # inference path ignores dropout entirely
        p1, _ = M._forward(m, ids, training=False)
        p2, _ = M._forward(m, ids, training=False)
        np.testing.assert_array_equal(p1, p2)


class TestGradients:
    def test_finite_difference_agreement(self):
        err = M.gradient_check(tiny_config(), seed=0)
        assert err < 1e-4, f"max relative gradient error {err}"

    def test_gradient_check_rejects_dropout(self):
        with pytest.raises(ValueError):
            M.gradient_check(tiny_config(dropout_level=0.5))

    def test_all_parameters_receive_gradient(self):
        m = make_model(seed=7)
        rng = np.random.default_rng(7)
        ids = rng.integers(2, 12, size=(4, m.config.seq_len))
        onehot = np.zeros((4, 3))
        onehot[np.arange(4), rng.integers(0, 3, 4)] = 1.0
        probs, cache = M._forward(m, ids, want_cache=True)
        grads = M._backward(m, cache, onehot)
        assert set(grads) == set(M.PARAM_NAMES)
        for name in M.PARAM_NAMES:
            assert grads[name].shape == m.params[name].shape
            assert np.abs(grads[name]).max() > 0, f"dead gradient: {name}"


def oracle_adamax(param, grads_seq, lr, b1, b2, eps):
    """Independent scalar-loop Adamax over a sequence of gradients."""
    param = param.copy()
    m = np.zeros_like(param)
    u = np.zeros_like(param)
    for t, g in enumerate(grads_seq, start=1):
        for idx in np.ndindex(param.shape):
            m[idx] = b1 * m[idx] + (1 - b1) * g[idx]
            u[idx] = max(b2 * u[idx], abs(g[idx]))
            step = lr * (m[idx] / (1 - b1 ** t)) / (u[idx] + eps)
            param[idx] -= step
    return param


class TestAdamax:
    def test_matches_scalar_oracle(self):
        m = make_model(seed=9)
        cfg = m.config
        rng = np.random.default_rng(3)
        grads_seq = [
            {n: rng.normal(size=m.params[n].shape) for n in M.PARAM_NAMES}
            for _ in range(3)
        ]
        want = {
            n: oracle_adamax(
                m.params[n], [g[n] for g in grads_seq],
                cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon,
            )
            for n in M.PARAM_NAMES
        }
        for g in grads_seq:
            M.adamax_update(m, g)
        for n in M.PARAM_NAMES:
            np.testing.assert_allclose(m.params[n], want[n], atol=1e-12)

    def test_zero_gradients_leave_parameters_unchanged(self):
        m = make_model(seed=1)
        before = m.snapshot_params()
        zero = {n: np.zeros_like(m.params[n]) for n in M.PARAM_NAMES}
        M.adamax_update(m, zero)
        for n in M.PARAM_NAMES:
            np.testing.assert_array_equal(m.params[n], before[n])

    def test_step_counter_advances(self):
        m = make_model()
        zero = {n: np.zeros_like(m.params[n]) for n in M.PARAM_NAMES}
        M.adamax_update(m, zero)
        M.adamax_update(m, zero)
        assert m.opt_t == 2


def synthetic_examples(cfg, vocab_size=12, projects_per_cat=6, funcs=6, seed=0):
    """Separable toy task: category c draws ids from its own id band."""
    rng = np.random.default_rng(seed)
    bands = np.array_split(np.arange(2, vocab_size), cfg.num_categories)
    examples = []
    for cat in range(cfg.num_categories):
        for pi in range(projects_per_cat):
            pname = f"cat{cat}proj{pi}"
            for _ in range(funcs):
                ids = rng.choice(bands[cat], size=cfg.seq_len, replace=True)
                examples.append(TrainExample(pname, ids.astype(np.int64), cat))
    return examples


class TestTrainStep:
    def test_loss_decreases_on_fixed_batch(self):
        cfg = tiny_config(num_categories=2, dropout_level=0.0)
        m = make_model(cfg, seed=5)
        ex = synthetic_examples(cfg, seed=5)
        X = np.stack([e.ids for e in ex[:16]])
        Y = np.zeros((16, 2))
        Y[np.arange(16), [e.label for e in ex[:16]]] = 1.0
        losses = [M.train_step(m, X, Y) for _ in range(30)]
        assert losses[-1] < losses[0]

    def test_non_finite_loss_aborts(self):
        m = make_model()
        m.params["out_b"][0] = np.inf  # poisons softmax with inf - inf
        ids = np.full((2, m.config.seq_len), 3, dtype=np.int64)
        Y = np.zeros((2, 3))
        Y[:, 0] = 1.0
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
            M.train_step(m, ids, Y)


class TestFit:
    def test_best_snapshot_selection(self):
        assert M.pick_best_epoch([0.4, 0.7, 0.6]) == 1
        assert M.pick_best_epoch([0.5, 0.7, 0.7]) == 1  # first max on ties
        assert M.pick_best_epoch([0.9]) == 0
        with pytest.raises(ValueError):
            M.pick_best_epoch([])

    def test_fit_learns_and_freezes_embedding(self):
        # toy-sized run: fewer steps than the real pipeline, so a higher
        # learning rate keeps the test fast while still exercising fit
        cfg = tiny_config(num_categories=2, epochs=10, batch_size=16,
                          learning_rate=0.02, dropout_level=0.25,
                          validation_fraction=0.2, seed=2)
        m = make_model(cfg, seed=2)
        emb_before = m.embedding.copy()
        examples = synthetic_examples(cfg, seed=2)
        best = M.fit(m, examples)
        np.testing.assert_array_equal(best.embedding, emb_before)  # frozen
        assert len(best.history["val_accuracy"]) == cfg.epochs
        assert best.history["best_epoch"] == int(np.argmax(best.history["val_accuracy"]))
        X = np.stack([e.ids for e in examples])
        y = np.array([e.label for e in examples])
        acc = float(np.mean(M.predict_proba(best, X).argmax(axis=1) == y))
        assert acc > 0.9

    def test_fit_is_deterministic(self):
        cfg = tiny_config(num_categories=2, epochs=2, batch_size=16, seed=4)
        ex = synthetic_examples(cfg, seed=4)
        m1 = M.fit(make_model(cfg, seed=4), ex)
        m2 = M.fit(make_model(cfg, seed=4), ex)
        for n in M.PARAM_NAMES:
            np.testing.assert_array_equal(m1.params[n], m2.params[n])
        assert m1.history == m2.history

    def test_validation_projects_withheld(self):
        cfg = tiny_config(num_categories=2, validation_fraction=0.25, seed=1)
        ex = synthetic_examples(cfg, projects_per_cat=4, seed=1)
        best = M.fit(make_model(cfg, seed=1), ex)
        # 8 projects, fraction 0.25 -> 2 withheld
        assert len(best.history["val_projects"]) == 2

    def test_missing_category_rejected(self):
        cfg = tiny_config(num_categories=3)
        ex = [e for e in synthetic_examples(cfg) if e.label != 2]
        with pytest.raises(ValueError, match="categories"):
            M.fit(make_model(cfg), ex)

    def test_single_project_cannot_fit(self):
        cfg = tiny_config(num_categories=2)
        ex = [
            TrainExample("only", np.full(cfg.seq_len, 2, dtype=np.int64), 0),
            TrainExample("only", np.full(cfg.seq_len, 3, dtype=np.int64), 1),
        ]
        with pytest.raises(ValueError, match="validation"):
            M.fit(make_model(cfg), ex)

    def test_category_vanishing_into_validation_rejected(self):
        cfg = tiny_config(num_categories=2, validation_fraction=0.5, seed=0)
        # category 1 lives in exactly one project; any seed that withholds it
        # must error.  With fraction 0.5 and 2 projects, 1 is withheld.
        ex = [
            TrainExample("pa", np.full(cfg.seq_len, 2, dtype=np.int64), 0),
            TrainExample("pb", np.full(cfg.seq_len, 7, dtype=np.int64), 1),
        ]
        with pytest.raises(ValueError):
            M.fit(make_model(cfg), ex)


class TestActivations:
    def test_shape_and_nonnegativity(self):
        m = make_model()
        ids = np.random.default_rng(0).integers(0, 12, size=m.config.seq_len)
        act = M.conv_activations(m, ids)
        assert act.shape == (m.config.conv_len, m.config.filters)
        assert (act >= 0).all()

    def test_matches_oracle_prefix(self):
        m = make_model(seed=3)
        ids = np.random.default_rng(1).integers(0, 12, size=m.config.seq_len)
        cfg, p = m.config, m.params
        X = m.embedding[ids]
        want = np.zeros((cfg.conv_len, cfg.filters))
        for t in range(cfg.conv_len):
            for f in range(cfg.filters):
                acc = p["conv_b"][f]
                for k in range(cfg.kernel_size):
                    acc += X[t + k] @ p["conv_w"][k, :, f]
                want[t, f] = max(acc, 0.0)
        np.testing.assert_allclose(M.conv_activations(m, ids), want, atol=1e-12)


class TestModelIO:
    def test_round_trip_predictions_identical(self, tmp_path):
        from repocat import tokens as T

        cfg = tiny_config()
        m = make_model(cfg, seed=8)
        vocab = T.build_vocabulary([[f"tok{i}" for i in range(10)]])
        path = tmp_path / "model.ckpt"
        M.save_model(path, m, vocab, ["games", "sound", "science"])
        loaded, vocab2, categories, meta = M.load_model(path)
        assert categories == ["games", "sound", "science"]
        assert vocab2 == vocab
        assert meta["kind"] == "nn"
        ids = np.random.default_rng(2).integers(0, 12, size=(5, cfg.seq_len))
        np.testing.assert_array_equal(
            M.predict_proba(m, ids), M.predict_proba(loaded, ids)
        )

    def test_vocab_hash_guard(self, tmp_path):
        from repocat import checkpoint as C
        from repocat import tokens as T

        cfg = tiny_config()
        m = make_model(cfg)
        vocab = T.build_vocabulary([[f"tok{i}" for i in range(10)]])
        path = tmp_path / "model.ckpt"
        M.save_model(path, m, vocab, ["a", "b", "c"])
        meta, arrays = C.load_checkpoint(path)
        meta["vocab_sha256"] = "0" * 64
        C.save_checkpoint(path, meta, arrays)
        with pytest.raises(ValueError, match="hash"):
            M.load_model(path)

    def test_wrong_kind_rejected(self, tmp_path):
        from repocat import checkpoint as C

        path = tmp_path / "lr.ckpt"
        C.save_checkpoint(path, {"kind": "lr"}, {"w": np.zeros((2, 2))})
        with pytest.raises(ValueError, match="kind"):
            M.load_model(path)
