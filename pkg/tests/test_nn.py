"""Network forward/backward: layer-by-layer oracles and gradient checks."""

import numpy as np
import pytest

from convqa import (
    EVAL,
    TRAIN,
    EncodedExample,
    HyperParams,
    ModelParams,
    NNError,
    backward,
    forward,
    forward_batch,
    grad_check,
    init_params,
)
from convqa.nn import (
    LOG_FLOOR,
    conv_forward,
    dense_softmax,
    dropout_apply,
    embed,
    l2_penalty,
    loss,
    max_over_time,
)
from tests.conftest import tiny_hyperparams


def random_example(rng, vocab_size: int, length: int, num_classes: int):
    ids = tuple(int(i) for i in rng.integers(0, vocab_size, size=length))
    label = int(rng.integers(0, num_classes))
    return EncodedExample(token_ids=ids, label_id=label, raw_text="")


class TestHyperParams:
    def test_defaults_match_single_epoch_setup(self):
        hp = HyperParams()
        assert hp.epochs == 1
        assert hp.batch_size == 37
        assert hp.num_filters == 32
        assert hp.widths == (3, 4, 5)
        assert hp.embedding_dim == 50
        assert hp.l2_lambda == 0.1
        assert hp.eval_every == 200
        assert hp.dropout == 0.5

    def test_pooled_size(self):
        assert HyperParams().pooled_size == 96
        assert tiny_hyperparams().pooled_size == 4

    def test_widths_sorted(self):
        assert HyperParams(widths=(5, 3, 4)).widths == (3, 4, 5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"widths": ()},
            {"widths": (3, 3)},
            {"widths": (0, 2)},
            {"dropout": 1.0},
            {"dropout": -0.1},
            {"batch_size": 0},
            {"eval_every": 0},
            {"learning_rate": 0.0},
            {"l2_lambda": -1.0},
            {"num_filters": 0},
            {"embedding_dim": 0},
        ],
    )
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(NNError):
            HyperParams(**kwargs)


class TestInitParams:
    def test_shapes(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=12, num_classes=3)
        assert params.embedding.shape == (12, 5)
        assert params.filters[2].shape == (2, 2, 5)
        assert params.filters[3].shape == (2, 3, 5)
        assert params.filter_biases[2].shape == (2,)
        assert params.dense_weights.shape == (4, 3)
        assert params.dense_bias.shape == (3,)

    def test_padding_row_is_zero(self):
        params = init_params(tiny_hyperparams(), vocab_size=9)
        np.testing.assert_array_equal(params.embedding[0], np.zeros(5))

    def test_embedding_bounds(self):
        params = init_params(tiny_hyperparams(), vocab_size=50)
        assert np.all(np.abs(params.embedding) <= 0.25)
        assert np.any(params.embedding[1:] != 0.0)

    def test_biases_start_at_zero(self):
        params = init_params(tiny_hyperparams(), vocab_size=9, num_classes=4)
        np.testing.assert_array_equal(params.dense_bias, np.zeros(4))
        for h in (2, 3):
            np.testing.assert_array_equal(params.filter_biases[h], np.zeros(2))

    def test_zero_dense_makes_classes_uniform(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9, zero_dense=True, num_classes=7)
        ex = EncodedExample(token_ids=(2, 3, 4, 5, 6), label_id=0, raw_text="")
        trace = forward(ex, params, hp)
        np.testing.assert_allclose(trace.probs[0], np.full(7, 1.0 / 7), rtol=1e-15)

    def test_deterministic_per_seed(self):
        a = init_params(tiny_hyperparams(seed=5), vocab_size=9)
        b = init_params(tiny_hyperparams(seed=5), vocab_size=9)
        c = init_params(tiny_hyperparams(seed=6), vocab_size=9)
        np.testing.assert_array_equal(a.embedding, b.embedding)
        assert not np.array_equal(a.embedding, c.embedding)

    def test_tiny_vocab_rejected(self):
        with pytest.raises(NNError):
            init_params(tiny_hyperparams(), vocab_size=1)


class TestEmbed:
    def test_lookup_identity(self):
        params = init_params(tiny_hyperparams(), vocab_size=6)
        out = embed([3, 0, 5], params)
        np.testing.assert_array_equal(out[0], params.embedding[3])
        np.testing.assert_array_equal(out[1], np.zeros(5))
        np.testing.assert_array_equal(out[2], params.embedding[5])


class TestConvForward:
    def test_matches_explicit_window_sums(self):
        rng = np.random.default_rng(0)
        sent = rng.normal(size=(6, 4))
        filt = rng.normal(size=(3, 4))
        bias = 0.7
        out = conv_forward(sent, filt, bias)
        assert out.shape == (4,)
        for t in range(4):
            expected = max(0.0, float(np.sum(sent[t : t + 3] * filt)) + bias)
            np.testing.assert_allclose(out[t], expected, atol=1e-12)

    def test_window_wider_than_sentence_rejected(self):
        with pytest.raises(NNError):
            conv_forward(np.zeros((2, 3)), np.zeros((4, 3)), 0.0)


class TestMaxOverTime:
    def test_picks_largest(self):
        assert max_over_time(np.array([-3.0, 2.5, 1.0])) == 2.5

    def test_empty_rejected(self):
        with pytest.raises(NNError):
            max_over_time(np.array([]))


class TestDropout:
    def test_eval_mode_is_identity(self):
        vec = np.arange(6, dtype=np.float64)
        out, mask = dropout_apply(vec, 0.5, EVAL)
        np.testing.assert_array_equal(out, vec)
        np.testing.assert_array_equal(mask, np.ones(6))

    def test_zero_probability_is_identity(self):
        vec = np.arange(6, dtype=np.float64)
        out, _ = dropout_apply(vec, 0.0, TRAIN)
        np.testing.assert_array_equal(out, vec)

    def test_train_mode_scales_survivors(self):
        rng = np.random.default_rng(1)
        vec = np.ones(10_000)
        out, mask = dropout_apply(vec, 0.25, TRAIN, rng)
        survivors = out[out != 0.0]
        np.testing.assert_allclose(survivors, 1.0 / 0.75)
        drop_rate = float(np.mean(out == 0.0))
        assert 0.2 < drop_rate < 0.3
        np.testing.assert_array_equal(out, vec * mask)

    def test_train_mode_without_rng_rejected(self):
        with pytest.raises(NNError):
            dropout_apply(np.ones(3), 0.5, TRAIN)

    def test_invalid_probability_rejected(self):
        with pytest.raises(NNError):
            dropout_apply(np.ones(3), 1.0, TRAIN, np.random.default_rng(0))


class TestDenseSoftmax:
    def test_probs_normalized(self):
        params = init_params(tiny_hyperparams(), vocab_size=9, num_classes=3)
        rng = np.random.default_rng(2)
        pooled = rng.normal(size=(8, 4))
        _, probs = dense_softmax(pooled, params)
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(8), rtol=1e-12)
        assert np.all(probs > 0)

    def test_shift_invariance_under_large_logits(self):
        params = init_params(tiny_hyperparams(), vocab_size=9, num_classes=3)
        params.dense_bias[:] = [1e4, 1e4 + 1.0, 1e4 - 2.0]
        _, probs = dense_softmax(np.zeros((1, 4)), params)
        assert np.all(np.isfinite(probs))
        ref = np.exp([0.0, 1.0, -2.0])
        np.testing.assert_allclose(probs[0], ref / ref.sum(), rtol=1e-12)


class TestLoss:
    def test_negative_log_of_true_class(self):
        params = init_params(tiny_hyperparams(), vocab_size=9)
        val = loss(np.array([0.25, 0.75]), 1, params, 0.0)
        np.testing.assert_allclose(val, -np.log(0.75), rtol=1e-15)

    def test_zero_probability_clamped(self):
        params = init_params(tiny_hyperparams(), vocab_size=9)
        val = loss(np.array([1.0, 0.0]), 1, params, 0.0)
        np.testing.assert_allclose(val, -np.log(LOG_FLOOR), rtol=1e-15)

    def test_l2_covers_weights_only(self):
        params = init_params(tiny_hyperparams(), vocab_size=9, num_classes=3)
        before = l2_penalty(params, 0.5)
        params.embedding[2] += 10.0
        params.dense_bias += 10.0
        params.filter_biases[2] += 10.0
        assert l2_penalty(params, 0.5) == before
        params.dense_weights[0, 0] += 1.0
        assert l2_penalty(params, 0.5) != before

    def test_l2_value(self):
        params = init_params(tiny_hyperparams(), vocab_size=9, num_classes=3)
        expected = 0.5 * (
            sum(float(np.sum(f**2)) for f in params.filters.values())
            + float(np.sum(params.dense_weights**2))
        )
        np.testing.assert_allclose(l2_penalty(params, 0.5), expected, rtol=1e-15)


class TestForwardBatch:
    def test_single_example_equals_batch_row(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=15, num_classes=3)
        rng = np.random.default_rng(3)
        examples = [random_example(rng, 15, 7, 3) for _ in range(4)]
        batch = forward_batch(
            np.asarray([e.token_ids for e in examples]),
            np.asarray([e.label_id for e in examples]),
            params, hp,
        )
        for i, ex in enumerate(examples):
            single = forward(ex, params, hp)
            np.testing.assert_allclose(single.probs[0], batch.probs[i], rtol=1e-12)
            np.testing.assert_allclose(
                single.per_example_loss[0], batch.per_example_loss[i], rtol=1e-12
            )

    def test_mean_loss_over_batch(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=15, num_classes=3)
        rng = np.random.default_rng(4)
        examples = [random_example(rng, 15, 7, 3) for _ in range(5)]
        batch = forward_batch(
            np.asarray([e.token_ids for e in examples]),
            np.asarray([e.label_id for e in examples]),
            params, hp,
        )
        np.testing.assert_allclose(
            batch.loss, float(batch.per_example_loss.mean()), rtol=1e-15
        )

    def test_pooled_concatenates_widths_ascending(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9, num_classes=2)
        for h in (2, 3):
            params.filters[h][:] = 0.0
        params.filter_biases[2][:] = 1.0
        params.filter_biases[3][:] = 2.0
        trace = forward_batch(np.array([[2, 3, 4, 5, 6]]), None, params, hp)
        np.testing.assert_allclose(trace.pooled[0], [1.0, 1.0, 2.0, 2.0])

    def test_labels_optional(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9)
        trace = forward_batch(np.array([[2, 3, 4, 5, 6]]), None, params, hp)
        assert trace.loss is None and trace.labels is None

    def test_width_longer_than_sentence_rejected(self):
        hp = tiny_hyperparams(widths=(6,))
        params = init_params(hp, vocab_size=9)
        with pytest.raises(NNError):
            forward_batch(np.array([[2, 3, 4, 5, 6]]), None, params, hp)

    def test_unknown_mode_rejected(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9)
        with pytest.raises(NNError):
            forward_batch(np.array([[2, 3, 4, 5, 6]]), None, params, hp,
                          mode="sideways")

    def test_l2_included_in_loss(self):
        hp = tiny_hyperparams(l2_lambda=0.3)
        params = init_params(hp, vocab_size=9, num_classes=2)
        ex = EncodedExample(token_ids=(2, 3, 4, 5, 6), label_id=0, raw_text="")
        with_l2 = forward(ex, params, hp).loss
        without = forward(ex, params, tiny_hyperparams(l2_lambda=0.0)).loss
        np.testing.assert_allclose(with_l2 - without, l2_penalty(params, 0.3),
                                   rtol=1e-12)


class TestBackward:
    def test_matches_finite_differences(self):
        hp = tiny_hyperparams(l2_lambda=0.05)
        params = init_params(hp, vocab_size=20, num_classes=3)
        rng = np.random.default_rng(0)
        ex = random_example(rng, 20, 7, 3)
        assert grad_check(params, ex, hp) < 1e-4

    def test_batch_gradient_is_mean_of_per_example(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=15, num_classes=3)
        rng = np.random.default_rng(5)
        examples = [random_example(rng, 15, 7, 3) for _ in range(3)]
        batch_trace = forward_batch(
            np.asarray([e.token_ids for e in examples]),
            np.asarray([e.label_id for e in examples]),
            params, hp, mode=TRAIN,
        )
        batch_grads = backward(batch_trace, params, hp)
        acc = params.zeros_like()
        for ex in examples:
            g = backward(forward(ex, params, hp, mode=TRAIN), params, hp)
            for (_, a), (_, b) in zip(acc.named_tensors(), g.named_tensors()):
                a += b / len(examples)
        for (name, got), (_, want) in zip(
            batch_grads.named_tensors(), acc.named_tensors()
        ):
            np.testing.assert_allclose(got, want, atol=1e-12, err_msg=name)

    def test_padding_row_gradient_is_zero(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9, num_classes=2)
        ex = EncodedExample(token_ids=(2, 3, 0, 0, 0), label_id=1, raw_text="")
        grads = backward(forward(ex, params, hp, mode=TRAIN), params, hp)
        np.testing.assert_array_equal(grads.embedding[0], np.zeros(5))

    def test_eval_trace_rejected(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9)
        ex = EncodedExample(token_ids=(2, 3, 4, 5, 6), label_id=0, raw_text="")
        with pytest.raises(NNError):
            backward(forward(ex, params, hp, mode=EVAL), params, hp)

    def test_unlabeled_trace_rejected(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9)
        trace = forward_batch(np.array([[2, 3, 4, 5, 6]]), None, params, hp,
                              mode=TRAIN)
        with pytest.raises(NNError):
            backward(trace, params, hp)

    def test_dropout_gradients_flow_through_mask(self):
        hp = tiny_hyperparams(dropout=0.5)
        params = init_params(hp, vocab_size=15, num_classes=3)
        ex = EncodedExample(token_ids=(2, 3, 4, 5, 6), label_id=1, raw_text="")
        trace = forward(ex, params, hp, mode=TRAIN,
                        rng=np.random.default_rng(11))
        grads = backward(trace, params, hp)
        dropped_cols = np.nonzero(trace.dropout_mask[0] == 0.0)[0]
        assert dropped_cols.size > 0, "seed produced no dropped feature"
        # A feature that was dropped cannot influence the loss, so the
        # dense rows feeding from it get exactly zero gradient.
        for col in dropped_cols:
            np.testing.assert_array_equal(grads.dense_weights[col],
                                          np.zeros(3))


class TestGradCheck:
    def test_requires_dropout_off(self):
        hp = tiny_hyperparams(dropout=0.5)
        params = init_params(hp, vocab_size=9)
        ex = EncodedExample(token_ids=(2, 3, 4, 5, 6), label_id=0, raw_text="")
        with pytest.raises(NNError):
            grad_check(params, ex, hp)

    def test_leaves_parameters_untouched(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9, num_classes=2)
        before = params.copy()
        ex = EncodedExample(token_ids=(2, 3, 4, 5, 6), label_id=0, raw_text="")
        grad_check(params, ex, hp)
        for (name, a), (_, b) in zip(params.named_tensors(),
                                     before.named_tensors()):
            np.testing.assert_array_equal(a, b, err_msg=name)
