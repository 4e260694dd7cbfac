"""Training loop: optimizer math, shuffling, history, configs."""

from pathlib import Path

import numpy as np
import pytest

import convqa
from convqa import (
    EXPERIMENT_CONFIGS,
    HyperParams,
    ModelParams,
    OptimizerState,
    TrainingError,
    adam_step,
    evaluate_model,
    init_params,
    sgd_step,
    train,
)
from convqa.training import (
    batch_iterator,
    hyperparams_for_experiment,
    hyperparams_from_config,
    load_config_file,
)
from tests.conftest import tiny_hyperparams

CONFIG_DIR = Path(convqa.__file__).parent / "configs"


def scalar_params(weight: float) -> ModelParams:
    """A one-weight-per-tensor model for optimizer step oracles."""
    return ModelParams(
        embedding=np.zeros((2, 1)),
        filters={1: np.zeros((1, 1, 1))},
        filter_biases={1: np.zeros(1)},
        dense_weights=np.array([[weight]]),
        dense_bias=np.zeros(1),
    )


class TestExperimentConfigs:
    def test_three_published_setups(self):
        assert EXPERIMENT_CONFIGS[1]["epochs"] == 1
        assert EXPERIMENT_CONFIGS[1]["l2_lambda"] == 0.1
        assert EXPERIMENT_CONFIGS[1]["eval_every"] == 200
        assert EXPERIMENT_CONFIGS[2]["epochs"] == 2
        assert EXPERIMENT_CONFIGS[2]["l2_lambda"] == 0.0
        assert EXPERIMENT_CONFIGS[2]["eval_every"] == 400
        assert EXPERIMENT_CONFIGS[3]["epochs"] == 4
        assert EXPERIMENT_CONFIGS[3]["l2_lambda"] == 0.0
        for cfg in EXPERIMENT_CONFIGS.values():
            assert cfg["batch_size"] == 37
            assert cfg["num_filters"] == 32
            assert cfg["widths"] == (3, 4, 5)
            assert cfg["embedding_dim"] == 50
            assert cfg["dropout"] == 0.5

    def test_hyperparams_for_experiment(self):
        hp = hyperparams_for_experiment(3, seed=9, learning_rate=0.005)
        assert hp.epochs == 4
        assert hp.seed == 9
        assert hp.learning_rate == 0.005

    def test_unknown_experiment_rejected(self):
        with pytest.raises(TrainingError):
            hyperparams_for_experiment(4)

    def test_packaged_config_files_match(self):
        for config_id, cfg in EXPERIMENT_CONFIGS.items():
            values = load_config_file(CONFIG_DIR / f"experiment{config_id}.cfg")
            hp_file = hyperparams_from_config(values)
            hp_code = hyperparams_for_experiment(config_id)
            assert hp_file == hp_code


class TestAdamStep:
    def test_first_step_matches_scalar_reference(self):
        params = scalar_params(1.0)
        grads = scalar_params(0.0)
        grads.dense_weights[0, 0] = 2.0
        state = OptimizerState.fresh(params, learning_rate=0.1)
        adam_step(params, grads, state)
        # Independent scalar evaluation of the bias-corrected update.
        g, lr, b1, b2, eps = 2.0, 0.1, state.beta1, state.beta2, state.eps
        m_hat = ((1 - b1) * g) / (1 - b1)
        v_hat = ((1 - b2) * g * g) / (1 - b2)
        expected = 1.0 - lr * m_hat / (np.sqrt(v_hat) + eps)
        np.testing.assert_allclose(params.dense_weights[0, 0], expected,
                                   rtol=1e-15)
        assert state.step == 1

    def test_two_steps_match_scalar_reference(self):
        params = scalar_params(0.5)
        state = OptimizerState.fresh(params, learning_rate=0.05)
        w, m, v = 0.5, 0.0, 0.0
        b1, b2, eps = state.beta1, state.beta2, state.eps
        for t, g in ((1, 1.5), (2, -0.25)):
            grads = scalar_params(0.0)
            grads.dense_weights[0, 0] = g
            adam_step(params, grads, state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w -= 0.05 * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        np.testing.assert_allclose(params.dense_weights[0, 0], w, rtol=1e-14)

    def test_padding_row_stays_zero(self):
        hp = tiny_hyperparams()
        params = init_params(hp, vocab_size=9, num_classes=2)
        grads = params.zeros_like()
        grads.embedding[:] = 1.0  # even a (wrong) pad gradient must not stick
        state = OptimizerState.fresh(params, learning_rate=0.5)
        adam_step(params, grads, state)
        np.testing.assert_array_equal(params.embedding[0], np.zeros(5))

    def test_non_finite_gradient_rejected(self):
        params = scalar_params(1.0)
        grads = scalar_params(np.inf)
        state = OptimizerState.fresh(params, learning_rate=0.1)
        with pytest.raises(TrainingError):
            adam_step(params, grads, state)


class TestSgdStep:
    def test_plain_descent_update(self):
        params = scalar_params(2.0)
        grads = scalar_params(0.0)
        grads.dense_weights[0, 0] = 3.0
        sgd_step(params, grads, learning_rate=0.1)
        np.testing.assert_allclose(params.dense_weights[0, 0], 1.7, rtol=1e-15)


class TestBatchIterator:
    def test_every_example_once_per_epoch(self):
        items = list(range(10))
        batches = list(batch_iterator(items, batch_size=3, epochs=2, seed=0))
        assert len(batches) == 8  # ceil(10/3) = 4 per epoch
        assert sorted(sum(batches[:4], [])) == items
        assert sorted(sum(batches[4:], [])) == items

    def test_final_short_batch_kept(self):
        batches = list(batch_iterator(list(range(7)), batch_size=3, epochs=1,
                                      seed=0))
        assert [len(b) for b in batches] == [3, 3, 1]

    def test_epochs_reshuffle_differently(self):
        batches = list(batch_iterator(list(range(30)), batch_size=30, epochs=2,
                                      seed=0))
        assert batches[0] != batches[1]

    def test_same_seed_reproduces_order(self):
        a = list(batch_iterator(list(range(20)), 4, 1, seed=3))
        b = list(batch_iterator(list(range(20)), 4, 1, seed=3))
        assert a == b

    def test_empty_train_rejected(self):
        with pytest.raises(TrainingError):
            list(batch_iterator([], 4, 1, seed=0))

    def test_bad_batch_size_rejected(self):
        with pytest.raises(TrainingError):
            list(batch_iterator([1], 0, 1, seed=0))


class TestTrain:
    def test_loss_descends_on_separable_data(self, toy_corpus):
        hp = tiny_hyperparams(epochs=6, batch_size=8, learning_rate=0.01,
                              eval_every=1000)
        initial = init_params(hp, toy_corpus.vocab.size,
                              num_classes=toy_corpus.labels.num_classes)
        before = evaluate_model(initial, toy_corpus.split.train, hp).accuracy
        run = train(toy_corpus.split, hp, initial_params=initial)
        after = evaluate_model(run.final_params, toy_corpus.split.train,
                               hp).accuracy
        assert after > before
        assert after >= 90.0
        assert run.total_steps == 54  # 6 epochs x ceil(72/8)

    def test_history_rows_at_eval_cadence(self, toy_corpus):
        hp = tiny_hyperparams(epochs=2, batch_size=8, eval_every=5)
        run = train(toy_corpus.split, hp, vocab_size=toy_corpus.vocab.size,
                    num_classes=toy_corpus.labels.num_classes)
        assert [step for step, _, _ in run.history] == [5, 10, 15]

    def test_best_params_track_best_validation_accuracy(self, toy_corpus):
        hp = tiny_hyperparams(epochs=3, batch_size=8, eval_every=5,
                              learning_rate=0.01)
        run = train(toy_corpus.split, hp, vocab_size=toy_corpus.vocab.size,
                    num_classes=toy_corpus.labels.num_classes)
        best_acc = max(report.accuracy for _, _, report in run.history)
        best_step = next(step for step, _, report in run.history
                         if report.accuracy == best_acc)
        assert run.best_step == best_step
        got = evaluate_model(run.best_params, toy_corpus.split.validation,
                             hp).accuracy
        np.testing.assert_allclose(got, best_acc, rtol=1e-12)

    def test_progress_receives_every_step(self, toy_corpus):
        hp = tiny_hyperparams(epochs=1, batch_size=8)
        seen: list[tuple[int, int]] = []
        train(toy_corpus.split, hp, vocab_size=toy_corpus.vocab.size,
              num_classes=toy_corpus.labels.num_classes, progress=seen)
        assert seen == [(i + 1, 9) for i in range(9)]

    def test_strict_and_fast_agree_to_reassociation(self, toy_corpus):
        hp = tiny_hyperparams(epochs=1, batch_size=8, learning_rate=0.01)
        initial = init_params(hp, toy_corpus.vocab.size,
                              num_classes=toy_corpus.labels.num_classes)
        fast = train(toy_corpus.split, hp, initial_params=initial.copy())
        strict = train(toy_corpus.split, hp, initial_params=initial.copy(),
                       strict=True)
        for (name, a), (_, b) in zip(
            fast.final_params.named_tensors(),
            strict.final_params.named_tensors(),
        ):
            np.testing.assert_allclose(a, b, atol=1e-9, err_msg=name)

    def test_empty_training_set_rejected(self, toy_corpus):
        from convqa import SplitDataset

        empty = SplitDataset(train=[], validation=[], test=[],
                             split_seed=0, ratios=(0.8, 0.1, 0.1))
        with pytest.raises(TrainingError):
            train(empty, tiny_hyperparams())

    def test_unknown_optimizer_rejected(self, toy_corpus):
        with pytest.raises(TrainingError):
            train(toy_corpus.split, tiny_hyperparams(),
                  vocab_size=toy_corpus.vocab.size,
                  num_classes=toy_corpus.labels.num_classes,
                  optimizer="rmsprop")

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_non_finite_loss_reported(self, toy_corpus):
        hp = tiny_hyperparams(l2_lambda=0.1)
        initial = init_params(hp, toy_corpus.vocab.size,
                              num_classes=toy_corpus.labels.num_classes)
        initial.dense_weights[:] = 1e200  # L2 penalty overflows to inf
        with pytest.raises(TrainingError, match="non-finite loss"):
            train(toy_corpus.split, hp, initial_params=initial)


class TestHistoryCsv:
    def test_header_and_full_precision_floats(self, toy_corpus):
        hp = tiny_hyperparams(epochs=1, batch_size=8, eval_every=4)
        run = train(toy_corpus.split, hp, vocab_size=toy_corpus.vocab.size,
                    num_classes=toy_corpus.labels.num_classes)
        text = run.history_csv()
        lines = text.strip().split("\n")
        assert lines[0] == ("step,train_loss,val_accuracy,val_precision,"
                            "val_recall,val_f1")
        assert len(lines) == 1 + len(run.history)
        step, train_loss, *rest = lines[1].split(",")
        assert int(step) == run.history[0][0]
        # repr round-trips exactly
        assert float(train_loss) == run.history[0][1]


class TestConfigFiles:
    def test_parse_values_and_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# a comment\n"
            "epochs = 2\n"
            "widths = 2,3\n"
            "dropout = 0.25  # trailing comment\n"
            "\n",
            encoding="utf-8",
        )
        values = load_config_file(path)
        assert values == {"epochs": 2, "widths": (2, 3), "dropout": 0.25}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("momentum = 0.9\n", encoding="utf-8")
        with pytest.raises(TrainingError, match="unknown key"):
            load_config_file(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("epochs = soon\n", encoding="utf-8")
        with pytest.raises(TrainingError, match="bad value"):
            load_config_file(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("epochs\n", encoding="utf-8")
        with pytest.raises(TrainingError, match="expected key = value"):
            load_config_file(path)

    def test_seed_override(self):
        hp = hyperparams_from_config({"epochs": 2}, seed=42)
        assert isinstance(hp, HyperParams)
        assert hp.seed == 42 and hp.epochs == 2
