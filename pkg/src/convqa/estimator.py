"""Scikit-learn style wrappers around the pipeline and the network.

``SentenceEncoder`` is a transformer (raw strings -> padded id matrix)
and ``CnnTextClassifier`` a classifier over raw strings. Both follow
the usual conventions: constructor arguments are stored verbatim,
fitted state lives in trailing-underscore attributes, ``get_params`` /
``set_params`` / ``clone`` work, and predicting before fitting raises
``NotFittedError``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import text as tp
from . import training
from .metrics import predict_ids
from .nn import HyperParams


def check_texts(X) -> list[str]:
    """Validate that X is a non-empty sequence of strings."""
    if isinstance(X, str):
        raise TypeError("X must be a sequence of strings, not a single string")
    texts = list(X)
    if not texts:
        raise ValueError("X is empty")
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise TypeError(f"X[{i}] is {type(t).__name__}, expected str")
    return texts


def check_texts_and_labels(X, y) -> tuple[list[str], list]:
    texts = check_texts(X)
    labels = list(y)
    if len(labels) != len(texts):
        raise ValueError(f"X has {len(texts)} rows but y has {len(labels)}")
    return texts, labels


class SentenceEncoder(BaseEstimator, TransformerMixin):
    """Learn a vocabulary and pad length, then map sentences to fixed
    length integer id rows (0 = padding, 1 = unknown)."""

    def __init__(self, min_count: int = 1, max_vocab_size: int = 50_000,
                 max_sentence_length: int = 256):
        self.min_count = min_count
        self.max_vocab_size = max_vocab_size
        self.max_sentence_length = max_sentence_length

    def fit(self, X, y=None):
        texts = check_texts(X)
        token_lists = [tp.normalize_tokenize(t) for t in texts]
        self.vocab_ = tp.build_vocabulary(
            token_lists, min_count=self.min_count, max_size=self.max_vocab_size
        )
        self.pad_length_ = tp.compute_pad_length(
            token_lists, max_sentence_length=self.max_sentence_length
        )
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "vocab_"):
            raise NotFittedError("SentenceEncoder is not fitted yet")
        texts = check_texts(X)
        return np.asarray(
            [
                tp.encode_and_pad(tp.normalize_tokenize(t), self.vocab_, self.pad_length_)
                for t in texts
            ],
            dtype=np.int64,
        )


class CnnTextClassifier(BaseEstimator, ClassifierMixin):
    """Convolutional sentence classifier over raw strings.

    Filter widths, filters per width, embedding size, dropout, L2 and
    the optimizer settings mirror the training module's hyperparameters;
    ``validation_fraction`` > 0 holds out part of the data and records
    an evaluation history every ``eval_every`` steps in ``history_``.
    """

    def __init__(
        self,
        epochs: int = 1,
        batch_size: int = 37,
        num_filters: int = 32,
        filter_widths: tuple[int, ...] = (3, 4, 5),
        embedding_dim: int = 50,
        l2_lambda: float = 0.1,
        eval_every: int = 200,
        dropout: float = 0.5,
        learning_rate: float = 1e-3,
        random_state: int = 0,
        min_count: int = 1,
        max_vocab_size: int = 50_000,
        max_sentence_length: int = 256,
        validation_fraction: float = 0.0,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.num_filters = num_filters
        self.filter_widths = filter_widths
        self.embedding_dim = embedding_dim
        self.l2_lambda = l2_lambda
        self.eval_every = eval_every
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.random_state = random_state
        self.min_count = min_count
        self.max_vocab_size = max_vocab_size
        self.max_sentence_length = max_sentence_length
        self.validation_fraction = validation_fraction

    def _hyperparams(self) -> HyperParams:
        return HyperParams(
            epochs=self.epochs,
            batch_size=self.batch_size,
            num_filters=self.num_filters,
            widths=tuple(self.filter_widths),
            embedding_dim=self.embedding_dim,
            l2_lambda=self.l2_lambda,
            eval_every=self.eval_every,
            dropout=self.dropout,
            learning_rate=self.learning_rate,
            seed=self.random_state,
        )

    def fit(self, X, y):
        texts, labels = check_texts_and_labels(X, y)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )
        self.classes_ = np.unique(np.asarray(labels))
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        class_index = {c: i for i, c in enumerate(self.classes_)}
        label_ids = [class_index[l] for l in labels]

        n = len(texts)
        order = np.random.default_rng(self.random_state).permutation(n)
        n_val = int(n * self.validation_fraction)
        val_idx, train_idx = order[:n_val], order[n_val:]
        if train_idx.size == 0:
            raise ValueError("validation_fraction leaves no training data")

        self.encoder_ = SentenceEncoder(
            min_count=self.min_count,
            max_vocab_size=self.max_vocab_size,
            max_sentence_length=self.max_sentence_length,
        ).fit([texts[i] for i in train_idx])

        def encoded(idx):
            return [
                tp.EncodedExample(
                    token_ids=tp.encode_and_pad(
                        tp.normalize_tokenize(texts[i]),
                        self.encoder_.vocab_,
                        self.encoder_.pad_length_,
                    ),
                    label_id=label_ids[i],
                    raw_text=texts[i],
                )
                for i in idx
            ]

        split = tp.SplitDataset(
            train=encoded(train_idx),
            validation=encoded(val_idx),
            test=[],
            split_seed=self.random_state,
            ratios=(1.0 - self.validation_fraction, self.validation_fraction, 0.0),
        )
        run = training.train(
            split,
            self._hyperparams(),
            vocab_size=self.encoder_.vocab_.size,
            num_classes=len(self.classes_),
        )
        self.params_ = run.final_params
        self.history_ = run.history
        self.train_run_ = run
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("CnnTextClassifier is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        ids = self.encoder_.transform(X)
        from . import nn

        probs = np.empty((ids.shape[0], len(self.classes_)))
        for start in range(0, ids.shape[0], 256):
            chunk = ids[start : start + 256]
            trace = nn.forward_batch(chunk, None, self.params_, self._hyperparams(),
                                     mode=nn.EVAL)
            probs[start : start + chunk.shape[0]] = trace.probs
        return probs

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        ids = self.encoder_.transform(X)
        pred = predict_ids(self.params_, ids, self._hyperparams())
        return self.classes_[pred]
