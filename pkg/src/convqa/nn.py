"""Forward and backward passes for the sentence classifier.

Architecture: trainable embedding lookup -> full-width convolutions of
several window sizes -> ReLU -> max-over-time pooling -> concatenation
-> inverted dropout -> dense softmax, trained with cross-entropy plus
an L2 penalty on the convolution filters and dense weights (biases and
embeddings are not penalized; the penalty is lambda * sum(w^2), no 1/2
factor).

All tensors are float64. Gradients are derived by hand and verified
against central finite differences (see ``grad_check``). Embedding row
0 belongs to the padding token and is pinned to zero: it is zeroed at
initialization, its gradient is forced to zero, and the optimizer
re-zeroes it after every update.

Traces are batch-first: ``forward`` on a single example produces a
trace with batch size 1. ``backward`` returns the gradient of the mean
loss over the trace's batch, which for batch size 1 is the per-example
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .text import EncodedExample

LOG_FLOOR = 1e-12

TRAIN = "train"
EVAL = "eval"


class NNError(Exception):
    """Raised for invalid shapes, modes or configurations."""


@dataclass(frozen=True)
class HyperParams:
    """Training and architecture knobs.

    ``num_filters`` counts filters per window width, so widths (3, 4, 5)
    with 32 filters give 96 feature maps in total. ``dropout`` is the
    probability of zeroing a pooled feature at train time.
    """

    epochs: int = 1
    batch_size: int = 37
    num_filters: int = 32
    widths: tuple[int, ...] = (3, 4, 5)
    embedding_dim: int = 50
    l2_lambda: float = 0.1
    eval_every: int = 200
    dropout: float = 0.5
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(sorted(self.widths)))
        if len(set(self.widths)) != len(self.widths) or not self.widths:
            raise NNError(f"widths must be distinct and non-empty: {self.widths}")
        if min(self.widths) < 1:
            raise NNError(f"widths must be positive: {self.widths}")
        if self.epochs < 0:
            raise NNError(f"epochs must be >= 0: {self.epochs}")
        if self.batch_size < 1:
            raise NNError(f"batch_size must be >= 1: {self.batch_size}")
        if self.eval_every < 1:
            raise NNError(f"eval_every must be >= 1: {self.eval_every}")
        if self.num_filters < 1 or self.embedding_dim < 1:
            raise NNError("num_filters and embedding_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise NNError(f"dropout must be in [0, 1): {self.dropout}")
        if self.learning_rate <= 0:
            raise NNError(f"learning_rate must be positive: {self.learning_rate}")
        if self.l2_lambda < 0:
            raise NNError(f"l2_lambda must be >= 0: {self.l2_lambda}")

    @property
    def pooled_size(self) -> int:
        return self.num_filters * len(self.widths)


@dataclass
class ModelParams:
    """All trainable tensors.

    ``filters[h]`` has shape (F, h, d) and ``filter_biases[h]`` shape
    (F,) for each width h; ``dense_weights`` is (F * n_widths, C).
    """

    embedding: np.ndarray
    filters: dict[int, np.ndarray]
    filter_biases: dict[int, np.ndarray]
    dense_weights: np.ndarray
    dense_bias: np.ndarray

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def num_classes(self) -> int:
        return self.dense_weights.shape[1]

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(sorted(self.filters))

    def named_tensors(self):
        """(name, array) pairs in declared order: embedding, then per
        ascending width the filter tensor and bias, then the dense pair."""
        yield "embedding", self.embedding
        for h in self.widths:
            yield f"filters_w{h}", self.filters[h]
            yield f"filter_bias_w{h}", self.filter_biases[h]
        yield "dense_weights", self.dense_weights
        yield "dense_bias", self.dense_bias

    def copy(self) -> "ModelParams":
        return ModelParams(
            embedding=self.embedding.copy(),
            filters={h: f.copy() for h, f in self.filters.items()},
            filter_biases={h: b.copy() for h, b in self.filter_biases.items()},
            dense_weights=self.dense_weights.copy(),
            dense_bias=self.dense_bias.copy(),
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            embedding=np.zeros_like(self.embedding),
            filters={h: np.zeros_like(f) for h, f in self.filters.items()},
            filter_biases={h: np.zeros_like(b) for h, b in self.filter_biases.items()},
            dense_weights=np.zeros_like(self.dense_weights),
            dense_bias=np.zeros_like(self.dense_bias),
        )

    def validate_finite(self) -> None:
        for name, arr in self.named_tensors():
            if not np.all(np.isfinite(arr)):
                raise NNError(f"non-finite values in tensor {name}")


# Gradients carry one array per parameter tensor, same shapes.
Gradients = ModelParams


@dataclass
class ForwardTrace:
    """Cached activations of one forward pass (batch-first)."""

    mode: str
    token_ids: np.ndarray            # (B, L) int
    embedded: np.ndarray             # (B, L, d)
    conv_pre: dict[int, np.ndarray]  # width -> (B, L-h+1, F), pre-activation
    pool_argmax: dict[int, np.ndarray]  # width -> (B, F) int
    pooled: np.ndarray               # (B, P)
    dropout_mask: np.ndarray         # (B, P), includes 1/(1-p) scaling
    dropped: np.ndarray              # (B, P)
    logits: np.ndarray               # (B, C)
    probs: np.ndarray                # (B, C)
    labels: np.ndarray | None = None        # (B,) int
    per_example_loss: np.ndarray | None = None  # (B,)
    loss: float | None = None        # mean over batch
    log_clamped: np.ndarray | None = None    # (B,) bool, loss hit the log floor

    @property
    def batch_size(self) -> int:
        return self.token_ids.shape[0]


def init_params(
    hp: HyperParams, vocab_size: int, zero_dense: bool = False, num_classes: int = 2
) -> ModelParams:
    """Seeded initialization.

    Embedding rows 1..V-1 are uniform(-0.25, 0.25) and row 0 is zero.
    Filters and dense weights are Glorot-uniform, +-sqrt(6/(fan_in +
    fan_out)); biases start at zero. With ``zero_dense`` the dense layer
    starts all-zero, which makes every class equally likely on any input.
    """
    if vocab_size < 2:
        raise NNError(f"vocab_size must be >= 2, got {vocab_size}")
    rng = np.random.default_rng(hp.seed)
    embedding = rng.uniform(-0.25, 0.25, size=(vocab_size, hp.embedding_dim))
    embedding[0] = 0.0
    filters: dict[int, np.ndarray] = {}
    filter_biases: dict[int, np.ndarray] = {}
    for h in hp.widths:
        fan_in = h * hp.embedding_dim
        bound = np.sqrt(6.0 / (fan_in + hp.num_filters))
        filters[h] = rng.uniform(-bound, bound, size=(hp.num_filters, h, hp.embedding_dim))
        filter_biases[h] = np.zeros(hp.num_filters)
    pooled = hp.pooled_size
    if zero_dense:
        dense_weights = np.zeros((pooled, num_classes))
    else:
        bound = np.sqrt(6.0 / (pooled + num_classes))
        dense_weights = rng.uniform(-bound, bound, size=(pooled, num_classes))
    dense_bias = np.zeros(num_classes)
    return ModelParams(
        embedding=embedding,
        filters=filters,
        filter_biases=filter_biases,
        dense_weights=dense_weights,
        dense_bias=dense_bias,
    )


def embed(token_ids, params: ModelParams) -> np.ndarray:
    """Row i of the result is the embedding row of token_ids[i]."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size and ids.max() >= params.vocab_size:
        raise NNError(
            f"token id {ids.max()} out of range for vocab of {params.vocab_size}"
        )
    return params.embedding[ids]


def conv_forward(sentence_matrix, filt, bias: float) -> np.ndarray:
    """One filter over one sentence: valid convolution spanning the full
    embedding width, ReLU applied. Output length is L - h + 1."""
    sent = np.asarray(sentence_matrix, dtype=np.float64)
    filt = np.asarray(filt, dtype=np.float64)
    length, dim = sent.shape
    h, fdim = filt.shape
    if fdim != dim:
        raise NNError(f"filter dim {fdim} != embedding dim {dim}")
    if h > length:
        raise NNError(f"filter width {h} exceeds sentence length {length}")
    out = np.empty(length - h + 1)
    for t in range(length - h + 1):
        out[t] = np.sum(sent[t : t + h] * filt) + bias
    return np.maximum(out, 0.0)


def max_over_time(feature_map) -> float:
    """Largest entry of a feature map; the pooling step."""
    fm = np.asarray(feature_map)
    if fm.size == 0:
        raise NNError("max_over_time on an empty feature map")
    return float(fm.max())


def dropout_apply(vector, drop_prob: float, mode: str, rng=None):
    """Inverted dropout: at train time each entry is zeroed with
    probability ``drop_prob`` and survivors are scaled by 1/(1-p), so
    eval needs no rescaling. Returns (output, mask); the mask already
    carries the scale factor."""
    vec = np.asarray(vector, dtype=np.float64)
    if not 0.0 <= drop_prob < 1.0:
        raise NNError(f"drop_prob must be in [0, 1): {drop_prob}")
    if mode == EVAL or drop_prob == 0.0:
        mask = np.ones_like(vec)
        return vec.copy(), mask
    if mode != TRAIN:
        raise NNError(f"unknown mode {mode!r}")
    if rng is None:
        raise NNError("train-mode dropout needs an explicit rng")
    keep = rng.random(vec.shape) >= drop_prob
    mask = keep / (1.0 - drop_prob)
    return vec * mask, mask


def dense_softmax(pooled, params: ModelParams):
    """Affine map to class logits plus a max-shifted softmax.

    The shift makes exp() overflow-free and leaves the distribution
    unchanged; argmax of probs always equals argmax of logits.
    """
    pooled = np.asarray(pooled, dtype=np.float64)
    logits = pooled @ params.dense_weights + params.dense_bias
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=-1, keepdims=True)
    return logits, probs


def l2_penalty(params: ModelParams, l2_lambda: float) -> float:
    """lambda * sum of squared filter and dense weights. Biases and
    embeddings are excluded."""
    if l2_lambda == 0.0:
        return 0.0
    total = sum(float(np.sum(f * f)) for f in params.filters.values())
    total += float(np.sum(params.dense_weights * params.dense_weights))
    return l2_lambda * total


def loss(probs, label: int, params: ModelParams, l2_lambda: float) -> float:
    """Cross-entropy -ln(probs[label]) plus the L2 penalty. A zero
    probability is clamped at 1e-12 before the log."""
    p = float(np.asarray(probs)[label])
    return -np.log(max(p, LOG_FLOOR)) + l2_penalty(params, l2_lambda)


def _windows(embedded: np.ndarray, h: int) -> np.ndarray:
    """(B, L, d) -> (B, T, h*d) sliding windows, T = L - h + 1."""
    B, L, d = embedded.shape
    win = np.lib.stride_tricks.sliding_window_view(embedded, (h, d), axis=(1, 2))
    return win.reshape(B, L - h + 1, h * d)


def forward_batch(
    token_ids,
    labels,
    params: ModelParams,
    hp: HyperParams,
    mode: str = EVAL,
    rng=None,
) -> ForwardTrace:
    """Forward pass over a batch of encoded sentences.

    ``labels`` may be None for pure inference; the trace then carries no
    loss. Pooled features are concatenated width-ascending, filter index
    ascending within each width.
    """
    if mode not in (TRAIN, EVAL):
        raise NNError(f"unknown mode {mode!r}")
    ids = np.atleast_2d(np.asarray(token_ids, dtype=np.int64))
    B, L = ids.shape
    if min(hp.widths) > L:
        raise NNError(f"smallest width {min(hp.widths)} exceeds pad length {L}")
    if max(hp.widths) > L:
        raise NNError(f"width {max(hp.widths)} exceeds pad length {L}")
    embedded = params.embedding[ids]  # (B, L, d)

    F = hp.num_filters
    conv_pre: dict[int, np.ndarray] = {}
    pool_argmax: dict[int, np.ndarray] = {}
    pooled_parts = []
    for h in hp.widths:
        flat = params.filters[h].reshape(F, -1)
        win = _windows(embedded, h)  # (B, T, h*d)
        T = win.shape[1]
        pre = (win.reshape(B * T, -1) @ flat.T).reshape(B, T, F)
        pre += params.filter_biases[h]
        act = np.maximum(pre, 0.0)
        arg = act.argmax(axis=1)  # (B, F)
        conv_pre[h] = pre
        pool_argmax[h] = arg
        pooled_parts.append(np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :])
    pooled = np.concatenate(pooled_parts, axis=1)  # (B, P)

    dropped, mask = dropout_apply(pooled, hp.dropout, mode, rng)
    logits, probs = dense_softmax(dropped, params)

    trace = ForwardTrace(
        mode=mode,
        token_ids=ids,
        embedded=embedded,
        conv_pre=conv_pre,
        pool_argmax=pool_argmax,
        pooled=pooled,
        dropout_mask=mask,
        dropped=dropped,
        logits=logits,
        probs=probs,
    )
    if labels is not None:
        lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        picked = probs[np.arange(B), lab]
        clamped = picked < LOG_FLOOR
        ce = -np.log(np.maximum(picked, LOG_FLOOR))
        penalty = l2_penalty(params, hp.l2_lambda)
        trace.labels = lab
        trace.per_example_loss = ce + penalty
        trace.loss = float(trace.per_example_loss.mean())
        trace.log_clamped = clamped
    return trace


def forward(
    example: EncodedExample,
    params: ModelParams,
    hp: HyperParams,
    mode: str = EVAL,
    rng=None,
) -> ForwardTrace:
    """Single-example forward pass (a batch-of-one trace)."""
    return forward_batch(
        np.asarray([example.token_ids]),
        np.asarray([example.label_id]),
        params,
        hp,
        mode=mode,
        rng=rng,
    )


def backward(trace: ForwardTrace, params: ModelParams, hp: HyperParams) -> Gradients:
    """Gradient of the trace's mean loss with respect to every parameter.

    Softmax+cross-entropy gives probs - onehot at the logits; the dense
    layer backpropagates through the dropout mask; max pooling routes
    each pooled feature's gradient to its argmax time step; the filter
    gradient accumulates the embedded window at that step and the window
    gradient is scattered back into the embedding rows. The L2 term adds
    2*lambda*w to filter and dense weight gradients. Embedding row 0 is
    forced to zero.
    """
    if trace.mode != TRAIN:
        raise NNError("backward needs a train-mode trace")
    if trace.labels is None:
        raise NNError("backward needs a trace with labels")
    B, L = trace.token_ids.shape
    F = hp.num_filters
    lam = hp.l2_lambda

    probs, labels = trace.probs, trace.labels
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B

    dense_w_grad = trace.dropped.T @ dlogits
    if lam:
        dense_w_grad += 2.0 * lam * params.dense_weights
    dense_b_grad = dlogits.sum(axis=0)

    dpooled = (dlogits @ params.dense_weights.T) * trace.dropout_mask

    demb_rows = np.zeros_like(trace.embedded)  # (B, L, d)
    filt_grads: dict[int, np.ndarray] = {}
    bias_grads: dict[int, np.ndarray] = {}
    offset = 0
    for h in sorted(hp.widths):
        pre = trace.conv_pre[h]          # (B, T, F)
        arg = trace.pool_argmax[h]       # (B, F)
        T = pre.shape[1]
        dpool_slice = dpooled[:, offset : offset + F]
        offset += F
        dact = np.zeros_like(pre)
        np.put_along_axis(dact, arg[:, None, :], dpool_slice[:, None, :], axis=1)
        dpre = dact * (pre > 0.0)

        win = _windows(trace.embedded, h)            # (B, T, h*d)
        dpre_flat = dpre.reshape(B * T, F)
        fg = dpre_flat.T @ win.reshape(B * T, -1)    # (F, h*d)
        fg = fg.reshape(F, h, -1)
        if lam:
            fg += 2.0 * lam * params.filters[h]
        filt_grads[h] = fg
        bias_grads[h] = dpre.sum(axis=(0, 1))

        dwin = (dpre_flat @ params.filters[h].reshape(F, -1)).reshape(B, T, h, -1)
        for j in range(h):
            demb_rows[:, j : j + T, :] += dwin[:, :, j, :]

    emb_grad = np.zeros_like(params.embedding)
    np.add.at(emb_grad, trace.token_ids.reshape(-1), demb_rows.reshape(-1, emb_grad.shape[1]))
    emb_grad[0] = 0.0

    return Gradients(
        embedding=emb_grad,
        filters=filt_grads,
        filter_biases=bias_grads,
        dense_weights=dense_w_grad,
        dense_bias=dense_b_grad,
    )


def _trainable_entries(params: ModelParams):
    """(array, flat_index) pairs for every trainable scalar, skipping
    embedding row 0 which is pinned to the padding token."""
    d = params.embedding.shape[1]
    for i in range(d, params.embedding.size):
        yield params.embedding, i
    for h in sorted(params.filters):
        for arr in (params.filters[h], params.filter_biases[h]):
            for i in range(arr.size):
                yield arr, i
    for arr in (params.dense_weights, params.dense_bias):
        for i in range(arr.size):
            yield arr, i


def grad_check(
    params: ModelParams,
    example: EncodedExample,
    hp: HyperParams,
    eps: float = 1e-5,
) -> float:
    """Max relative disagreement between analytic and central
    finite-difference gradients over all trainable parameters.

    Relative error uses a 1e-8 floor in the denominator so that flat
    regions stay well-defined. Dropout must be disabled so that the two
    loss evaluations per parameter see the same network.
    """
    if hp.dropout != 0.0:
        raise NNError("grad_check requires dropout 0 for determinism")
    work = params.copy()
    analytic = backward(forward(example, work, hp, mode=TRAIN), work, hp)
    grads_flat = {id(a): g for (_, a), (_, g) in zip(
        work.named_tensors(), analytic.named_tensors()
    )}

    def loss_at() -> float:
        tr = forward(example, work, hp, mode=TRAIN)
        return tr.loss

    worst = 0.0
    for arr, idx in _trainable_entries(work):
        orig = arr.flat[idx]
        arr.flat[idx] = orig + eps
        up = loss_at()
        arr.flat[idx] = orig - eps
        down = loss_at()
        arr.flat[idx] = orig
        numeric = (up - down) / (2.0 * eps)
        ga = grads_flat[id(arr)].flat[idx]
        rel = abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
