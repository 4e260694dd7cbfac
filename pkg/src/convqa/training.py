"""Minibatch training: adaptive-moment optimizer, per-epoch reshuffled
batches, periodic validation, and the three published experiment
configurations.

Runs are deterministic: with the same data, hyperparameters and seed,
two runs produce bit-identical parameters and histories (everything is
float64 and every random stream is derived from the seed). The batch
gradient is the arithmetic mean over the batch, so the learning rate
does not depend on batch size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import nn
from .metrics import EvalReport, evaluate_model
from .nn import Gradients, HyperParams, ModelParams
from .text import SplitDataset

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Row-for-row mirror of the three published experiment parameter tables.
# Everything else (learning rate, optimizer constants) is ours.
EXPERIMENT_CONFIGS: dict[int, dict] = {
    1: dict(epochs=1, batch_size=37, num_filters=32, widths=(3, 4, 5),
            embedding_dim=50, l2_lambda=0.1, eval_every=200, dropout=0.5),
    2: dict(epochs=2, batch_size=37, num_filters=32, widths=(3, 4, 5),
            embedding_dim=50, l2_lambda=0.0, eval_every=400, dropout=0.5),
    3: dict(epochs=4, batch_size=37, num_filters=32, widths=(3, 4, 5),
            embedding_dim=50, l2_lambda=0.0, eval_every=400, dropout=0.5),
}


class TrainingError(Exception):
    """Raised when a run cannot start or diverges."""


@dataclass
class OptimizerState:
    """First/second moment accumulators plus the step counter."""

    m: ModelParams
    v: ModelParams
    step: int
    learning_rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, params: ModelParams, learning_rate: float) -> "OptimizerState":
        return cls(m=params.zeros_like(), v=params.zeros_like(),
                   step=0, learning_rate=learning_rate)


@dataclass
class TrainRun:
    """Outcome of one training run."""

    hp: HyperParams
    history: list[tuple[int, float, EvalReport]]
    final_params: ModelParams
    wall_time: float
    best_params: ModelParams | None = None
    best_step: int | None = None
    total_steps: int = 0

    def history_csv(self) -> str:
        """CSV with one row per validation point. Float fields use
        shortest round-trip repr so identical runs serialize identically."""
        lines = ["step,train_loss,val_accuracy,val_precision,val_recall,val_f1"]
        for step, train_loss, report in self.history:
            lines.append(
                f"{step},{train_loss!r},{report.accuracy!r},"
                f"{report.macro_precision!r},{report.macro_recall!r},"
                f"{report.macro_f1!r}"
            )
        return "\n".join(lines) + "\n"


def _check_finite_grads(grads: Gradients) -> None:
    for name, arr in grads.named_tensors():
        if not np.all(np.isfinite(arr)):
            raise TrainingError(f"non-finite gradient in tensor {name}")


def adam_step(
    params: ModelParams, grads: Gradients, state: OptimizerState
) -> tuple[ModelParams, OptimizerState]:
    """Standard bias-corrected adaptive-moment update, in place.

    Embedding row 0 (the padding vector) is re-zeroed afterwards so it
    never trains.
    """
    _check_finite_grads(grads)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for (_, p), (_, g), (_, m), (_, v) in zip(
        params.named_tensors(), grads.named_tensors(),
        state.m.named_tensors(), state.v.named_tensors(),
    ):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    params.embedding[0] = 0.0
    return params, state


def sgd_step(params: ModelParams, grads: Gradients, learning_rate: float) -> ModelParams:
    """Plain gradient descent step, in place. Used by descent probes."""
    _check_finite_grads(grads)
    for (_, p), (_, g) in zip(params.named_tensors(), grads.named_tensors()):
        p -= learning_rate * g
    params.embedding[0] = 0.0
    return params


def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def batch_iterator(train, batch_size: int, epochs: int, seed: int):
    """Yield lists of examples: each epoch reshuffles under (seed,
    epoch index) and the final short batch is kept."""
    if batch_size < 1:
        raise TrainingError(f"batch_size must be >= 1, got {batch_size}")
    train = list(train)
    if not train:
        raise TrainingError("empty training set")
    for epoch in range(epochs):
        order = _epoch_order(len(train), seed, epoch)
        for start in range(0, len(train), batch_size):
            yield [train[i] for i in order[start : start + batch_size]]


def _mean_gradient_strict(
    trace: nn.ForwardTrace, params: ModelParams, hp: HyperParams
) -> Gradients:
    """Mean of per-example gradients, accumulated in batch index order.

    Slices the batched trace into single-example traces so the dropout
    draw is identical to the fast path; only the reduction order differs.
    """
    B = trace.batch_size
    total: Gradients | None = None
    for i in range(B):
        sub = nn.ForwardTrace(
            mode=trace.mode,
            token_ids=trace.token_ids[i : i + 1],
            embedded=trace.embedded[i : i + 1],
            conv_pre={h: a[i : i + 1] for h, a in trace.conv_pre.items()},
            pool_argmax={h: a[i : i + 1] for h, a in trace.pool_argmax.items()},
            pooled=trace.pooled[i : i + 1],
            dropout_mask=trace.dropout_mask[i : i + 1],
            dropped=trace.dropped[i : i + 1],
            logits=trace.logits[i : i + 1],
            probs=trace.probs[i : i + 1],
            labels=trace.labels[i : i + 1],
        )
        g = nn.backward(sub, params, hp)
        if total is None:
            total = g
        else:
            for (_, acc), (_, cur) in zip(total.named_tensors(), g.named_tensors()):
                acc += cur
    assert total is not None
    for _, acc in total.named_tensors():
        acc /= B
    return total


def train(
    split: SplitDataset,
    hp: HyperParams,
    vocab_size: int | None = None,
    num_classes: int | None = None,
    initial_params: ModelParams | None = None,
    strict: bool = False,
    optimizer: str = "adam",
    progress: list | None = None,
) -> TrainRun:
    """Run the full training loop and return parameters plus history.

    Every ``hp.eval_every`` steps the model is evaluated on the
    validation split (eval mode, dropout off) and a history row is
    appended; an empty validation split simply records no history.
    ``strict`` switches the batch gradient to an explicit mean of
    per-example gradients in fixed order (slower, bit-reproducible
    against that order); the default fast path differs from it only by
    floating-point reassociation. ``progress``, if given, is a mutable
    list the caller may observe: it receives (step, total_steps) pairs.
    """
    started = time.perf_counter()
    if not split.train:
        raise TrainingError("empty training set")
    if initial_params is None:
        if vocab_size is None:
            vocab_size = max(max(e.token_ids) for e in split.train) + 1
        if num_classes is None:
            num_classes = max(e.label_id for e in split.train) + 1
        params = nn.init_params(hp, vocab_size, num_classes=num_classes)
    else:
        params = initial_params.copy()
    if optimizer not in ("adam", "sgd"):
        raise TrainingError(f"unknown optimizer {optimizer!r}")

    ids = np.asarray([e.token_ids for e in split.train], dtype=np.int64)
    labels = np.asarray([e.label_id for e in split.train], dtype=np.int64)
    n = len(split.train)
    steps_per_epoch = -(-n // hp.batch_size)
    total_steps = hp.epochs * steps_per_epoch

    state = OptimizerState.fresh(params, hp.learning_rate)
    dropout_rng = np.random.default_rng([hp.seed, 7919])
    history: list[tuple[int, float, EvalReport]] = []
    best_params: ModelParams | None = None
    best_step: int | None = None
    best_acc = -1.0
    step = 0
    for epoch in range(hp.epochs):
        order = _epoch_order(n, hp.seed, epoch)
        for start in range(0, n, hp.batch_size):
            batch_idx = order[start : start + hp.batch_size]
            trace = nn.forward_batch(
                ids[batch_idx], labels[batch_idx], params, hp,
                mode=nn.TRAIN, rng=dropout_rng,
            )
            if not np.isfinite(trace.loss):
                raise TrainingError(f"non-finite loss at step {step + 1}")
            if strict:
                grads = _mean_gradient_strict(trace, params, hp)
            else:
                grads = nn.backward(trace, params, hp)
            if optimizer == "adam":
                adam_step(params, grads, state)
            else:
                sgd_step(params, grads, hp.learning_rate)
            step += 1
            if progress is not None:
                progress.append((step, total_steps))
            if step % hp.eval_every == 0 and split.validation:
                report = evaluate_model(params, split.validation, hp)
                history.append((step, float(trace.loss), report))
                if report.accuracy > best_acc:
                    best_acc = report.accuracy
                    best_params = params.copy()
                    best_step = step
    return TrainRun(
        hp=hp,
        history=history,
        final_params=params,
        wall_time=time.perf_counter() - started,
        best_params=best_params,
        best_step=best_step,
        total_steps=step,
    )


def hyperparams_for_experiment(config_id: int, seed: int = 0,
                               learning_rate: float = 1e-3) -> HyperParams:
    """HyperParams matching one of the three published parameter tables."""
    if config_id not in EXPERIMENT_CONFIGS:
        raise TrainingError(f"unknown experiment config {config_id!r}")
    cfg = EXPERIMENT_CONFIGS[config_id]
    return HyperParams(seed=seed, learning_rate=learning_rate, **cfg)


_CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "num_filters": int,
    "embedding_dim": int,
    "eval_every": int,
    "seed": int,
    "l2_lambda": float,
    "dropout": float,
    "learning_rate": float,
    "widths": lambda s: tuple(int(x) for x in s.split(",") if x.strip()),
}


def load_config_file(path) -> dict:
    """Parse the ``key = value`` experiment config format.

    Blank lines and ``#`` comments are ignored; ``widths`` is a
    comma-separated integer list.
    """
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TrainingError(f"{path}:{line_no}: expected key = value")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise TrainingError(f"{path}:{line_no}: unknown key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](val.strip())
            except ValueError:
                raise TrainingError(
                    f"{path}:{line_no}: bad value for {key!r}: {val.strip()!r}"
                ) from None
    return values


def hyperparams_from_config(values: dict, seed: int | None = None) -> HyperParams:
    if seed is not None:
        values = {**values, "seed": seed}
    return HyperParams(**values)
