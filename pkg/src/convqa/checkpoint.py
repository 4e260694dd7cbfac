"""Model checkpoint container.

A single binary file: magic + format version, a JSON metadata block
(hyperparameters, label set, vocabulary hash, pad length), then every
parameter tensor in declared order with explicit shapes, little-endian
float64. Saving and reloading is bit-exact. Loading for inference
verifies that the vocabulary file on disk hashes to the value recorded
at save time, so a checkpoint can never silently run against the wrong
vocabulary.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct

import numpy as np

from .nn import HyperParams, ModelParams
from .text import LabelSet, Vocabulary

MAGIC = b"CQACKPT\x00"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclasses.dataclass
class CheckpointMeta:
    hyperparams: HyperParams
    labels: LabelSet
    vocab_sha256: str
    pad_length: int
    # Split ratios the training run used, so a later evaluate can
    # reconstruct the identical train/validation/test partition.
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def to_json(self) -> str:
        payload = {
            "hyperparams": dataclasses.asdict(self.hyperparams),
            "labels": self.labels.label_to_id,
            "vocab_sha256": self.vocab_sha256,
            "pad_length": self.pad_length,
            "ratios": list(self.ratios),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CheckpointMeta":
        payload = json.loads(text)
        hp_dict = dict(payload["hyperparams"])
        hp_dict["widths"] = tuple(hp_dict["widths"])
        return cls(
            hyperparams=HyperParams(**hp_dict),
            labels=LabelSet(label_to_id=dict(payload["labels"])),
            vocab_sha256=payload["vocab_sha256"],
            pad_length=int(payload["pad_length"]),
            ratios=tuple(float(r) for r in payload.get("ratios", (0.8, 0.1, 0.1))),
        )


def vocab_sha256(vocab: Vocabulary) -> str:
    """Hash of the vocabulary's canonical on-disk serialization."""
    buf = io.StringIO()
    for i, tok in enumerate(vocab.index_to_token):
        buf.write(f"{i}\t{tok}\n")
    return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f8")
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<H", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<B", data.ndim))
    for dim in data.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(data.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = tuple(
        struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(ndim)
    )
    count = int(np.prod(shape)) if shape else 1
    raw = _read_exact(fh, count * 8)
    arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return name, arr


def save_checkpoint(params: ModelParams, meta: CheckpointMeta, path) -> None:
    tensors = list(params.named_tensors())
    meta_b = meta.to_json().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta_b)))
        fh.write(meta_b)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            _write_tensor(fh, name, arr)


def load_checkpoint(path) -> tuple[ModelParams, CheckpointMeta]:
    """Read a checkpoint back; raises CheckpointError on a missing file,
    bad magic, unsupported version or truncation, never returning a
    partial model."""
    try:
        fh = open(path, "rb")
    except FileNotFoundError:
        raise CheckpointError(f"no such checkpoint: {path}") from None
    with fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        meta = CheckpointMeta.from_json(_read_exact(fh, meta_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors = dict(_read_tensor(fh) for _ in range(n_tensors))

    hp = meta.hyperparams
    try:
        params = ModelParams(
            embedding=tensors.pop("embedding"),
            filters={h: tensors.pop(f"filters_w{h}") for h in hp.widths},
            filter_biases={h: tensors.pop(f"filter_bias_w{h}") for h in hp.widths},
            dense_weights=tensors.pop("dense_weights"),
            dense_bias=tensors.pop("dense_bias"),
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing tensor {exc}") from None
    if tensors:
        raise CheckpointError(f"checkpoint has unexpected tensors: {sorted(tensors)}")
    return params, meta


def load_for_inference(path, vocab_path) -> tuple[ModelParams, CheckpointMeta, Vocabulary]:
    """Load a checkpoint together with its vocabulary, enforcing the
    recorded vocabulary hash."""
    params, meta = load_checkpoint(path)
    vocab = Vocabulary.load(vocab_path)
    actual = vocab_sha256(vocab)
    if actual != meta.vocab_sha256:
        raise CheckpointError(
            f"vocabulary hash mismatch: checkpoint expects {meta.vocab_sha256[:12]}..., "
            f"{vocab_path} hashes to {actual[:12]}..."
        )
    return params, meta, vocab
