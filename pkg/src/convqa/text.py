"""Text ingestion and encoding: CSV loading, tokenization, vocabulary,
fixed-length index encoding and deterministic dataset splitting.

Index 0 is always the padding token ``<pad>`` and index 1 the unknown
token ``<unk>``; both exist even for an empty corpus.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

# Characters allowed at the start/end of a token after lowercasing.
# Interior characters are kept as-is ("$25.00" survives intact).
_EDGE_STRIP = re.compile(r"^[^a-z0-9$%]+|[^a-z0-9$%]+$")

DEFAULT_TEXT_COLUMN = "Consumer complaint narrative"
DEFAULT_LABEL_COLUMN = "Product"

DEFAULT_MIN_COUNT = 1
DEFAULT_MAX_VOCAB = 50_000
DEFAULT_MAX_SENTENCE_LENGTH = 256
# Pad length never drops below this, so every filter width up to 5 fits.
MIN_PAD_LENGTH = 5


class TextPipelineError(Exception):
    """Raised for unusable inputs (missing files/columns, bad splits)."""


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional token/index map with reserved pad and unk entries."""

    token_to_index: dict[str, int]
    index_to_token: list[str]

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_ID)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def save(self, path) -> None:
        """Write one ``index<TAB>token`` line per entry, indices ascending."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, tok in enumerate(self.index_to_token):
                fh.write(f"{i}\t{tok}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        index_to_token: list[str] = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx_str, _, tok = line.partition("\t")
                if int(idx_str) != line_no:
                    raise TextPipelineError(
                        f"vocabulary file {path}: index {idx_str} at line {line_no}"
                    )
                index_to_token.append(tok)
        if index_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise TextPipelineError(
                f"vocabulary file {path}: reserved entries missing"
            )
        return cls(
            token_to_index={t: i for i, t in enumerate(index_to_token)},
            index_to_token=index_to_token,
        )


@dataclass(frozen=True)
class LabelSet:
    """Dense category-name -> id map."""

    label_to_id: dict[str, int]

    @property
    def num_classes(self) -> int:
        return len(self.label_to_id)

    @property
    def names(self) -> list[str]:
        ordered = sorted(self.label_to_id.items(), key=lambda kv: kv[1])
        return [name for name, _ in ordered]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, name in enumerate(self.names):
                fh.write(f"{i}\t{name}\n")

    @classmethod
    def load(cls, path) -> "LabelSet":
        label_to_id: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                idx_str, _, name = line.partition("\t")
                label_to_id[name] = int(idx_str)
        return cls(label_to_id=label_to_id)

    @classmethod
    def from_labels(cls, labels) -> "LabelSet":
        """Build ids 0..C-1 in order of first appearance; C must be >= 2."""
        label_to_id: dict[str, int] = {}
        for lab in labels:
            if lab not in label_to_id:
                label_to_id[lab] = len(label_to_id)
        if len(label_to_id) < 2:
            raise TextPipelineError(
                f"need at least 2 categories, got {len(label_to_id)}"
            )
        return cls(label_to_id=label_to_id)


@dataclass(frozen=True)
class EncodedExample:
    """One sentence as a fixed-length id sequence plus its label."""

    token_ids: tuple[int, ...]
    label_id: int
    raw_text: str


@dataclass(frozen=True)
class SplitDataset:
    train: list[EncodedExample]
    validation: list[EncodedExample]
    test: list[EncodedExample]
    split_seed: int
    ratios: tuple[float, float, float]

    def __len__(self) -> int:
        return len(self.train) + len(self.validation) + len(self.test)


def load_labeled_csv(
    path,
    text_column: str = DEFAULT_TEXT_COLUMN,
    label_column: str = DEFAULT_LABEL_COLUMN,
) -> tuple[list[tuple[str, str]], int]:
    """Read (text, label) pairs from a CSV with a header row.

    Rows whose text cell is empty or whitespace-only are dropped, as are
    rows the CSV parser cannot handle; the second return value counts
    both kinds. Row order is preserved.
    """
    pairs: list[tuple[str, str]] = []
    dropped = 0
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise TextPipelineError(f"no such file: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TextPipelineError(f"empty CSV file: {path}") from None
        for col in (text_column, label_column):
            if col not in header:
                raise TextPipelineError(
                    f"column {col!r} not in header of {path}"
                )
        text_idx = header.index(text_column)
        label_idx = header.index(label_column)
        needed = max(text_idx, label_idx)
        row_no = 1
        while True:
            row_no += 1
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error:
                dropped += 1
                continue
            if len(row) <= needed:
                dropped += 1
                continue
            text = row[text_idx]
            if not text.strip():
                dropped += 1
                continue
            pairs.append((text, row[label_idx]))
    return pairs, dropped


def count_csv_rows(path) -> int:
    """Number of data rows in the file (header excluded), before any filtering."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return sum(1 for _ in reader)


def normalize_tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip token edges down to
    [a-z0-9$%], and drop tokens that end up empty."""
    tokens = []
    for chunk in text.lower().split():
        tok = _EDGE_STRIP.sub("", chunk)
        if tok:
            tokens.append(tok)
    return tokens


def build_vocabulary(
    corpus,
    min_count: int = DEFAULT_MIN_COUNT,
    max_size: int | None = DEFAULT_MAX_VOCAB,
) -> Vocabulary:
    """Rank tokens by (frequency desc, first occurrence asc), keep those
    seen at least ``min_count`` times, truncate to ``max_size`` and
    prepend the reserved pad/unk entries.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    freq: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    pos = 0
    for tokens in corpus:
        for tok in tokens:
            freq[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = pos
            pos += 1
    kept = [t for t, c in freq.items() if c >= min_count]
    kept.sort(key=lambda t: (-freq[t], first_seen[t]))
    if max_size is not None:
        kept = kept[:max_size]
    index_to_token = [PAD_TOKEN, UNK_TOKEN] + kept
    return Vocabulary(
        token_to_index={t: i for i, t in enumerate(index_to_token)},
        index_to_token=index_to_token,
    )


def encode_and_pad(tokens, vocab: Vocabulary, length: int) -> tuple[int, ...]:
    """Map tokens to ids (unknown -> 1), truncate at ``length`` and
    right-pad with 0."""
    if length < 1:
        raise ValueError(f"target length must be >= 1, got {length}")
    ids = [vocab.lookup(t) for t in tokens[:length]]
    ids.extend([PAD_ID] * (length - len(ids)))
    return tuple(ids)


def compute_pad_length(
    token_lists,
    max_sentence_length: int = DEFAULT_MAX_SENTENCE_LENGTH,
    min_length: int = MIN_PAD_LENGTH,
) -> int:
    """Padded length: the longest tokenized sentence, capped at
    ``max_sentence_length`` and never below ``min_length``."""
    longest = max((len(t) for t in token_lists), default=0)
    return max(min_length, min(longest, max_sentence_length))


def split_dataset(
    examples,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitDataset:
    """Shuffle deterministically under ``seed`` and slice contiguously.

    Validation and test sizes are floor(n * ratio); the remainder goes
    to train. With n >= 3 every split must be non-empty.
    """
    r_train, r_val, r_test = ratios
    if min(ratios) <= 0:
        raise TextPipelineError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise TextPipelineError(f"ratios must sum to 1, got {ratios}")
    examples = list(examples)
    n = len(examples)
    n_val = int(n * r_val)
    n_test = int(n * r_test)
    n_train = n - n_val - n_test
    if n >= 3 and min(n_train, n_val, n_test) == 0:
        raise TextPipelineError(
            f"split of {n} examples at ratios {ratios} leaves an empty part"
        )
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [examples[i] for i in order]
    return SplitDataset(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        split_seed=seed,
        ratios=ratios,
    )


@dataclass
class PreparedCorpus:
    """Everything downstream training needs, derived from raw pairs."""

    vocab: Vocabulary
    labels: LabelSet
    pad_length: int
    split: SplitDataset
    dropped_rows: int = 0


def prepare_corpus(
    pairs,
    seed: int,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    min_count: int = DEFAULT_MIN_COUNT,
    max_vocab: int | None = DEFAULT_MAX_VOCAB,
    max_sentence_length: int = DEFAULT_MAX_SENTENCE_LENGTH,
) -> PreparedCorpus:
    """Tokenize, split, then build vocabulary and pad length from the
    training split only, and encode all three splits with them."""
    labels = LabelSet.from_labels(lab for _, lab in pairs)
    tokenized = [(normalize_tokenize(text), text, lab) for text, lab in pairs]
    tokenized = [(toks, text, lab) for toks, text, lab in tokenized if toks]
    split_raw = split_dataset(tokenized, ratios=ratios, seed=seed)
    train_tokens = [toks for toks, _, _ in split_raw.train]
    vocab = build_vocabulary(train_tokens, min_count=min_count, max_size=max_vocab)
    pad_length = compute_pad_length(
        train_tokens, max_sentence_length=max_sentence_length
    )

    def encode_part(part):
        return [
            EncodedExample(
                token_ids=encode_and_pad(toks, vocab, pad_length),
                label_id=labels.label_to_id[lab],
                raw_text=text,
            )
            for toks, text, lab in part
        ]

    split = SplitDataset(
        train=encode_part(split_raw.train),
        validation=encode_part(split_raw.validation),
        test=encode_part(split_raw.test),
        split_seed=seed,
        ratios=ratios,
    )
    return PreparedCorpus(
        vocab=vocab, labels=labels, pad_length=pad_length, split=split
    )
