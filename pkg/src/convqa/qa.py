"""Open-domain question answering over per-domain classifiers.

A domain owns a document corpus, a sentence knowledge base, a
vocabulary and one trained classifier. Questions are routed to a
category by the classifier, then answered by cosine similarity between
mean word embeddings of the question and of the knowledge-base entries
in that category (falling back to the whole base when the category is
empty). Confirmed answers can be appended back into the base.

Reads always operate on an immutable snapshot that mutations replace
atomically, so concurrent asks during ingest, training or learning see
either the old or the new state, never a mix.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import text as tp
from . import training
from .nn import EVAL, HyperParams, ModelParams, forward_batch

MIN_SENTENCE_TOKENS = 3

# Training budget for a domain: enough optimizer steps to drive a small
# network to the training-set optimum on a desk-sized corpus.
DOMAIN_TARGET_STEPS = 600
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


class QAError(Exception):
    """Raised for invalid domain operations (unknown ids, untrained
    domains, empty corpora, unanswerable questions)."""


@dataclass(frozen=True)
class KBEntry:
    """One answerable sentence: its text, category, and the mean of its
    word embeddings under the owning model (None until trained)."""

    text: str
    token_ids: tuple[int, ...]
    category_id: int
    origin: str  # "ingested" or "learned"
    embedding: np.ndarray | None = None


@dataclass(frozen=True)
class KnowledgeBase:
    entries: tuple[KBEntry, ...]
    stale: bool  # embeddings were computed by a model that no longer exists

    def by_category(self, category_id: int) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.category_id == category_id]

    def size(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Answer:
    text: str
    category: str
    classifier_confidence: float
    similarity: float
    domain_id: str
    fallback: bool  # category had no entries; searched the whole base
    entry_index: int
    snapshot_id: int  # domain snapshot the answer was computed from


@dataclass(frozen=True)
class DomainSnapshot:
    """Immutable view of a domain's queryable state."""

    snapshot_id: int
    status: str  # created | ingested | trained
    vocab: tp.Vocabulary | None = None
    labels: tp.LabelSet | None = None
    pad_length: int | None = None
    hyperparams: HyperParams | None = None
    model: ModelParams | None = None
    kb: KnowledgeBase | None = None


def split_sentences(text: str) -> list[str]:
    """Break on ., ? or ! followed by whitespace; a piece under
    MIN_SENTENCE_TOKENS tokens is folded into the sentence before it."""
    chunks = [c.strip() for c in _SENTENCE_BREAK.split(text.strip()) if c.strip()]
    out: list[str] = []
    for chunk in chunks:
        if out and len(tp.normalize_tokenize(chunk)) < MIN_SENTENCE_TOKENS:
            out[-1] = out[-1] + " " + chunk
        else:
            out.append(chunk)
    return out


def _pad_ids(ids, length: int) -> tuple[int, ...]:
    """Truncate/right-pad an already-encoded id sequence."""
    out = list(ids)[:length]
    out.extend([tp.PAD_ID] * (length - len(out)))
    return tuple(out)


def mean_embedding(token_ids, embedding: np.ndarray) -> np.ndarray:
    """Mean of the embedding rows for the non-padding ids."""
    ids = np.asarray([i for i in token_ids if i != tp.PAD_ID], dtype=np.int64)
    if ids.size == 0:
        return np.zeros(embedding.shape[1])
    return embedding[ids].mean(axis=0)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def default_domain_hyperparams(n_examples: int, seed: int = 0) -> HyperParams:
    """Small network sized for interactive domains; epochs chosen so the
    run totals about DOMAIN_TARGET_STEPS optimizer steps."""
    if n_examples <= 0:
        raise QAError("domain has no training sentences")
    batch_size = min(16, n_examples)
    steps_per_epoch = -(-n_examples // batch_size)
    epochs = max(1, -(-DOMAIN_TARGET_STEPS // steps_per_epoch))
    return HyperParams(
        epochs=epochs,
        batch_size=batch_size,
        num_filters=16,
        widths=(2, 3),
        embedding_dim=32,
        l2_lambda=0.0,
        eval_every=10_000,
        dropout=0.0,
        learning_rate=0.01,
        seed=seed,
    )


class Domain:
    """One tenant: corpus, knowledge base and classifier.

    Mutations (ingest, train, learn) are serialized by a lock and
    publish a fresh ``DomainSnapshot``; reads grab the current snapshot
    once and never block.
    """

    def __init__(self, domain_id: str):
        if not domain_id or not re.fullmatch(r"[A-Za-z0-9_-]{1,64}", domain_id):
            raise QAError(
                f"invalid domain id {domain_id!r}: use 1-64 letters, digits, '-' or '_'"
            )
        self.domain_id = domain_id
        self._lock = threading.RLock()
        # The training flag has its own lock: checking or flipping it must
        # never wait behind a mutation in progress (training holds _lock
        # for seconds; callers probing "busy?" need an immediate answer).
        self._flag_lock = threading.Lock()
        self._snapshot = DomainSnapshot(snapshot_id=0, status="created")
        self._raw_docs: list[tuple[str, str]] = []
        self._learned: list[tuple[str, str]] = []  # (question text, category name)
        self._training = False
        self.training_progress: tuple[int, int] | None = None
        self.last_train_seconds: float | None = None
        self.last_error: str | None = None

    # -- snapshot plumbing -------------------------------------------------

    @property
    def snapshot(self) -> DomainSnapshot:
        return self._snapshot

    def _publish(self, snap: DomainSnapshot) -> DomainSnapshot:
        self._snapshot = replace(snap, snapshot_id=self._snapshot.snapshot_id + 1)
        return self._snapshot

    def try_begin_training(self) -> bool:
        with self._flag_lock:
            if self._training:
                return False
            self._training = True
            return True

    def end_training(self) -> None:
        with self._flag_lock:
            self._training = False
            self.training_progress = None

    @property
    def is_training(self) -> bool:
        return self._training

    # -- mutations ----------------------------------------------------------

    def ingest_documents(self, documents) -> DomainSnapshot:
        """Add (text, category) documents, rebuild vocabulary and
        knowledge base. Clears any trained model, because its embedding
        table indexes the old vocabulary."""
        docs = [(str(t), str(c)) for t, c in documents]
        if not docs:
            raise QAError("no documents supplied")
        for text, category in docs:
            if not text.strip():
                raise QAError("document with empty text")
            if not category.strip():
                raise QAError("document with empty category")
        with self._lock:
            self._raw_docs.extend(docs)
            labels = tp.LabelSet.from_labels([c for _, c in self._raw_docs])

            sentences: list[tuple[str, int]] = []
            for text, category in self._raw_docs:
                cid = labels.label_to_id[category]
                for sent in split_sentences(text):
                    if tp.normalize_tokenize(sent):
                        sentences.append((sent, cid))
            for question, category in self._learned:
                if category not in labels.label_to_id:
                    # learned under a category later renamed away; keep the
                    # entry by re-registering its category
                    raise QAError(
                        f"learned entry category {category!r} missing after re-ingest"
                    )
                sentences.append((question, labels.label_to_id[category]))
            if not sentences:
                raise QAError("corpus has no usable sentences")

            token_lists = [tp.normalize_tokenize(s) for s, _ in sentences]
            vocab = tp.build_vocabulary(token_lists)
            pad_length = tp.compute_pad_length(token_lists)

            n_ingested = len(sentences) - len(self._learned)
            entries = []
            for i, ((sent, cid), tokens) in enumerate(zip(sentences, token_lists)):
                origin = "ingested" if i < n_ingested else "learned"
                ids = tuple(vocab.lookup(t) for t in tokens)
                entries.append(KBEntry(text=sent, token_ids=ids, category_id=cid,
                                       origin=origin))
            kb = KnowledgeBase(entries=tuple(entries), stale=True)
            return self._publish(
                DomainSnapshot(
                    snapshot_id=0,
                    status="ingested",
                    vocab=vocab,
                    labels=labels,
                    pad_length=pad_length,
                    hyperparams=None,
                    model=None,
                    kb=kb,
                )
            )

    def train(self, hyperparams: HyperParams | None = None,
              progress=None) -> DomainSnapshot:
        """Fit the classifier on every knowledge-base sentence, then
        recompute all entry embeddings from the new embedding table."""
        with self._lock:
            snap = self._snapshot
            if snap.status == "created" or snap.kb is None:
                raise QAError(f"domain {self.domain_id!r} has no ingested documents")
            assert snap.vocab is not None and snap.labels is not None
            hp = hyperparams or default_domain_hyperparams(snap.kb.size())

            examples = [
                tp.EncodedExample(
                    token_ids=_pad_ids(entry.token_ids, snap.pad_length),
                    label_id=entry.category_id,
                    raw_text=entry.text,
                )
                for entry in snap.kb.entries
            ]
            split = tp.SplitDataset(train=examples, validation=[], test=[],
                                    split_seed=hp.seed, ratios=(1.0, 0.0, 0.0))
            started = time.perf_counter()
            run = training.train(
                split,
                hp,
                vocab_size=snap.vocab.size,
                num_classes=snap.labels.num_classes,
                progress=progress,
            )
            self.last_train_seconds = time.perf_counter() - started

            table = run.final_params.embedding
            entries = tuple(
                replace(e, embedding=mean_embedding(e.token_ids, table))
                for e in snap.kb.entries
            )
            kb = KnowledgeBase(entries=entries, stale=False)
            return self._publish(
                replace(snap, status="trained", hyperparams=hp,
                        model=run.final_params, kb=kb)
            )

    def learn(self, question: str, answer: Answer) -> DomainSnapshot:
        """Append a confirmed (question, category) pair to the base.
        Never touches the model; entry count only grows."""
        with self._lock:
            snap = self._snapshot
            if snap.status != "trained":
                raise QAError(f"domain {self.domain_id!r} is not trained")
            assert snap.vocab is not None and snap.labels is not None and snap.kb is not None
            tokens = tp.normalize_tokenize(question)
            if not tokens:
                raise QAError("question normalizes to no tokens")
            if answer.category not in snap.labels.label_to_id:
                raise QAError(f"unknown category {answer.category!r}")
            ids = tuple(snap.vocab.lookup(t) for t in tokens)
            entry = KBEntry(
                text=question,
                token_ids=ids,
                category_id=snap.labels.label_to_id[answer.category],
                origin="learned",
                embedding=mean_embedding(ids, snap.model.embedding),
            )
            self._learned.append((question, answer.category))
            kb = KnowledgeBase(entries=snap.kb.entries + (entry,), stale=snap.kb.stale)
            return self._publish(replace(snap, kb=kb))

    # -- queries -------------------------------------------------------------

    def classify_question(self, question: str) -> tuple[int, float, np.ndarray]:
        """Category id, winning probability and the full distribution."""
        snap = self._snapshot
        return _classify(snap, self.domain_id, question)

    def retrieve_answer(self, question: str) -> Answer:
        snap = self._snapshot
        cid, confidence, _ = _classify(snap, self.domain_id, question)
        assert snap.kb is not None and snap.model is not None
        if snap.kb.size() == 0:
            raise QAError(f"domain {self.domain_id!r} has an empty knowledge base")
        tokens = tp.normalize_tokenize(question)
        q_ids = [snap.vocab.lookup(t) for t in tokens]
        q_emb = mean_embedding(q_ids, snap.model.embedding)

        candidates = snap.kb.by_category(cid)
        fallback = not candidates
        if fallback:
            candidates = list(range(snap.kb.size()))
        best_i, best_sim = -1, -np.inf
        for i in candidates:
            sim = cosine_similarity(q_emb, snap.kb.entries[i].embedding)
            if sim > best_sim:  # ties keep the lowest entry index
                best_i, best_sim = i, sim
        entry = snap.kb.entries[best_i]
        return Answer(
            text=entry.text,
            category=snap.labels.names[cid],
            classifier_confidence=confidence,
            similarity=float(best_sim),
            domain_id=self.domain_id,
            fallback=fallback,
            entry_index=best_i,
            snapshot_id=snap.snapshot_id,
        )


def _classify(snap: DomainSnapshot, domain_id: str,
              question: str) -> tuple[int, float, np.ndarray]:
    if snap.status != "trained" or snap.model is None:
        raise QAError(f"domain {domain_id!r} is not trained")
    tokens = tp.normalize_tokenize(question)
    if not tokens:
        raise QAError("question normalizes to no tokens")
    ids = tp.encode_and_pad(tokens, snap.vocab, snap.pad_length)
    batch = np.asarray([ids], dtype=np.int64)
    trace = forward_batch(batch, None, snap.model, snap.hyperparams, mode=EVAL)
    probs = trace.probs[0]
    cid = int(np.argmax(probs))
    return cid, float(probs[cid]), probs


class DomainRegistry:
    """Named domains plus cross-domain routing; optionally persists each
    domain to ``base_dir/<domain_id>/`` after every mutation."""

    def __init__(self, base_dir: str | Path | None = None):
        self._domains: dict[str, Domain] = {}
        self._lock = threading.Lock()
        self.base_dir = Path(base_dir) if base_dir is not None else None
        if self.base_dir is not None:
            self.base_dir.mkdir(parents=True, exist_ok=True)
            for child in sorted(self.base_dir.iterdir()):
                if child.is_dir() and (child / "meta.json").exists():
                    domain = load_domain(child)
                    self._domains[domain.domain_id] = domain

    def register_domain(self, domain_id: str) -> Domain:
        with self._lock:
            if domain_id in self._domains:
                raise QAError(f"domain {domain_id!r} already exists")
            domain = Domain(domain_id)
            self._domains[domain_id] = domain
        self._persist(domain)
        return domain

    def get(self, domain_id: str) -> Domain:
        try:
            return self._domains[domain_id]
        except KeyError:
            raise QAError(f"unknown domain {domain_id!r}") from None

    def domain_ids(self) -> list[str]:
        return sorted(self._domains)

    def __contains__(self, domain_id: str) -> bool:
        return domain_id in self._domains

    def ingest_documents(self, domain_id: str, documents) -> DomainSnapshot:
        domain = self.get(domain_id)
        snap = domain.ingest_documents(documents)
        self._persist(domain)
        return snap

    def train_domain(self, domain_id: str, hyperparams: HyperParams | None = None,
                     progress=None) -> DomainSnapshot:
        domain = self.get(domain_id)
        snap = domain.train(hyperparams, progress=progress)
        self._persist(domain)
        return snap

    def classify_question(self, domain_id: str, question: str):
        return self.get(domain_id).classify_question(question)

    def retrieve_answer(self, domain_id: str, question: str) -> Answer:
        return self.get(domain_id).retrieve_answer(question)

    def kb_learn(self, domain_id: str, question: str, answer: Answer,
                 accepted: bool) -> bool:
        """Returns True when the pair was appended (only accepted
        feedback mutates anything)."""
        if not accepted:
            return False
        domain = self.get(domain_id)
        domain.learn(question, answer)
        self._persist(domain)
        return True

    def answer_general(self, question: str) -> Answer:
        """Route to the trained domain whose classifier is most
        confident, then answer inside it. Ties pick the lexically first
        domain id."""
        trained = [
            (did, d) for did, d in sorted(self._domains.items())
            if d.snapshot.status == "trained"
        ]
        if not trained:
            raise QAError("no trained domain available")
        best: tuple[float, str] | None = None
        for did, domain in trained:
            _, confidence, _ = domain.classify_question(question)
            if best is None or confidence > best[0]:
                best = (confidence, did)
        return self.get(best[1]).retrieve_answer(question)

    def _persist(self, domain: Domain) -> None:
        if self.base_dir is not None:
            save_domain(domain, self.base_dir / domain.domain_id)


# -- persistence ---------------------------------------------------------

_KB_VERSION = 1


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"t": "\t", "n": "\n", "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def save_domain(domain: Domain, directory: str | Path) -> Path:
    """Write meta.json, vocab.tsv, labels.tsv, kb.tsv and model.ckpt
    (when trained) under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    snap = domain.snapshot
    meta = {
        "domain_id": domain.domain_id,
        "status": snap.status,
        "snapshot_id": snap.snapshot_id,
        "pad_length": snap.pad_length,
        "raw_docs": [[t, c] for t, c in domain._raw_docs],
        "learned": [[q, c] for q, c in domain._learned],
    }
    (directory / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if snap.vocab is not None:
        snap.vocab.save(directory / "vocab.tsv")
    if snap.labels is not None:
        lines = [f"{i}\t{_escape(name)}" for i, name in enumerate(snap.labels.names)]
        (directory / "labels.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if snap.kb is not None:
        rows = [f"# kb v{_KB_VERSION} stale={int(snap.kb.stale)}"]
        for e in snap.kb.entries:
            emb = (
                ""
                if e.embedding is None
                else ",".join(repr(float(x)) for x in e.embedding)
            )
            rows.append(f"{e.category_id}\t{e.origin}\t{_escape(e.text)}\t{emb}")
        (directory / "kb.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if snap.model is not None:
        ckpt.save_checkpoint(
            snap.model,
            ckpt.CheckpointMeta(
                hyperparams=snap.hyperparams,
                labels=snap.labels,
                vocab_sha256=ckpt.vocab_sha256(snap.vocab),
                pad_length=snap.pad_length,
            ),
            directory / "model.ckpt",
        )
    return directory


def load_domain(directory: str | Path) -> Domain:
    """Rebuild a domain saved by ``save_domain``."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    domain = Domain(meta["domain_id"])
    domain._raw_docs = [(t, c) for t, c in meta["raw_docs"]]
    domain._learned = [(q, c) for q, c in meta["learned"]]
    status = meta["status"]
    if status == "created":
        return domain

    vocab = tp.Vocabulary.load(directory / "vocab.tsv")
    label_lines = (directory / "labels.tsv").read_text(encoding="utf-8").splitlines()
    names = [_unescape(line.split("\t", 1)[1]) for line in label_lines if line]
    labels = tp.LabelSet(label_to_id={name: i for i, name in enumerate(names)})

    kb_lines = (directory / "kb.tsv").read_text(encoding="utf-8").splitlines()
    header = kb_lines[0] if kb_lines else ""
    match = re.fullmatch(r"# kb v(\d+) stale=([01])", header)
    if not match:
        raise QAError(f"bad knowledge base header in {directory / 'kb.tsv'}")
    if int(match.group(1)) != _KB_VERSION:
        raise QAError(
            f"unsupported knowledge base version {match.group(1)} "
            f"in {directory / 'kb.tsv'} (expected {_KB_VERSION})"
        )
    stale = match.group(2) == "1"
    entries = []
    for line in kb_lines[1:]:
        if not line:
            continue
        cid, origin, text, emb = line.split("\t")
        text = _unescape(text)
        ids = tuple(vocab.lookup(t) for t in tp.normalize_tokenize(text))
        embedding = (
            np.asarray([float(x) for x in emb.split(",")]) if emb else None
        )
        entries.append(KBEntry(text=text, token_ids=ids, category_id=int(cid),
                               origin=origin, embedding=embedding))
    kb = KnowledgeBase(entries=tuple(entries), stale=stale)

    model = None
    hp = None
    if status == "trained":
        model, ck_meta, _ = ckpt.load_for_inference(
            directory / "model.ckpt", directory / "vocab.tsv"
        )
        hp = ck_meta.hyperparams
    domain._snapshot = DomainSnapshot(
        snapshot_id=meta["snapshot_id"],
        status=status,
        vocab=vocab,
        labels=labels,
        pad_length=meta["pad_length"],
        hyperparams=hp,
        model=model,
        kb=kb,
    )
    return domain
