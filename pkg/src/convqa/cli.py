"""Command line entry points.

    convqa prepare    tokenize, split and freeze a corpus's artifacts
    convqa train      train a classifier from a config file
    convqa evaluate   score a saved checkpoint on a CSV
    convqa replicate  run one of the three published experiment setups
    convqa domain     manage question-answering domains on disk
    convqa serve      run the HTTP service

Exit codes: 0 on success, 1 on a runtime error (bad data, missing
files), 2 on command line usage errors. Report files are deterministic
for a given input and seed; timing lives under the single "timing" key.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import checkpoint as ckpt
from . import metrics, qa, synthetic
from . import text as tp
from . import training
from .nn import NNError
from .service import ServiceConfig, run_service

ENV_PORT = "CONVQA_PORT"
ENV_DATA_DIR = "CONVQA_DATA_DIR"
ENV_COMPLAINTS_CSV = "CONVQA_COMPLAINTS_CSV"

_ERRORS = (
    tp.TextPipelineError,
    training.TrainingError,
    ckpt.CheckpointError,
    metrics.MetricsError,
    qa.QAError,
    NNError,
    OSError,
    ValueError,
)


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios must be three comma-separated floats")
    return (parts[0], parts[1], parts[2])


def _json_dump(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _load_pairs(args) -> tuple[list[tuple[str, str]], int]:
    return tp.load_labeled_csv(
        args.data, text_column=args.text_column, label_column=args.label_column
    )


def _dataset_summary(path, pairs, dropped, corpus: tp.PreparedCorpus) -> dict:
    return {
        "path": str(path),
        "rows_loaded": len(pairs),
        "rows_dropped": dropped,
        "train": len(corpus.split.train),
        "validation": len(corpus.split.validation),
        "test": len(corpus.split.test),
        "vocab_size": corpus.vocab.size,
        "pad_length": corpus.pad_length,
        "num_classes": corpus.labels.num_classes,
    }


def _add_corpus_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--text-column", default=tp.DEFAULT_TEXT_COLUMN)
    p.add_argument("--label-column", default=tp.DEFAULT_LABEL_COLUMN)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1),
                   help="train,validation,test fractions (default 0.8,0.1,0.1)")


def cmd_prepare(args) -> int:
    pairs, dropped = _load_pairs(args)
    corpus = tp.prepare_corpus(pairs, seed=args.seed, ratios=args.ratios,
                               min_count=args.min_count, max_vocab=args.max_vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus.vocab.save(out / "vocab.tsv")
    corpus.labels.save(out / "labels.tsv")
    summary = _dataset_summary(args.data, pairs, dropped, corpus)
    summary["seed"] = args.seed
    summary["ratios"] = list(args.ratios)
    _json_dump(summary, out / "summary.json")
    print(f"prepared {summary['train']}/{summary['validation']}/{summary['test']} "
          f"train/validation/test rows, vocab {corpus.vocab.size}, "
          f"pad length {corpus.pad_length} -> {out}")
    return 0


def _train_and_write(args, hp, pairs, dropped, extra: dict) -> int:
    """Shared tail of train/replicate: fit, save artifacts, report."""
    started = time.perf_counter()
    corpus = tp.prepare_corpus(pairs, seed=hp.seed, ratios=args.ratios)
    run = training.train(
        corpus.split,
        hp,
        vocab_size=corpus.vocab.size,
        num_classes=corpus.labels.num_classes,
        strict=getattr(args, "strict", False),
        optimizer=getattr(args, "optimizer", "adam"),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus.vocab.save(out / "vocab.tsv")
    corpus.labels.save(out / "labels.tsv")
    meta = ckpt.CheckpointMeta(
        hyperparams=hp,
        labels=corpus.labels,
        vocab_sha256=ckpt.vocab_sha256(corpus.vocab),
        pad_length=corpus.pad_length,
        ratios=tuple(args.ratios),
    )
    ckpt.save_checkpoint(run.final_params, meta, out / "model.ckpt")
    if run.best_params is not None:
        ckpt.save_checkpoint(run.best_params, meta, out / "model_best.ckpt")
    (out / "history.csv").write_text(run.history_csv(), encoding="utf-8")

    report = metrics.evaluate_model(
        run.final_params, corpus.split.test, hp, labels=corpus.labels.names
    )
    payload = {
        "config": {
            "epochs": hp.epochs,
            "batch_size": hp.batch_size,
            "num_filters": hp.num_filters,
            "widths": list(hp.widths),
            "embedding_dim": hp.embedding_dim,
            "l2_lambda": hp.l2_lambda,
            "eval_every": hp.eval_every,
            "dropout": hp.dropout,
            "learning_rate": hp.learning_rate,
            "seed": hp.seed,
        },
        "dataset": _dataset_summary(args.data, pairs, dropped, corpus),
        "results": report.to_json_dict(),
        "best": (
            {"step": run.best_step} if run.best_step is not None else None
        ),
        "total_steps": run.total_steps,
        "timing": {
            "train_seconds": run.wall_time,
            "total_seconds": time.perf_counter() - started,
        },
    }
    payload.update(extra)
    _json_dump(payload, out / "report.json")
    print(report.format_table())
    print(f"\nartifacts in {out}")
    return 0


def cmd_train(args) -> int:
    values = training.load_config_file(args.config)
    hp = training.hyperparams_from_config(values, seed=args.seed)
    pairs, dropped = _load_pairs(args)
    return _train_and_write(args, hp, pairs, dropped, {})


def cmd_replicate(args) -> int:
    hp = training.hyperparams_for_experiment(args.experiment, seed=args.seed)
    if args.data is None:
        args.data = os.environ.get(ENV_COMPLAINTS_CSV)
    if args.data is None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        args.data = out / "synthetic_complaints.csv"
        if not Path(args.data).exists():
            synthetic.write_complaints_csv(args.data, n=args.rows, seed=7)
        print(f"no dataset given; wrote synthetic stand-in {args.data}")
    pairs, dropped = _load_pairs(args)
    return _train_and_write(args, hp, pairs, dropped,
                            {"experiment": args.experiment})


def cmd_evaluate(args) -> int:
    vocab_path = args.vocab or str(Path(args.model).parent / "vocab.tsv")
    params, meta, vocab = ckpt.load_for_inference(args.model, vocab_path)
    pairs, dropped = _load_pairs(args)

    tokenized = []
    for text, lab in pairs:
        toks = tp.normalize_tokenize(text)
        if toks:
            tokenized.append((toks, text, lab))
    split_raw = tp.split_dataset(tokenized, ratios=meta.ratios,
                                 seed=meta.hyperparams.seed)
    parts = {
        "train": split_raw.train,
        "validation": split_raw.validation,
        "test": split_raw.test,
        "all": split_raw.train + split_raw.validation + split_raw.test,
    }
    chosen = parts[args.split]
    examples = []
    for toks, text, lab in chosen:
        if lab not in meta.labels.label_to_id:
            raise tp.TextPipelineError(
                f"label {lab!r} was not present when the model was trained"
            )
        examples.append(
            tp.EncodedExample(
                token_ids=tp.encode_and_pad(toks, vocab, meta.pad_length),
                label_id=meta.labels.label_to_id[lab],
                raw_text=text,
            )
        )
    report = metrics.evaluate_model(params, examples, meta.hyperparams,
                                    labels=meta.labels.names)
    print(report.format_table())
    if args.out:
        payload = {
            "model": str(args.model),
            "data": str(args.data),
            "split": args.split,
            "rows_dropped": dropped,
            "results": report.to_json_dict(),
        }
        _json_dump(payload, Path(args.out))
    return 0


def _registry(args) -> qa.DomainRegistry:
    return qa.DomainRegistry(base_dir=args.data_dir)


def cmd_domain_create(args) -> int:
    _registry(args).register_domain(args.id)
    print(f"created domain {args.id!r} in {args.data_dir}")
    return 0


def cmd_domain_ingest(args) -> int:
    registry = _registry(args)
    pairs, dropped = tp.load_labeled_csv(
        args.file, text_column=args.text_column, label_column=args.label_column
    )
    snap = registry.ingest_documents(args.id, pairs)
    print(f"ingested {len(pairs)} documents ({dropped} dropped); "
          f"knowledge base has {snap.kb.size()} sentences in "
          f"{snap.labels.num_classes} categories")
    return 0


def cmd_domain_train(args) -> int:
    registry = _registry(args)
    domain = registry.get(args.id)
    hp = None
    if args.seed is not None:
        size = domain.snapshot.kb.size() if domain.snapshot.kb is not None else 0
        hp = qa.default_domain_hyperparams(size, seed=args.seed)
    snap = registry.train_domain(args.id, hp)
    seconds = domain.last_train_seconds or 0.0
    print(f"trained domain {args.id!r} in {seconds:.1f}s "
          f"(snapshot {snap.snapshot_id})")
    return 0


def cmd_domain_ask(args) -> int:
    registry = _registry(args)
    if args.id:
        answer = registry.retrieve_answer(args.id, args.question)
    else:
        answer = registry.answer_general(args.question)
    print(f"[{answer.domain_id} / {answer.category}"
          f"{' / fallback' if answer.fallback else ''}] {answer.text}")
    print(f"confidence {answer.classifier_confidence:.4f}, "
          f"similarity {answer.similarity:.4f}")
    return 0


def cmd_domain_list(args) -> int:
    registry = _registry(args)
    ids = registry.domain_ids()
    if not ids:
        print("no domains")
        return 0
    for did in ids:
        snap = registry.get(did).snapshot
        kb = snap.kb.size() if snap.kb is not None else 0
        print(f"{did}\t{snap.status}\t{kb} sentences")
    return 0


def cmd_serve(args) -> int:
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        data_dir=args.data_dir,
        cors_origins=[o for o in args.cors.split(",") if o] if args.cors else [],
    )
    print(f"serving on http://{config.host}:{config.port} "
          f"(domains in {config.data_dir or 'memory'})")
    run_service(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convqa",
        description="Convolutional sentence classification and domain question answering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tokenize, split and save corpus artifacts")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-count", type=int, default=tp.DEFAULT_MIN_COUNT)
    p.add_argument("--max-vocab", type=int, default=tp.DEFAULT_MAX_VOCAB)
    _add_corpus_options(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a classifier from a config file")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config file's seed")
    p.add_argument("--strict", action="store_true",
                   help="bit-reproducible per-example gradient accumulation")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    _add_corpus_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("replicate", help="run a published experiment setup")
    p.add_argument("--experiment", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None,
                   help=f"complaints CSV (default: ${ENV_COMPLAINTS_CSV} or a synthetic stand-in)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=20_000,
                   help="rows for the synthetic stand-in corpus")
    _add_corpus_options(p)
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("evaluate", help="score a checkpoint on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", default=None,
                   help="vocabulary file (default: vocab.tsv beside the model)")
    p.add_argument("--split", choices=("train", "validation", "test", "all"),
                   default="test")
    p.add_argument("--out", default=None, help="write the report as JSON here")
    _add_corpus_options(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("domain", help="manage question-answering domains")
    dsub = p.add_subparsers(dest="domain_command", required=True)
    data_dir_default = os.environ.get(ENV_DATA_DIR, "convqa_data")

    d = dsub.add_parser("create")
    d.add_argument("--id", required=True)
    d.add_argument("--data-dir", default=data_dir_default)
    d.set_defaults(func=cmd_domain_create)

    d = dsub.add_parser("ingest")
    d.add_argument("--id", required=True)
    d.add_argument("--file", required=True)
    d.add_argument("--data-dir", default=data_dir_default)
    d.add_argument("--text-column", default="text")
    d.add_argument("--label-column", default="category")
    d.set_defaults(func=cmd_domain_ingest)

    d = dsub.add_parser("train")
    d.add_argument("--id", required=True)
    d.add_argument("--data-dir", default=data_dir_default)
    d.add_argument("--seed", type=int, default=None)
    d.set_defaults(func=cmd_domain_train)

    d = dsub.add_parser("ask")
    d.add_argument("--question", required=True)
    d.add_argument("--id", default=None, help="omit to route across all domains")
    d.add_argument("--data-dir", default=data_dir_default)
    d.set_defaults(func=cmd_domain_ask)

    d = dsub.add_parser("list")
    d.add_argument("--data-dir", default=data_dir_default)
    d.set_defaults(func=cmd_domain_list)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get(ENV_PORT, "8000")))
    p.add_argument("--data-dir", default=os.environ.get(ENV_DATA_DIR))
    p.add_argument("--cors", default="*",
                   help="comma-separated allowed origins; empty disables CORS")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
