"""Convolutional sentence classification with a question-answering layer.

The package builds everything on plain NumPy: tokenization and
vocabulary handling (``text``), the network with hand-derived gradients
(``nn``), the training loop (``training``), evaluation (``metrics``),
binary checkpoints (``checkpoint``), scikit-learn style estimators
(``estimator``), per-domain question answering (``qa``), an HTTP
service (``service``) and a command line (``cli``).
"""

from .checkpoint import (
    CheckpointError,
    CheckpointMeta,
    load_checkpoint,
    load_for_inference,
    save_checkpoint,
    vocab_sha256,
)
from .estimator import CnnTextClassifier, SentenceEncoder
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    MetricsError,
    confusion_from_predictions,
    evaluate_model,
    metrics_from_confusion,
    predict_ids,
)
from .nn import (
    EVAL,
    TRAIN,
    ForwardTrace,
    Gradients,
    HyperParams,
    ModelParams,
    NNError,
    backward,
    conv_forward,
    forward,
    forward_batch,
    grad_check,
    init_params,
)
from .qa import (
    Answer,
    Domain,
    DomainRegistry,
    KBEntry,
    KnowledgeBase,
    QAError,
    cosine_similarity,
    default_domain_hyperparams,
    load_domain,
    mean_embedding,
    save_domain,
    split_sentences,
)
from .service import ServiceConfig, create_app
from .synthetic import (
    complaints_like_corpus,
    separable_corpus,
    write_complaints_csv,
)
from .text import (
    PAD_ID,
    PAD_TOKEN,
    UNK_ID,
    UNK_TOKEN,
    EncodedExample,
    LabelSet,
    PreparedCorpus,
    SplitDataset,
    TextPipelineError,
    Vocabulary,
    build_vocabulary,
    compute_pad_length,
    encode_and_pad,
    load_labeled_csv,
    normalize_tokenize,
    prepare_corpus,
    split_dataset,
)
from .training import (
    EXPERIMENT_CONFIGS,
    OptimizerState,
    TrainingError,
    TrainRun,
    adam_step,
    hyperparams_for_experiment,
    sgd_step,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "CheckpointError",
    "CheckpointMeta",
    "CnnTextClassifier",
    "ConfusionMatrix",
    "Domain",
    "DomainRegistry",
    "EVAL",
    "EXPERIMENT_CONFIGS",
    "EncodedExample",
    "EvalReport",
    "ForwardTrace",
    "Gradients",
    "HyperParams",
    "KBEntry",
    "KnowledgeBase",
    "LabelSet",
    "MetricsError",
    "ModelParams",
    "NNError",
    "OptimizerState",
    "PAD_ID",
    "PAD_TOKEN",
    "PreparedCorpus",
    "QAError",
    "SentenceEncoder",
    "ServiceConfig",
    "SplitDataset",
    "TRAIN",
    "TextPipelineError",
    "TrainRun",
    "TrainingError",
    "UNK_ID",
    "UNK_TOKEN",
    "Vocabulary",
    "adam_step",
    "backward",
    "build_vocabulary",
    "compute_pad_length",
    "complaints_like_corpus",
    "confusion_from_predictions",
    "conv_forward",
    "cosine_similarity",
    "create_app",
    "default_domain_hyperparams",
    "encode_and_pad",
    "evaluate_model",
    "forward",
    "forward_batch",
    "grad_check",
    "hyperparams_for_experiment",
    "init_params",
    "load_checkpoint",
    "load_domain",
    "load_for_inference",
    "load_labeled_csv",
    "mean_embedding",
    "metrics_from_confusion",
    "normalize_tokenize",
    "predict_ids",
    "prepare_corpus",
    "save_checkpoint",
    "save_domain",
    "separable_corpus",
    "sgd_step",
    "split_dataset",
    "split_sentences",
    "train",
    "vocab_sha256",
    "write_complaints_csv",
]
