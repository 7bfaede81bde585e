"""Phrase-break prediction for Japanese TTS front ends.

Pipeline: time-aligned transcripts become a labeled TSV corpus (corpus),
tokens gain lexical and dependency features plus subword alignments
(lexfeat), a BiLSTM and/or a pretrained LM encode them (encoders), six
systems score break probabilities per token (model), training runs the
fixed optimization protocol (training), and scoring stratifies results by
punctuation (evaluator). The cli module ties the stages together.
"""

from .corpus import (
    DEFAULT_BREAK_THRESHOLD_MS,
    CorpusParseError,
    CorpusSplit,
    Utterance,
    WordTiming,
    label_from_alignment,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .evaluator import (
    OutcomeCounts,
    StratifiedReport,
    count_outcomes,
    evaluate_system,
    prf,
    stratify,
)
from .lexfeat import (
    AlignmentError,
    AnnotatedToken,
    AnnotationError,
    EmbeddingTable,
    LexiconAnnotator,
    SubwordAlignment,
    align_subwords,
    annotate,
    read_embedding_table,
    write_embedding_table,
)
from .model import (
    BreakPredictor,
    FingerprintMismatchError,
    Prediction,
    SystemConfig,
    SystemKind,
    Vocabularies,
    load_checkpoint,
    rule_based_predict,
    save_checkpoint,
)
from .training import TrainConfig, TrainReport, train, train_system

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AnnotatedToken",
    "AnnotationError",
    "BreakPredictor",
    "CorpusParseError",
    "CorpusSplit",
    "DEFAULT_BREAK_THRESHOLD_MS",
    "EmbeddingTable",
    "FingerprintMismatchError",
    "LexiconAnnotator",
    "OutcomeCounts",
    "Prediction",
    "StratifiedReport",
    "SubwordAlignment",
    "SystemConfig",
    "SystemKind",
    "TrainConfig",
    "TrainReport",
    "Utterance",
    "Vocabularies",
    "WordTiming",
    "align_subwords",
    "annotate",
    "count_outcomes",
    "evaluate_system",
    "label_from_alignment",
    "load_checkpoint",
    "prf",
    "read_corpus",
    "read_embedding_table",
    "rule_based_predict",
    "save_checkpoint",
    "split_corpus",
    "stratify",
    "train",
    "train_system",
    "write_corpus",
    "write_embedding_table",
]
