"""Training loop: Adam at a constant learning rate, minibatches of padded
utterances, per-epoch validation F1 with strict-improvement early stopping,
and best-epoch parameter selection.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import torch

from .corpus import CorpusSplit, Utterance
from .evaluator import OutcomeCounts, count_outcomes, prf_unrounded
from .model import (
    Batch,
    BreakPredictor,
    EmbeddingTable,
    Features,
    SystemConfig,
    Vocabularies,
    decide_labels,
    masked_loss,
)

T = TypeVar("T")


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message pinpoints epoch and batch."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 20
    patience: int = 10
    seed: int = 0
    decision_threshold: float = 0.5
    grad_clip: float | None = None
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.patience > self.max_epochs:
            raise ValueError(
                f"patience {self.patience} exceeds max_epochs {self.max_epochs}"
            )
        if not 0.0 <= self.decision_threshold <= 1.0:
            raise ValueError(f"decision_threshold outside [0, 1]: {self.decision_threshold}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError(f"grad_clip must be positive or None, got {self.grad_clip}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    validation_f1: float
    seconds: float


@dataclass
class TrainReport:
    records: list[EpochRecord]
    best_epoch: int
    best_f1: float
    stopped_early: bool

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("a train report needs at least one epoch")
        top = max(r.validation_f1 for r in self.records)
        first = next(r.epoch for r in self.records if r.validation_f1 == top)
        if self.best_f1 != top or self.best_epoch != first:
            raise ValueError(
                f"best epoch/F1 ({self.best_epoch}, {self.best_f1}) disagree with "
                f"records ({first}, {top})"
            )

    def lines(self) -> list[str]:
        return [
            f"epoch={r.epoch} loss={r.train_loss:.6f} val_f1={r.validation_f1:.4f} "
            f"seconds={r.seconds:.2f}"
            for r in self.records
        ]

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_f1": self.best_f1,
            "stopped_early": self.stopped_early,
            "epochs": [
                {
                    "epoch": r.epoch,
                    "train_loss": r.train_loss,
                    "validation_f1": r.validation_f1,
                    "seconds": r.seconds,
                }
                for r in self.records
            ],
        }


class EarlyStopper:
    """Tracks the best validation F1 under strict ``>`` improvement and
    signals a stop after ``patience`` consecutive non-improving epochs."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_f1 = -math.inf
        self.best_epoch: int | None = None
        self.stale = 0

    def update(self, epoch: int, f1: float) -> bool:
        """Returns True when the epoch improved on the best F1 so far."""
        if f1 > self.best_f1:
            self.best_f1 = f1
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def make_batches(items: Sequence[T], batch_size: int, seed: int, epoch: int) -> list[list[T]]:
    """Split into batches after a shuffle determined by (seed, epoch).
    Every item appears exactly once; the last batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(items)))
    random.Random(f"{seed}:{epoch}").shuffle(order)
    return [
        [items[i] for i in order[start : start + batch_size]]
        for start in range(0, len(order), batch_size)
    ]


def _chunks(items: Sequence[T], size: int) -> list[list[T]]:
    return [list(items[start : start + size]) for start in range(0, len(items), size)]


def _featurize_labeled(predictor: BreakPredictor, utterances: Sequence[Utterance], role: str) -> list[Features]:
    features = []
    for utterance in utterances:
        if utterance.labels is None:
            raise ValueError(f"{role} utterance {utterance.id} has no labels")
        features.append(predictor.featurizer.featurize(utterance, utterance.tokens))
    return features


def validation_counts(
    predictor: BreakPredictor,
    features: Sequence[Features],
    batch_size: int,
    threshold: float,
) -> OutcomeCounts:
    """Micro-aggregated outcome counts over a labeled feature list."""
    was_training = predictor.training
    predictor.eval()
    total = OutcomeCounts(0, 0, 0)
    try:
        with torch.no_grad():
            for chunk in _chunks(features, batch_size):
                batch = predictor.featurizer.collate(chunk)
                probs = predictor(batch)
                for i, feats in enumerate(chunk):
                    values = [float(p) for p in probs[i, : feats.length]]
                    predicted = decide_labels(values, threshold)
                    gold = [int(y) for y in feats.labels.tolist()]
                    total = total + count_outcomes(predicted, gold)
    finally:
        predictor.train(was_training)
    return total


def train(
    predictor: BreakPredictor,
    split: CorpusSplit,
    config: TrainConfig,
    log: Callable[[str], None] | None = None,
) -> TrainReport:
    """Optimize the predictor on split.train, select the epoch with the best
    validation F1, and leave those parameters loaded on return."""
    if not predictor.config.kind.trainable:
        raise ValueError("the rule-based system is not trainable")
    if not split.train:
        raise ValueError("training split is empty")
    if not split.validation:
        raise ValueError("validation split is empty; early stopping needs one")

    torch.manual_seed(config.seed)
    train_features = _featurize_labeled(predictor, split.train, "training")
    val_features = _featurize_labeled(predictor, split.validation, "validation")
    optimizer = torch.optim.Adam(
        predictor.trainable_parameters(),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )

    stopper = EarlyStopper(config.patience)
    records: list[EpochRecord] = []
    best_state: dict[str, torch.Tensor] | None = None
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        started = time.monotonic()
        predictor.train()
        token_total = 0
        loss_total = 0.0
        for batch_id, chunk in enumerate(
            make_batches(train_features, config.batch_size, config.seed, epoch)
        ):
            batch = predictor.featurizer.collate(chunk)
            probs = predictor(batch)
            batch_loss = masked_loss(probs, batch.labels, batch.mask)
            if not torch.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss {batch_loss.item()} at epoch {epoch}, batch {batch_id}"
                )
            optimizer.zero_grad()
            batch_loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(predictor.trainable_parameters(), config.grad_clip)
            optimizer.step()
            tokens_in_batch = int(batch.mask.sum())
            token_total += tokens_in_batch
            loss_total += batch_loss.item() * tokens_in_batch

        counts = validation_counts(
            predictor, val_features, config.batch_size, config.decision_threshold
        )
        _, _, val_f1 = prf_unrounded(counts)
        improved = stopper.update(epoch, val_f1)
        if improved:
            best_state = {k: v.detach().clone() for k, v in predictor.state_dict().items()}
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_total / token_total,
            validation_f1=val_f1,
            seconds=time.monotonic() - started,
        )
        records.append(record)
        if log is not None:
            log(
                f"epoch={record.epoch} loss={record.train_loss:.6f} "
                f"val_f1={record.validation_f1:.4f} seconds={record.seconds:.2f}"
            )
        if stopper.should_stop:
            break

    if best_state is not None:
        predictor.load_state_dict(best_state)
    predictor.eval()
    return TrainReport(
        records=records,
        best_epoch=stopper.best_epoch,
        best_f1=stopper.best_f1,
        stopped_early=epochs_run < config.max_epochs,
    )


def train_system(
    system: SystemConfig,
    split: CorpusSplit,
    config: TrainConfig,
    embedding_table: EmbeddingTable | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[BreakPredictor, TrainReport]:
    """Build vocabularies from the training split, construct the predictor
    and run the training loop."""
    torch.manual_seed(config.seed)  # initial weights must follow the run seed
    vocabularies = Vocabularies.build([u.tokens for u in split.train])
    predictor = BreakPredictor(system, vocabularies, embedding_table=embedding_table)
    report = train(predictor, split, config, log=log)
    return predictor, report
