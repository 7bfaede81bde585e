"""Per-token break classifiers: the punctuation rule baseline and the five
trainable systems built from the BiLSTM and pretrained-LM encoders, plus
vocabulary handling, featurization, batching, the training objective and
checkpoint archive IO.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import warnings
import zipfile
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Literal, Sequence

import torch
from torch import Tensor, nn

from .corpus import Utterance
from .encoders import (
    BiLstmEncoder,
    BiLstmEncoderConfig,
    LmEncoder,
    LmEncoderConfig,
    ScalarMix,
    SequenceTooLongError,
    fuse,
    pool_to_words,
)
from .lexfeat import (
    HEAD_DISTANCE_BUCKET_COUNT,
    AnnotatedToken,
    EmbeddingTable,
    SubwordAlignment,
    format_embedding_table,
    head_distance_bucket,
    parse_embedding_table,
)

PAD = "<pad>"
UNK = "<unk>"

CHECKPOINT_FORMAT_VERSION = 1


class FingerprintMismatchError(RuntimeError):
    """A checkpoint was produced under a different annotator, LM or
    vocabulary than the one it is being used with."""


class SystemKind(str, Enum):
    RULE_BASED = "rule-based"
    BILSTM_TOKENS = "bilstm-tokens"
    BILSTM_FEATURES = "bilstm-features"
    LM_ONLY = "lm"
    BILSTM_TOKENS_PLUS_LM = "bilstm-tokens+lm"
    BILSTM_FEATURES_PLUS_LM = "bilstm-features+lm"

    @property
    def uses_bilstm(self) -> bool:
        return self in (
            SystemKind.BILSTM_TOKENS,
            SystemKind.BILSTM_FEATURES,
            SystemKind.BILSTM_TOKENS_PLUS_LM,
            SystemKind.BILSTM_FEATURES_PLUS_LM,
        )

    @property
    def uses_lm(self) -> bool:
        return self in (
            SystemKind.LM_ONLY,
            SystemKind.BILSTM_TOKENS_PLUS_LM,
            SystemKind.BILSTM_FEATURES_PLUS_LM,
        )

    @property
    def uses_linguistic_features(self) -> bool:
        return self in (SystemKind.BILSTM_FEATURES, SystemKind.BILSTM_FEATURES_PLUS_LM)

    @property
    def trainable(self) -> bool:
        return self is not SystemKind.RULE_BASED


@dataclass
class SystemConfig:
    kind: SystemKind
    bilstm: BiLstmEncoderConfig | None = None
    lm: LmEncoderConfig | None = None
    classifier_hidden: int = 256  # 0 = direct linear projection
    pooling: Literal["mean", "first"] = "mean"

    def __post_init__(self) -> None:
        if self.classifier_hidden < 0:
            raise ValueError(f"classifier_hidden must be >= 0, got {self.classifier_hidden}")
        if self.kind.uses_bilstm != (self.bilstm is not None):
            raise ValueError(f"{self.kind.value}: bilstm config {'required' if self.kind.uses_bilstm else 'not used'}")
        if self.kind.uses_lm != (self.lm is not None):
            raise ValueError(f"{self.kind.value}: lm config {'required' if self.kind.uses_lm else 'not used'}")
        if self.bilstm is not None and self.bilstm.use_linguistic_features != self.kind.uses_linguistic_features:
            raise ValueError(
                f"{self.kind.value}: bilstm.use_linguistic_features must be "
                f"{self.kind.uses_linguistic_features}"
            )
        if self.pooling not in ("mean", "first"):
            raise ValueError(f"unknown pooling {self.pooling!r}")

    @property
    def classifier_input_dim(self) -> int:
        width = 0
        if self.bilstm is not None:
            width += self.bilstm.output_dim
        if self.lm is not None:
            width += self.lm.hidden_dim
        if width == 0:
            raise ValueError("rule-based system has no classifier")
        return width

    @classmethod
    def build(
        cls,
        kind: SystemKind,
        lm_checkpoint: str | None = None,
        lm_finetune: bool = True,
        pretrained_embedding_dim: int = 0,
        classifier_hidden: int = 256,
        bilstm: BiLstmEncoderConfig | None = None,
        pooling: Literal["mean", "first"] = "mean",
    ) -> "SystemConfig":
        """Assemble a coherent config for ``kind`` with default encoder
        shapes; ``lm_checkpoint`` is required for the LM-bearing systems."""
        if kind.uses_bilstm and bilstm is None:
            bilstm = BiLstmEncoderConfig(
                use_linguistic_features=kind.uses_linguistic_features,
                use_pretrained_word_embeddings=pretrained_embedding_dim > 0,
                pretrained_embedding_dim=pretrained_embedding_dim,
            )
        lm = None
        if kind.uses_lm:
            if lm_checkpoint is None:
                raise ValueError(f"{kind.value} needs an LM checkpoint")
            lm = LmEncoderConfig.from_checkpoint(lm_checkpoint, finetune=lm_finetune)
        return cls(
            kind=kind,
            bilstm=bilstm if kind.uses_bilstm else None,
            lm=lm,
            classifier_hidden=classifier_hidden,
            pooling=pooling,
        )

    def to_dict(self) -> dict:
        payload: dict = {
            "kind": self.kind.value,
            "classifier_hidden": self.classifier_hidden,
            "pooling": self.pooling,
        }
        if self.bilstm is not None:
            payload["bilstm"] = dict(vars(self.bilstm))
        if self.lm is not None:
            payload["lm"] = dict(vars(self.lm))
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "SystemConfig":
        bilstm = payload.get("bilstm")
        lm = payload.get("lm")
        return cls(
            kind=SystemKind(payload["kind"]),
            bilstm=BiLstmEncoderConfig(**bilstm) if bilstm else None,
            lm=LmEncoderConfig(**lm) if lm else None,
            classifier_hidden=payload["classifier_hidden"],
            pooling=payload.get("pooling", "mean"),
        )


@dataclass(frozen=True)
class Vocabularies:
    """Closed id maps built from training data; index 0 is padding and
    index 1 the out-of-vocabulary fallback."""

    tokens: tuple[str, ...]
    pos_tags: tuple[str, ...]
    relations: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in ("tokens", "pos_tags", "relations"):
            entries = getattr(self, name)
            if entries[:2] != (PAD, UNK):
                raise ValueError(f"{name} must start with {PAD!r}, {UNK!r}")
            if len(set(entries)) != len(entries):
                raise ValueError(f"{name} contains duplicates")

    @cached_property
    def _token_ids(self) -> dict[str, int]:
        return {entry: i for i, entry in enumerate(self.tokens)}

    @cached_property
    def _pos_ids(self) -> dict[str, int]:
        return {entry: i for i, entry in enumerate(self.pos_tags)}

    @cached_property
    def _rel_ids(self) -> dict[str, int]:
        return {entry: i for i, entry in enumerate(self.relations)}

    def token_id(self, surface: str) -> int:
        return self._token_ids.get(surface, 1)

    def pos_id(self, pos: str) -> int:
        return self._pos_ids.get(pos, 1)

    def rel_id(self, rel: str) -> int:
        return self._rel_ids.get(rel, 1)

    @classmethod
    def build(cls, annotated: Sequence[Sequence[AnnotatedToken]]) -> "Vocabularies":
        surfaces: set[str] = set()
        pos_tags: set[str] = set()
        relations: set[str] = set()
        for tokens in annotated:
            for tok in tokens:
                surfaces.add(tok.surface)
                pos_tags.add(tok.pos)
                relations.add(tok.dep_rel)
        specials = (PAD, UNK)
        return cls(
            tokens=specials + tuple(sorted(surfaces - set(specials))),
            pos_tags=specials + tuple(sorted(pos_tags - set(specials))),
            relations=specials + tuple(sorted(relations - set(specials))),
        )

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for section in (self.tokens, self.pos_tags, self.relations):
            for entry in section:
                digest.update(entry.encode("utf-8"))
                digest.update(b"\0")
            digest.update(b"\x01")
        return digest.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "pos_tags": list(self.pos_tags),
            "relations": list(self.relations),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabularies":
        return cls(
            tokens=tuple(payload["tokens"]),
            pos_tags=tuple(payload["pos_tags"]),
            relations=tuple(payload["relations"]),
        )


@dataclass(frozen=True)
class Prediction:
    probabilities: tuple[float, ...]
    labels: tuple[int, ...]
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if len(self.probabilities) != len(self.labels):
            raise ValueError(
                f"{len(self.probabilities)} probabilities vs {len(self.labels)} labels"
            )
        for p, y in zip(self.probabilities, self.labels):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
            if y != (1 if p >= self.threshold else 0):
                raise ValueError(f"label {y} inconsistent with probability {p} at threshold {self.threshold}")


def decide_labels(probabilities: Sequence[float], threshold: float = 0.5) -> tuple[int, ...]:
    return tuple(1 if p >= threshold else 0 for p in probabilities)


def rule_based_predict(tokens: Sequence[AnnotatedToken]) -> Prediction:
    """Break after every punctuation token; the final token never carries a
    break, matching the corpus labeling convention."""
    probs = [1.0 if tok.is_punct else 0.0 for tok in tokens]
    if probs:
        probs[-1] = 0.0
    return Prediction(
        probabilities=tuple(probs), labels=decide_labels(probs), threshold=0.5
    )


def loss(probabilities, labels) -> Tensor:
    """Mean binary cross-entropy over tokens, probabilities clamped to
    [1e-7, 1 - 1e-7]. Differentiable when given a tensor."""
    if not torch.is_tensor(probabilities):
        probabilities = torch.tensor([float(p) for p in probabilities], dtype=torch.float64)
    if not torch.is_tensor(labels):
        labels = torch.tensor([float(y) for y in labels], dtype=probabilities.dtype)
    labels = labels.to(probabilities.dtype)
    if probabilities.shape != labels.shape:
        raise ValueError(f"shape mismatch: {tuple(probabilities.shape)} vs {tuple(labels.shape)}")
    if probabilities.numel() == 0:
        raise ValueError("loss of an empty sequence is undefined")
    p = probabilities.clamp(1e-7, 1.0 - 1e-7)
    return -(labels * p.log() + (1.0 - labels) * (1.0 - p).log()).mean()


def masked_loss(probabilities: Tensor, labels: Tensor, mask: Tensor) -> Tensor:
    """Flat mean of per-token cross-entropy over real (unmasked) positions,
    so a padded batch scores exactly like the token-weighted mean of its
    members evaluated alone."""
    if mask.sum() == 0:
        raise ValueError("mask selects no tokens")
    p = probabilities.clamp(1e-7, 1.0 - 1e-7)
    elementwise = -(labels * p.log() + (1.0 - labels) * (1.0 - p).log())
    return elementwise[mask].mean()


@dataclass
class Features:
    """One utterance turned into model inputs."""

    utterance_id: str
    length: int
    token_ids: Tensor
    punct: Tensor
    pos_ids: Tensor | None = None
    rel_ids: Tensor | None = None
    dist_ids: Tensor | None = None
    pretrained: Tensor | None = None
    subword_ids: list[int] | None = None
    alignment: SubwordAlignment | None = None
    labels: Tensor | None = None


@dataclass
class Batch:
    utterance_ids: list[str]
    lengths: Tensor
    mask: Tensor
    token_ids: Tensor
    punct: Tensor
    pos_ids: Tensor | None = None
    rel_ids: Tensor | None = None
    dist_ids: Tensor | None = None
    pretrained: Tensor | None = None
    lm_input_ids: Tensor | None = None
    lm_attention_mask: Tensor | None = None
    subword_lengths: list[int] | None = None
    alignments: list[SubwordAlignment] | None = None
    labels: Tensor | None = None

    @property
    def size(self) -> int:
        return len(self.utterance_ids)


class Featurizer:
    """Maps annotated utterances onto the tensors each system consumes."""

    def __init__(
        self,
        config: SystemConfig,
        vocabularies: Vocabularies,
        embedding_table: EmbeddingTable | None = None,
        tokenizer=None,
        max_subword_positions: int | None = None,
    ):
        self.config = config
        self.vocabularies = vocabularies
        self.embedding_table = embedding_table
        self.tokenizer = tokenizer
        self.max_subword_positions = max_subword_positions
        bilstm = config.bilstm
        if bilstm is not None and bilstm.use_pretrained_word_embeddings:
            if embedding_table is None:
                raise ValueError("config expects a pretrained embedding table")
            if embedding_table.dimension != bilstm.pretrained_embedding_dim:
                raise ValueError(
                    f"embedding table dimension {embedding_table.dimension} != configured "
                    f"{bilstm.pretrained_embedding_dim}"
                )
        if config.kind.uses_lm and tokenizer is None:
            raise ValueError(f"{config.kind.value} needs the LM tokenizer")

    def subwordize(self, tokens: Sequence[AnnotatedToken]) -> tuple[list[int], SubwordAlignment]:
        """Tokenize word by word so every word owns a contiguous subword
        span even when pieces degrade to the unknown marker."""
        ids: list[int] = []
        spans: list[tuple[int, int]] = []
        for tok in tokens:
            pieces = self.tokenizer.tokenize(tok.surface)
            if not pieces:
                pieces = [self.tokenizer.unk_token]
            start = len(ids)
            ids.extend(self.tokenizer.convert_tokens_to_ids(pieces))
            spans.append((start, len(ids)))
        return ids, SubwordAlignment(spans=tuple(spans))

    def featurize(self, utterance: Utterance, tokens: Sequence[AnnotatedToken]) -> Features:
        if len(tokens) != len(utterance.tokens):
            raise ValueError(
                f"{utterance.id}: {len(tokens)} annotated tokens for "
                f"{len(utterance.tokens)} surfaces"
            )
        vocab = self.vocabularies
        feats = Features(
            utterance_id=utterance.id,
            length=len(tokens),
            token_ids=torch.tensor([vocab.token_id(t.surface) for t in tokens], dtype=torch.long),
            punct=torch.tensor([t.is_punct for t in tokens], dtype=torch.bool),
        )
        if utterance.labels is not None:
            feats.labels = torch.tensor([float(y) for y in utterance.labels])
        bilstm = self.config.bilstm
        if bilstm is not None and bilstm.use_linguistic_features:
            feats.pos_ids = torch.tensor([vocab.pos_id(t.pos) for t in tokens], dtype=torch.long)
            feats.rel_ids = torch.tensor([vocab.rel_id(t.dep_rel) for t in tokens], dtype=torch.long)
            feats.dist_ids = torch.tensor(
                [head_distance_bucket(i, t.dep_head) for i, t in enumerate(tokens)],
                dtype=torch.long,
            )
        if bilstm is not None and bilstm.use_pretrained_word_embeddings:
            rows = [self.embedding_table.row_index(t.surface) for t in tokens]
            feats.pretrained = torch.from_numpy(self.embedding_table.vectors[rows])
        if self.config.kind.uses_lm:
            ids, alignment = self.subwordize(tokens)
            limit = self.max_subword_positions
            if limit is not None and len(ids) + 2 > limit:
                raise SequenceTooLongError(
                    f"{utterance.id}: {len(ids)} subwords + markers exceed the LM's "
                    f"{limit} positions"
                )
            feats.subword_ids = ids
            feats.alignment = alignment
        return feats

    def collate(self, features: Sequence[Features], pad_to: int | None = None) -> Batch:
        if not features:
            raise ValueError("cannot collate an empty batch")
        size = len(features)
        max_len = max(f.length for f in features)
        if pad_to is not None:
            if pad_to < max_len:
                raise ValueError(f"pad_to={pad_to} below longest utterance ({max_len})")
            max_len = pad_to
        batch = Batch(
            utterance_ids=[f.utterance_id for f in features],
            lengths=torch.tensor([f.length for f in features], dtype=torch.long),
            mask=torch.zeros(size, max_len, dtype=torch.bool),
            token_ids=torch.zeros(size, max_len, dtype=torch.long),
            punct=torch.zeros(size, max_len, dtype=torch.bool),
        )
        for i, f in enumerate(features):
            batch.mask[i, : f.length] = True
            batch.token_ids[i, : f.length] = f.token_ids
            batch.punct[i, : f.length] = f.punct
        if features[0].pos_ids is not None:
            batch.pos_ids = torch.zeros(size, max_len, dtype=torch.long)
            batch.rel_ids = torch.zeros(size, max_len, dtype=torch.long)
            batch.dist_ids = torch.zeros(size, max_len, dtype=torch.long)
            for i, f in enumerate(features):
                batch.pos_ids[i, : f.length] = f.pos_ids
                batch.rel_ids[i, : f.length] = f.rel_ids
                batch.dist_ids[i, : f.length] = f.dist_ids
        if features[0].pretrained is not None:
            dim = features[0].pretrained.shape[1]
            batch.pretrained = torch.zeros(size, max_len, dim)
            for i, f in enumerate(features):
                batch.pretrained[i, : f.length] = f.pretrained
        if features[0].subword_ids is not None:
            pad_id = self.tokenizer.pad_token_id or 0
            max_sub = max(len(f.subword_ids) for f in features)
            batch.lm_input_ids = torch.full((size, max_sub + 2), pad_id, dtype=torch.long)
            batch.lm_attention_mask = torch.zeros(size, max_sub + 2, dtype=torch.long)
            for i, f in enumerate(features):
                row = [self.tokenizer.cls_token_id, *f.subword_ids, self.tokenizer.sep_token_id]
                batch.lm_input_ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
                batch.lm_attention_mask[i, : len(row)] = 1
            batch.subword_lengths = [len(f.subword_ids) for f in features]
            batch.alignments = [f.alignment for f in features]
        if all(f.labels is not None for f in features):
            batch.labels = torch.zeros(size, max_len)
            for i, f in enumerate(features):
                batch.labels[i, : f.length] = f.labels
        return batch


class BreakPredictor(nn.Module):
    """Binary per-token break classifier covering all six system kinds.

    ``forward`` yields one break probability per token position; padded
    positions are garbage and must be masked by the caller.
    """

    def __init__(
        self,
        config: SystemConfig,
        vocabularies: Vocabularies,
        embedding_table: EmbeddingTable | None = None,
    ):
        super().__init__()
        self.config = config
        self.vocabularies = vocabularies
        self.embedding_table = embedding_table
        self.bilstm: BiLstmEncoder | None = None
        self.lm: LmEncoder | None = None
        self.scalar_mix: ScalarMix | None = None
        self.classifier: nn.Module | None = None
        if config.bilstm is not None:
            self.bilstm = BiLstmEncoder(
                config.bilstm,
                token_vocab_size=len(vocabularies.tokens),
                pos_vocab_size=len(vocabularies.pos_tags),
                rel_vocab_size=len(vocabularies.relations),
                dist_bucket_count=HEAD_DISTANCE_BUCKET_COUNT,
            )
        if config.lm is not None:
            self.lm = LmEncoder(config.lm)
            self.scalar_mix = ScalarMix(config.lm.layer_count)
        if config.kind.trainable:
            in_dim = config.classifier_input_dim
            if config.classifier_hidden > 0:
                self.classifier = nn.Sequential(
                    nn.Linear(in_dim, config.classifier_hidden),
                    nn.Tanh(),
                    nn.Linear(config.classifier_hidden, 1),
                )
            else:
                self.classifier = nn.Linear(in_dim, 1)
        self.featurizer = Featurizer(
            config,
            vocabularies,
            embedding_table=embedding_table,
            tokenizer=self.lm.tokenizer if self.lm is not None else None,
            max_subword_positions=self.lm.max_positions if self.lm is not None else None,
        )

    def forward(self, batch: Batch) -> Tensor:
        """Returns (batch, max_len) break probabilities."""
        if not self.config.kind.trainable:
            probs = batch.punct.float()
            rows = torch.arange(batch.size)
            probs[rows, batch.lengths - 1] = 0.0
            return probs
        streams: list[Tensor] = []
        if self.bilstm is not None:
            streams.append(
                self.bilstm(
                    batch.token_ids,
                    batch.lengths,
                    pos_ids=batch.pos_ids,
                    rel_ids=batch.rel_ids,
                    dist_ids=batch.dist_ids,
                    pretrained=batch.pretrained,
                )
            )
        if self.lm is not None:
            layers = self.lm(batch.lm_input_ids, batch.lm_attention_mask)
            mixed = self.scalar_mix(layers)
            max_len = batch.token_ids.shape[1]
            pooled = mixed.new_zeros(batch.size, max_len, self.lm.hidden_dim)
            for i, alignment in enumerate(batch.alignments):
                words = pool_to_words(
                    mixed[i, : batch.subword_lengths[i]], alignment, self.config.pooling
                )
                pooled[i, : words.shape[0]] = words
            streams.append(pooled)
        hidden = streams[0] if len(streams) == 1 else fuse(*streams)
        logits = self.classifier(hidden).squeeze(-1)
        return torch.sigmoid(logits)

    def predict_utterance(
        self,
        utterance: Utterance,
        tokens: Sequence[AnnotatedToken],
        threshold: float = 0.5,
    ) -> Prediction:
        """Deterministic single-utterance inference."""
        if not self.config.kind.trainable:
            return rule_based_predict(tokens)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                feats = self.featurizer.featurize(utterance, tokens)
                batch = self.featurizer.collate([feats])
                probs = self(batch)[0, : feats.length]
        finally:
            self.train(was_training)
        values = tuple(float(p) for p in probs)
        return Prediction(
            probabilities=values, labels=decide_labels(values, threshold), threshold=threshold
        )

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def lm_fingerprint(encoder: LmEncoder) -> str:
    """Content fingerprint of the LM: architecture config plus tokenizer
    vocabulary, independent of the checkpoint's filesystem path."""
    digest = hashlib.sha256()
    config_payload = json.dumps(encoder.lm.config.to_dict(), sort_keys=True, default=str)
    digest.update(config_payload.encode("utf-8"))
    for piece, idx in sorted(encoder.tokenizer.get_vocab().items()):
        digest.update(f"{piece}\t{idx}\n".encode("utf-8"))
    return digest.hexdigest()[:16]


def collect_fingerprints(
    predictor: BreakPredictor, annotator_fingerprint: str
) -> dict[str, str | None]:
    return {
        "annotator": annotator_fingerprint,
        "lm": lm_fingerprint(predictor.lm) if predictor.lm is not None else None,
        "vocabularies": predictor.vocabularies.fingerprint(),
        "embeddings": (
            predictor.embedding_table.fingerprint()
            if predictor.embedding_table is not None
            else None
        ),
    }


def verify_fingerprints(
    stored: dict[str, str | None], actual: dict[str, str | None], strict: bool = True
) -> None:
    """Compare stored checkpoint fingerprints against the live environment;
    mismatches raise when strict, warn otherwise."""
    for name in sorted(set(stored) | set(actual)):
        expected, found = stored.get(name), actual.get(name)
        if expected == found:
            continue
        message = f"fingerprint mismatch for {name}: checkpoint has {expected!r}, environment has {found!r}"
        if strict:
            raise FingerprintMismatchError(message)
        warnings.warn(message, stacklevel=2)


@dataclass
class CheckpointMetadata:
    config: SystemConfig
    decision_threshold: float
    fingerprints: dict[str, str | None]
    extra: dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    predictor: BreakPredictor,
    annotator_fingerprint: str,
    decision_threshold: float = 0.5,
    extra: dict | None = None,
) -> None:
    """Write a self-contained archive: config and threshold as JSON text,
    parameters as a torch state dict, fingerprints, vocabularies and any
    bundled pretrained embedding table."""
    path = Path(path)
    if not predictor.config.kind.trainable:
        raise ValueError("the rule-based system has no parameters to checkpoint")
    weights = io.BytesIO()
    torch.save(predictor.state_dict(), weights)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "system": predictor.config.to_dict(),
        "decision_threshold": decision_threshold,
        "extra": extra or {},
    }
    fingerprints = collect_fingerprints(predictor, annotator_fingerprint)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as archive:
            archive.writestr("config.json", json.dumps(manifest, indent=2, ensure_ascii=False))
            archive.writestr(
                "fingerprints.json", json.dumps(fingerprints, indent=2, ensure_ascii=False)
            )
            archive.writestr(
                "vocabularies.json",
                json.dumps(predictor.vocabularies.to_dict(), indent=2, ensure_ascii=False),
            )
            archive.writestr("weights.pt", weights.getvalue())
            if predictor.embedding_table is not None:
                archive.writestr("embeddings.txt", format_embedding_table(predictor.embedding_table))
        tmp.replace(path)
    finally:
        tmp.unlink(missing_ok=True)


def load_checkpoint(path: str | Path) -> tuple[BreakPredictor, CheckpointMetadata]:
    """Rebuild the predictor from an archive and verify that the reloaded
    LM still matches the stored fingerprint."""
    path = Path(path)
    with zipfile.ZipFile(path) as archive:
        manifest = json.loads(archive.read("config.json"))
        fingerprints = json.loads(archive.read("fingerprints.json"))
        vocabularies = Vocabularies.from_dict(json.loads(archive.read("vocabularies.json")))
        weights = archive.read("weights.pt")
        table = None
        if "embeddings.txt" in archive.namelist():
            table = parse_embedding_table(
                archive.read("embeddings.txt").decode("utf-8"), source=f"{path}!embeddings.txt"
            )
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version!r}")
    config = SystemConfig.from_dict(manifest["system"])
    predictor = BreakPredictor(config, vocabularies, embedding_table=table)
    state = torch.load(io.BytesIO(weights), weights_only=True)
    predictor.load_state_dict(state)
    predictor.eval()
    if predictor.lm is not None:
        stored_lm = fingerprints.get("lm")
        actual_lm = lm_fingerprint(predictor.lm)
        if stored_lm != actual_lm:
            raise FingerprintMismatchError(
                f"{path}: LM fingerprint {actual_lm!r} does not match stored {stored_lm!r}"
            )
    metadata = CheckpointMetadata(
        config=config,
        decision_threshold=float(manifest["decision_threshold"]),
        fingerprints=fingerprints,
        extra=manifest.get("extra", {}),
    )
    return predictor, metadata
