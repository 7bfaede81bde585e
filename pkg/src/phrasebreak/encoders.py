"""Feature encoders: the explicit BiLSTM encoder over token + linguistic
feature embeddings, the implicit pretrained-LM encoder returning every
hidden layer, the learnable scalar mix over those layers, subword-to-word
pooling, and the concatenating fusion of both feature streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import torch
from torch import Tensor, nn

from .lexfeat import SubwordAlignment


class SequenceTooLongError(ValueError):
    """Subword sequence exceeds the LM's maximum position count."""


@dataclass
class BiLstmEncoderConfig:
    layers: int = 2
    hidden_per_direction: int = 256  # bidirectional output is 2x this
    token_embedding_dim: int = 128
    feature_embedding_dim: int = 32  # POS, relation and head-distance features
    use_linguistic_features: bool = False
    use_pretrained_word_embeddings: bool = False
    pretrained_embedding_dim: int = 0

    def __post_init__(self) -> None:
        for name in ("layers", "hidden_per_direction", "token_embedding_dim", "feature_embedding_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.use_pretrained_word_embeddings and self.pretrained_embedding_dim <= 0:
            raise ValueError(
                "pretrained_embedding_dim must be positive when "
                "use_pretrained_word_embeddings is set"
            )

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_per_direction


@dataclass
class LmEncoderConfig:
    checkpoint_id: str
    layer_count: int
    hidden_dim: int
    finetune: bool = True

    def __post_init__(self) -> None:
        if self.layer_count < 1:
            raise ValueError(f"layer_count must be >= 1, got {self.layer_count}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")

    @classmethod
    def from_checkpoint(cls, checkpoint_id: str, finetune: bool = True) -> "LmEncoderConfig":
        from transformers import AutoConfig

        lm_config = AutoConfig.from_pretrained(checkpoint_id)
        return cls(
            checkpoint_id=checkpoint_id,
            layer_count=int(lm_config.num_hidden_layers),
            hidden_dim=int(lm_config.hidden_size),
            finetune=finetune,
        )


class ScalarMix(nn.Module):
    """Learnable softmax-normalized weighting of encoder layers with a
    global scale: output = gamma * sum_k softmax(raw_weights)_k * layer_k.
    """

    def __init__(self, layer_count: int):
        super().__init__()
        if layer_count < 1:
            raise ValueError(f"layer_count must be >= 1, got {layer_count}")
        self.layer_count = layer_count
        self.raw_weights = nn.Parameter(torch.zeros(layer_count))
        self.gamma = nn.Parameter(torch.ones(()))

    def normalized_weights(self) -> Tensor:
        return torch.softmax(self.raw_weights, dim=0)

    def forward(self, layers: Sequence[Tensor]) -> Tensor:
        if len(layers) != self.layer_count:
            raise ValueError(f"expected {self.layer_count} layers, got {len(layers)}")
        weights = self.normalized_weights()
        mixed = layers[0] * weights[0]
        for k in range(1, self.layer_count):
            mixed = mixed + layers[k] * weights[k]
        return self.gamma * mixed


def mix_layers(layers: Sequence[Tensor], mix: ScalarMix) -> Tensor:
    """Weighted average of same-shaped layer matrices via ``mix``."""
    if not layers:
        raise ValueError("mix_layers needs at least one layer")
    shape = layers[0].shape
    for k, layer in enumerate(layers):
        if layer.shape != shape:
            raise ValueError(f"layer {k} has shape {tuple(layer.shape)}, expected {tuple(shape)}")
    return mix(layers)


def pool_to_words(
    subword_vectors: Tensor,
    alignment: SubwordAlignment,
    mode: Literal["mean", "first"] = "mean",
) -> Tensor:
    """Reduce (subword_count, dim) rows to one row per word token.

    ``mean`` averages each span; ``first`` keeps the span's first subword.
    """
    if subword_vectors.shape[0] != alignment.subword_count:
        raise ValueError(
            f"{subword_vectors.shape[0]} subword rows for alignment covering "
            f"{alignment.subword_count}"
        )
    if mode == "mean":
        rows = [subword_vectors[start:end].mean(dim=0) for start, end in alignment.spans]
    elif mode == "first":
        rows = [subword_vectors[start] for start, end in alignment.spans]
    else:
        raise ValueError(f"unknown pooling mode {mode!r}")
    return torch.stack(rows, dim=0)


def fuse(explicit: Tensor, implicit: Tensor) -> Tensor:
    """Columnwise concatenation, explicit features first."""
    if explicit.shape[0] != implicit.shape[0]:
        raise ValueError(
            f"row-count mismatch: explicit {explicit.shape[0]} vs implicit {implicit.shape[0]}"
        )
    return torch.cat([explicit, implicit], dim=-1)


class BiLstmEncoder(nn.Module):
    """Bidirectional LSTM over concatenated token, pretrained-word and
    linguistic-feature embeddings. Padded positions are excluded from the
    recurrence via packing, so outputs at real positions do not depend on
    the amount of padding.
    """

    def __init__(
        self,
        config: BiLstmEncoderConfig,
        token_vocab_size: int,
        pos_vocab_size: int = 0,
        rel_vocab_size: int = 0,
        dist_bucket_count: int = 0,
    ):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(token_vocab_size, config.token_embedding_dim)
        input_dim = config.token_embedding_dim
        if config.use_pretrained_word_embeddings:
            input_dim += config.pretrained_embedding_dim
        if config.use_linguistic_features:
            if min(pos_vocab_size, rel_vocab_size, dist_bucket_count) <= 0:
                raise ValueError("linguistic features need pos/rel/distance vocabulary sizes")
            self.pos_embedding = nn.Embedding(pos_vocab_size, config.feature_embedding_dim)
            self.rel_embedding = nn.Embedding(rel_vocab_size, config.feature_embedding_dim)
            self.dist_embedding = nn.Embedding(dist_bucket_count, config.feature_embedding_dim)
            input_dim += 3 * config.feature_embedding_dim
        self.lstm = nn.LSTM(
            input_dim,
            config.hidden_per_direction,
            num_layers=config.layers,
            bidirectional=True,
            batch_first=True,
        )

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def forward(
        self,
        token_ids: Tensor,
        lengths: Tensor,
        pos_ids: Tensor | None = None,
        rel_ids: Tensor | None = None,
        dist_ids: Tensor | None = None,
        pretrained: Tensor | None = None,
    ) -> Tensor:
        """token_ids: (batch, max_len); lengths: (batch,); returns
        (batch, max_len, 2 * hidden_per_direction)."""
        parts = [self.token_embedding(token_ids)]
        if self.config.use_pretrained_word_embeddings:
            if pretrained is None:
                raise ValueError("config expects pretrained word embeddings, none supplied")
            if pretrained.shape[:2] != token_ids.shape:
                raise ValueError(
                    f"pretrained embeddings shaped {tuple(pretrained.shape)} do not match "
                    f"token ids {tuple(token_ids.shape)}"
                )
            if pretrained.shape[-1] != self.config.pretrained_embedding_dim:
                raise ValueError(
                    f"pretrained embedding dim {pretrained.shape[-1]} != configured "
                    f"{self.config.pretrained_embedding_dim}"
                )
            parts.append(pretrained)
        if self.config.use_linguistic_features:
            if pos_ids is None or rel_ids is None or dist_ids is None:
                raise ValueError("config expects linguistic features, got None")
            parts.append(self.pos_embedding(pos_ids))
            parts.append(self.rel_embedding(rel_ids))
            parts.append(self.dist_embedding(dist_ids))
        inputs = torch.cat(parts, dim=-1)
        packed = nn.utils.rnn.pack_padded_sequence(
            inputs, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        outputs, _ = self.lstm(packed)
        unpacked, _ = nn.utils.rnn.pad_packed_sequence(
            outputs, batch_first=True, total_length=token_ids.shape[1]
        )
        return unpacked


class LmEncoder(nn.Module):
    """Pretrained masked-LM encoder exposing every hidden layer.

    The checkpoint (model + tokenizer) is loaded from ``checkpoint_id`` in
    its native directory layout. Sequence-start/end marker positions are
    added internally and stripped from every returned layer, so outputs
    align 1:1 with the input subwords.
    """

    def __init__(self, config: LmEncoderConfig):
        super().__init__()
        from transformers import AutoModel, AutoTokenizer

        self.config = config
        self.lm = AutoModel.from_pretrained(config.checkpoint_id)
        self.tokenizer = AutoTokenizer.from_pretrained(config.checkpoint_id)
        actual_layers = int(self.lm.config.num_hidden_layers)
        actual_hidden = int(self.lm.config.hidden_size)
        if actual_layers != config.layer_count or actual_hidden != config.hidden_dim:
            raise ValueError(
                f"checkpoint {config.checkpoint_id!r} has {actual_layers} layers x "
                f"{actual_hidden} dims, config says {config.layer_count} x {config.hidden_dim}"
            )
        if not config.finetune:
            for param in self.lm.parameters():
                param.requires_grad = False

    def train(self, mode: bool = True) -> "LmEncoder":
        # a frozen LM stays in eval mode so its dropout is never active
        super().train(mode and self.config.finetune)
        return self

    @property
    def max_positions(self) -> int:
        return int(self.lm.config.max_position_embeddings)

    @property
    def hidden_dim(self) -> int:
        return self.config.hidden_dim

    def forward(self, input_ids: Tensor, attention_mask: Tensor) -> list[Tensor]:
        """input_ids: (batch, seq) including start/end markers. Returns the
        layer_count transformer layer outputs, marker positions stripped:
        each (batch, seq - 2, hidden_dim)."""
        outputs = self.lm(
            input_ids=input_ids, attention_mask=attention_mask, output_hidden_states=True
        )
        # hidden_states[0] is the embedding output; the transformer layers follow
        return [layer[:, 1:-1, :] for layer in outputs.hidden_states[1:]]

    def encode_implicit(self, subword_ids: Sequence[int]) -> list[Tensor]:
        """Encode one subword-id sequence (markers not included) and return
        all layer_count matrices of shape (subword_count, hidden_dim)."""
        if len(subword_ids) == 0:
            raise ValueError("cannot encode an empty subword sequence")
        if len(subword_ids) + 2 > self.max_positions:
            raise SequenceTooLongError(
                f"{len(subword_ids)} subwords + markers exceed the LM's "
                f"{self.max_positions} positions"
            )
        ids = [self.tokenizer.cls_token_id, *subword_ids, self.tokenizer.sep_token_id]
        input_ids = torch.tensor([ids], dtype=torch.long)
        mask = torch.ones_like(input_ids)
        layers = self(input_ids, mask)
        return [layer[0] for layer in layers]
