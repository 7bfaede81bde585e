import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import numpy as np
import pytest
import torch

from phrasebreak.lexfeat import EmbeddingTable, LexiconAnnotator

import synth


def pytest_configure(config):
    try:
        from transformers.utils import logging as hf_logging

        hf_logging.disable_progress_bar()
    except Exception:
        pass


@pytest.fixture(scope="session")
def annotator():
    return LexiconAnnotator()


@pytest.fixture(scope="session")
def tiny_lm_dir(tmp_path_factory):
    """A 3-layer, 32-dim BERT with a character vocabulary covering the
    synthetic corpus, saved locally so tests stay offline."""
    from transformers import BertConfig, BertModel, BertTokenizer

    directory = tmp_path_factory.mktemp("tiny-lm")
    chars = synth.corpus_characters()
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += chars + [f"##{c}" for c in chars]
    (directory / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=3,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=96,
    )
    torch.manual_seed(7)
    model = BertModel(config)
    model.save_pretrained(directory)
    tokenizer = BertTokenizer(str(directory / "vocab.txt"))
    tokenizer.save_pretrained(directory)
    return str(directory)


@pytest.fixture(scope="session")
def word_embedding_table():
    """Deterministic 16-dim vectors for most synthetic vocabulary words;
    a few words are left out to exercise the unknown row."""
    rng = np.random.default_rng(20240811)
    words = [w for w in synth.ALL_WORDS if w not in ("映画", "音楽")]
    rows = [(w, rng.standard_normal(16).astype(np.float32)) for w in words]
    return EmbeddingTable.from_rows(rows)
