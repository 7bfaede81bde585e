"""Linguistic feature extraction: tokenization, POS/dependency annotation,
pretrained word-embedding lookup, and LM-subword-to-word alignment.

Annotation is delegated to pluggable adapters so that real morphological
analyzers can be swapped in; the pinned default is a small deterministic
lexicon-based adapter that needs no external resources.
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

# POS tag categories treated as punctuation. These are tag names, not a
# character list: 補助記号/記号 per UniDic-style tag sets, PUNCT/SYM per UD.
PUNCT_POS_TAGS = frozenset({"補助記号", "記号", "PUNCT", "SYM"})

ROOT_HEAD = -1


class AnnotationError(ValueError):
    """Annotator failure, carrying the offending sentence (id)."""


class AlignmentError(ValueError):
    """Subword sequence cannot be aligned to the word tokens."""


@dataclass(frozen=True)
class AnnotatedToken:
    """One word token with its linguistic annotations.

    ``dep_head`` is a 0-based token index, or -1 for the root.
    ``subword_span`` is a half-open [start, end) range into the utterance's
    LM subword sequence; None until alignment has been computed.
    """

    surface: str
    pos: str
    dep_head: int = ROOT_HEAD
    dep_rel: str = "dep"
    is_punct: bool = False
    subword_span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.dep_head < ROOT_HEAD:
            raise ValueError(f"dep_head must be >= -1, got {self.dep_head}")
        if self.subword_span is not None:
            start, end = self.subword_span
            if not 0 <= start < end:
                raise ValueError(f"subword_span must be a non-empty range, got {self.subword_span}")

    def with_span(self, start: int, end: int) -> "AnnotatedToken":
        return replace(self, subword_span=(start, end))


def is_punct_pos(pos: str) -> bool:
    return pos in PUNCT_POS_TAGS


@runtime_checkable
class Annotator(Protocol):
    """Adapter interface for tokenize + POS tag + dependency parse."""

    name: str
    version: str

    def annotate(self, text: str) -> list[AnnotatedToken]:
        ...

    def annotate_pretokenized(self, words: Sequence[str]) -> list[AnnotatedToken]:
        ...


def annotator_fingerprint(annotator: Annotator) -> str:
    return f"{annotator.name}/{annotator.version}"


def annotate(text: str, annotator: Annotator, sentence_id: str = "<input>") -> list[AnnotatedToken]:
    """Run an annotator on one normalized sentence and validate its output.

    Raises AnnotationError (carrying ``sentence_id``) on empty input, adapter
    failure, tokens not covering the text, or out-of-range dependency heads.
    """
    if not text or not text.strip():
        raise AnnotationError(f"{sentence_id}: cannot annotate empty text")
    try:
        tokens = annotator.annotate(text)
    except AnnotationError:
        raise
    except Exception as exc:
        raise AnnotationError(f"{sentence_id}: annotator {annotator_fingerprint(annotator)} failed: {exc}") from exc
    if not tokens:
        raise AnnotationError(f"{sentence_id}: annotator produced no tokens")
    covered = "".join(t.surface for t in tokens)
    expected = "".join(text.split())
    if covered != expected:
        raise AnnotationError(
            f"{sentence_id}: tokens do not cover the text: {covered!r} != {expected!r}"
        )
    for i, tok in enumerate(tokens):
        if not (ROOT_HEAD <= tok.dep_head < len(tokens)):
            raise AnnotationError(
                f"{sentence_id}: token {i} ({tok.surface!r}) has dep_head {tok.dep_head} "
                f"outside [-1, {len(tokens)})"
            )
    return tokens


# ---------------------------------------------------------------------------
# Built-in lexicon annotator
# ---------------------------------------------------------------------------

# Small closed lexicon: surface -> POS tag. Longest-match segmentation over
# this table, with a character-class fallback for everything else. Meant for
# tests, demos and synthetic corpora; plug a real analyzer for production.
_LEXICON: dict[str, str] = {
    # particles
    "は": "助詞", "が": "助詞", "を": "助詞", "に": "助詞", "で": "助詞",
    "と": "助詞", "も": "助詞", "へ": "助詞", "の": "助詞", "から": "助詞",
    "まで": "助詞", "より": "助詞", "や": "助詞", "ね": "助詞", "よ": "助詞",
    # auxiliaries / copula
    "です": "助動詞", "ます": "助動詞", "でした": "助動詞", "ました": "助動詞",
    "だ": "助動詞", "である": "助動詞", "ない": "助動詞", "たい": "助動詞",
    # conjunctions
    "しかし": "接続詞", "そして": "接続詞", "だから": "接続詞", "でも": "接続詞",
    "また": "接続詞", "さらに": "接続詞", "ただし": "接続詞", "つまり": "接続詞",
    "および": "接続詞", "ところが": "接続詞",
    # frequent verbs (dictionary / polite stems)
    "行く": "動詞", "行き": "動詞", "見る": "動詞", "見え": "動詞", "食べる": "動詞",
    "読む": "動詞", "読み": "動詞", "書く": "動詞", "話す": "動詞", "聞く": "動詞",
    "作る": "動詞", "思う": "動詞", "言う": "動詞", "降る": "動詞", "降り": "動詞",
    "歩く": "動詞", "走る": "動詞", "休む": "動詞", "働く": "動詞", "眠る": "動詞",
    # frequent nouns
    "今日": "名詞", "明日": "名詞", "昨日": "名詞", "天気": "名詞", "晴れ": "名詞",
    "雨": "名詞", "雪": "名詞", "風": "名詞", "空": "名詞", "山": "名詞",
    "川": "名詞", "海": "名詞", "道": "名詞", "本": "名詞", "人": "名詞",
    "時間": "名詞", "仕事": "名詞", "学校": "名詞", "会社": "名詞", "朝": "名詞",
    "夜": "名詞", "水": "名詞", "犬": "名詞", "猫": "名詞", "家": "名詞",
    "町": "名詞", "駅": "名詞", "電車": "名詞", "音楽": "名詞", "映画": "名詞",
    # adverbs
    "とても": "副詞", "少し": "副詞", "もう": "副詞", "まだ": "副詞", "すぐ": "副詞",
    "ゆっくり": "副詞",
}

_MAX_LEXICON_LEN = max(len(w) for w in _LEXICON)

_PARTICLE_RELS = {"助詞": "case", "助動詞": "aux"}


def _char_class(ch: str) -> str:
    cp = ord(ch)
    if 0x3041 <= cp <= 0x309F:
        return "hiragana"
    if 0x30A0 <= cp <= 0x30FF or 0x31F0 <= cp <= 0x31FF or 0xFF66 <= cp <= 0xFF9D:
        return "katakana"
    if 0x4E00 <= cp <= 0x9FFF or 0x3400 <= cp <= 0x4DBF or ch in "々〆ヶ":
        return "kanji"
    if ch.isdigit():
        return "digit"
    if ch.isalpha():
        return "latin"
    if ch.isspace():
        return "space"
    cat = unicodedata.category(ch)
    if cat.startswith("P") or cat.startswith("S") or ch in "。、！？・…ー〜":
        return "punct"
    return "other"


_CLASS_POS = {
    "hiragana": "名詞",
    "katakana": "名詞",
    "kanji": "名詞",
    "digit": "名詞",
    "latin": "名詞",
    "other": "名詞",
    "punct": "補助記号",
}


class LexiconAnnotator:
    """Deterministic longest-match tokenizer with a head-final dependency
    heuristic: every non-punctuation token depends on the next one to its
    right, the last non-punctuation token is the root, and punctuation
    attaches to the preceding non-punctuation token.
    """

    name = "lexicon"
    version = "1.0"

    def annotate(self, text: str) -> list[AnnotatedToken]:
        words = self._segment(text)
        return self.annotate_pretokenized(words)

    def annotate_pretokenized(self, words: Sequence[str]) -> list[AnnotatedToken]:
        if not words:
            raise AnnotationError("no words to annotate")
        tagged = [(w, self._pos_of(w)) for w in words]
        heads, rels = self._attach(tagged)
        return [
            AnnotatedToken(
                surface=w,
                pos=pos,
                dep_head=heads[i],
                dep_rel=rels[i],
                is_punct=is_punct_pos(pos),
            )
            for i, (w, pos) in enumerate(tagged)
        ]

    def _segment(self, text: str) -> list[str]:
        words: list[str] = []
        i = 0
        n = len(text)
        while i < n:
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            matched = None
            for length in range(min(_MAX_LEXICON_LEN, n - i), 0, -1):
                candidate = text[i : i + length]
                if candidate in _LEXICON:
                    matched = candidate
                    break
            if matched is not None:
                words.append(matched)
                i += len(matched)
                continue
            cls = _char_class(ch)
            if cls == "punct":
                words.append(ch)
                i += 1
                continue
            # consume the character-class run, stopping where a lexicon word
            # or a different class begins
            j = i + 1
            while j < n and _char_class(text[j]) == cls and not self._lexicon_starts_at(text, j):
                j += 1
            words.append(text[i:j])
            i = j
        return words

    @staticmethod
    def _lexicon_starts_at(text: str, pos: int) -> bool:
        for length in range(1, min(_MAX_LEXICON_LEN, len(text) - pos) + 1):
            if text[pos : pos + length] in _LEXICON:
                return True
        return False

    @staticmethod
    def _pos_of(word: str) -> str:
        pos = _LEXICON.get(word)
        if pos is not None:
            return pos
        return _CLASS_POS[_char_class(word[0])]

    @staticmethod
    def _attach(tagged: Sequence[tuple[str, str]]) -> tuple[list[int], list[str]]:
        n = len(tagged)
        content = [i for i, (_, pos) in enumerate(tagged) if not is_punct_pos(pos)]
        root = content[-1] if content else n - 1
        heads = [ROOT_HEAD] * n
        rels = ["dep"] * n
        for i, (_, pos) in enumerate(tagged):
            if i == root:
                heads[i], rels[i] = ROOT_HEAD, "root"
            elif is_punct_pos(pos):
                before = [c for c in content if c < i]
                heads[i] = before[-1] if before else root
                rels[i] = "punct"
            else:
                nxt = next(c for c in content if c > i)
                heads[i] = nxt
                rels[i] = _PARTICLE_RELS.get(pos, "dep")
        return heads, rels


# ---------------------------------------------------------------------------
# Pretrained word embeddings
# ---------------------------------------------------------------------------


class EmbeddingTable:
    """Frozen word-vector table with a single shared zero unknown-word row.

    ``vectors`` has one row per vocabulary entry plus the unknown row last.
    """

    def __init__(self, vocabulary: dict[str, int], vectors: np.ndarray):
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        if vectors.shape[0] != len(vocabulary) + 1:
            raise ValueError(
                f"expected {len(vocabulary) + 1} rows (vocab + unknown), got {vectors.shape[0]}"
            )
        self.vocabulary = vocabulary
        self.vectors = vectors.astype(np.float32, copy=False)
        self.dimension = int(vectors.shape[1])
        self.unknown_index = len(vocabulary)

    def row_index(self, surface: str) -> int:
        return self.vocabulary.get(surface, self.unknown_index)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for surface in sorted(self.vocabulary):
            digest.update(surface.encode("utf-8"))
            digest.update(b"\0")
        digest.update(self.vectors.tobytes())
        return digest.hexdigest()[:16]

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[str, Sequence[float]]]) -> "EmbeddingTable":
        if not rows:
            raise ValueError("embedding table needs at least one row")
        dim = len(rows[0][1])
        vocabulary: dict[str, int] = {}
        vectors = np.zeros((len(rows) + 1, dim), dtype=np.float32)
        for i, (surface, vec) in enumerate(rows):
            if surface in vocabulary:
                raise ValueError(f"duplicate embedding entry {surface!r}")
            if len(vec) != dim:
                raise ValueError(f"row {surface!r} has dimension {len(vec)}, expected {dim}")
            vocabulary[surface] = i
            vectors[i] = vec
        return cls(vocabulary, vectors)


def parse_embedding_table(text: str, source: str = "<string>") -> EmbeddingTable:
    """Parse the plain word2vec text format: ``<vocab_size> <dim>`` header,
    then one ``surface v1 v2 ...`` line per word."""
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{source}: empty embedding table")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"{source}: malformed header, expected '<vocab_size> <dimension>'")
    vocab_size, dim = int(header[0]), int(header[1])
    rows: list[tuple[str, list[float]]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != dim + 1:
            raise ValueError(f"{source}:{lineno}: expected {dim} values, got {len(parts) - 1}")
        rows.append((parts[0], [float(v) for v in parts[1:]]))
    if len(rows) != vocab_size:
        raise ValueError(f"{source}: header promises {vocab_size} words, found {len(rows)}")
    return EmbeddingTable.from_rows(rows)


def format_embedding_table(table: EmbeddingTable) -> str:
    ordered = sorted(table.vocabulary.items(), key=lambda kv: kv[1])
    lines = [f"{len(ordered)} {table.dimension}"]
    for surface, idx in ordered:
        values = " ".join(repr(float(v)) for v in table.vectors[idx])
        lines.append(f"{surface} {values}")
    return "\n".join(lines) + "\n"


def read_embedding_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    return parse_embedding_table(path.read_text(encoding="utf-8"), source=str(path))


def write_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    Path(path).write_text(format_embedding_table(table), encoding="utf-8", newline="\n")


def lookup_embeddings(tokens: Sequence[AnnotatedToken], table: EmbeddingTable) -> np.ndarray:
    """Return a (token_count, dimension) matrix; OOV surfaces map to the
    shared unknown row."""
    indices = [table.row_index(tok.surface) for tok in tokens]
    return table.vectors[indices]


# ---------------------------------------------------------------------------
# Subword alignment
# ---------------------------------------------------------------------------

_SUBWORD_MARKERS = ("##", "▁", "Ġ")  # WordPiece, SentencePiece, byte BPE


def strip_subword_marker(subword: str) -> str:
    for marker in _SUBWORD_MARKERS:
        if subword.startswith(marker) and len(subword) > len(marker):
            return subword[len(marker):]
    return subword


@dataclass(frozen=True)
class SubwordAlignment:
    """Half-open spans into the subword sequence, one per word token.

    The spans partition [0, subword_count) in order.
    """

    spans: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        cursor = 0
        for span in self.spans:
            start, end = span
            if start != cursor or end <= start:
                raise AlignmentError(
                    f"spans must partition the subwords in order, got {self.spans}"
                )
            cursor = end

    @property
    def subword_count(self) -> int:
        return self.spans[-1][1] if self.spans else 0

    def __len__(self) -> int:
        return len(self.spans)


HEAD_DISTANCE_BUCKET_COUNT = 6


def head_distance_bucket(index: int, dep_head: int) -> int:
    """Bucket the signed head offset (head index minus token index).

    Buckets: 0 = [-8, -2], 1 = {-1}, 2 = root, 3 = {+1}, 4 = [+2, +8],
    5 = |offset| > 8.
    """
    if dep_head == ROOT_HEAD:
        return 2
    offset = dep_head - index
    if offset == 0:
        raise ValueError(f"token {index} is its own head")
    if offset == -1:
        return 1
    if offset == 1:
        return 3
    if -8 <= offset <= -2:
        return 0
    if 2 <= offset <= 8:
        return 4
    return 5


def align_subwords(tokens: Sequence[AnnotatedToken], subwords: Sequence[str]) -> SubwordAlignment:
    """Assign each word token its half-open span of subwords by character
    arithmetic over marker-stripped surfaces.

    Raises AlignmentError when the concatenated subwords do not reconstruct
    the concatenated token surfaces, or a subword straddles a token boundary.
    """
    token_text = "".join(tok.surface for tok in tokens)
    stripped = [strip_subword_marker(sw) for sw in subwords]
    subword_text = "".join(stripped)
    if token_text != subword_text:
        raise AlignmentError(
            f"subwords do not reconstruct the tokens: tokens={token_text!r} subwords={subword_text!r}"
        )
    boundaries = set()
    offset = 0
    for tok in tokens:
        offset += len(tok.surface)
        boundaries.add(offset)

    spans: list[tuple[int, int]] = []
    span_start = 0
    char_pos = 0
    for index, piece in enumerate(stripped):
        piece_start = char_pos
        char_pos += len(piece)
        if any(piece_start < b < char_pos for b in boundaries):
            raise AlignmentError(
                f"subword {subwords[index]!r} straddles a token boundary "
                f"(tokens={token_text!r} subwords={subword_text!r})"
            )
        if char_pos in boundaries:
            spans.append((span_start, index + 1))
            span_start = index + 1
    if len(spans) != len(tokens):
        raise AlignmentError(
            f"aligned {len(spans)} spans for {len(tokens)} tokens "
            f"(tokens={token_text!r} subwords={subword_text!r})"
        )
    return SubwordAlignment(spans=tuple(spans))
