"""Corpus handling: break labels from time-aligned transcripts, the on-disk
TSV corpus format, and seeded train/validation/test splits.

TSV format: one token per line, blank line between utterances. Each block
opens with a ``# id=<utterance-id>`` comment line. Columns are surface, POS
tag, dependency head index (0-based, -1 for root), dependency relation, and
an optional binary break label. UTF-8, LF line endings.
"""

from __future__ import annotations

import os
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .lexfeat import AnnotatedToken, is_punct_pos

DEFAULT_BREAK_THRESHOLD_MS = 200


class CorpusParseError(ValueError):
    """Malformed corpus input; message carries file/line and utterance id."""


@dataclass(frozen=True)
class WordTiming:
    """One transcribed word with its start/end time in milliseconds."""

    surface: str
    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if self.start_ms < 0 or self.end_ms < 0:
            raise ValueError(f"timings must be non-negative, got [{self.start_ms}, {self.end_ms}]")
        if self.end_ms < self.start_ms:
            raise ValueError(
                f"end_ms {self.end_ms} precedes start_ms {self.start_ms} for {self.surface!r}"
            )


@dataclass
class Utterance:
    """One sentence: tokens plus optional gold break labels.

    ``labels[i] == 1`` means a phrase break follows token i.
    """

    id: str
    tokens: list[AnnotatedToken]
    labels: list[int] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("utterance id must be non-empty")
        if not self.tokens:
            raise ValueError(f"utterance {self.id}: needs at least one token")
        if self.labels is not None:
            if len(self.labels) != len(self.tokens):
                raise ValueError(
                    f"utterance {self.id}: {len(self.labels)} labels for {len(self.tokens)} tokens"
                )
            for label in self.labels:
                if label not in (0, 1):
                    raise ValueError(f"utterance {self.id}: label {label!r} is not binary")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class CorpusSplit:
    train: list[Utterance] = field(default_factory=list)
    validation: list[Utterance] = field(default_factory=list)
    test: list[Utterance] = field(default_factory=list)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def label_from_alignment(
    timings: Sequence[WordTiming],
    threshold_ms: int = DEFAULT_BREAK_THRESHOLD_MS,
) -> list[int]:
    """Mark a break after word i iff the silence before word i+1 is strictly
    longer than ``threshold_ms``. The final word's label is always 0: there
    is no transition after the end of the utterance.
    """
    if not timings:
        raise ValueError("timings must be non-empty")
    if threshold_ms <= 0:
        raise ValueError(f"threshold_ms must be positive, got {threshold_ms}")
    for prev, cur in zip(timings, timings[1:]):
        if cur.start_ms < prev.start_ms:
            raise ValueError(
                f"timings not sorted: {cur.surface!r} starts at {cur.start_ms} "
                f"before {prev.surface!r} at {prev.start_ms}"
            )
        if cur.start_ms < prev.end_ms:
            raise ValueError(
                f"timings overlap: {prev.surface!r} ends at {prev.end_ms}, "
                f"{cur.surface!r} starts at {cur.start_ms}"
            )
    labels = [
        1 if cur.start_ms - prev.end_ms > threshold_ms else 0
        for prev, cur in zip(timings, timings[1:])
    ]
    labels.append(0)
    return labels


# ---------------------------------------------------------------------------
# TSV reader / writer
# ---------------------------------------------------------------------------

_ID_PREFIX = "# id="


def read_corpus(path: str | Path) -> list[Utterance]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        return parse_corpus(handle, source=str(path))


def parse_corpus(lines: Iterable[str], source: str = "<corpus>") -> list[Utterance]:
    utterances: list[Utterance] = []
    seen_ids: set[str] = set()
    current_id: str | None = None
    rows: list[tuple[int, list[str]]] = []
    start_line = 0

    def flush() -> None:
        nonlocal current_id, rows
        if current_id is None:
            return
        utterances.append(_block_to_utterance(current_id, rows, source, start_line))
        current_id = None
        rows = []

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith(_ID_PREFIX):
            if current_id is not None:
                raise CorpusParseError(
                    f"{source}:{lineno}: new utterance header inside block {current_id!r} "
                    "(missing blank separator line)"
                )
            current_id = line[len(_ID_PREFIX):].strip()
            if not current_id:
                raise CorpusParseError(f"{source}:{lineno}: empty utterance id")
            if current_id in seen_ids:
                raise CorpusParseError(f"{source}:{lineno}: duplicate utterance id {current_id!r}")
            seen_ids.add(current_id)
            start_line = lineno
            continue
        if current_id is None:
            raise CorpusParseError(f"{source}:{lineno}: token line outside an utterance block")
        rows.append((lineno, line.split("\t")))
    flush()
    return utterances


def _block_to_utterance(
    utt_id: str, rows: list[tuple[int, list[str]]], source: str, start_line: int
) -> Utterance:
    if not rows:
        raise CorpusParseError(f"{source}:{start_line}: utterance {utt_id!r} has no tokens")
    widths = {len(fields) for _, fields in rows}
    if not widths <= {4, 5} or len(widths) != 1:
        bad = next((lineno, f) for lineno, f in rows if len(f) not in (4, 5) or len(widths) != 1)
        raise CorpusParseError(
            f"{source}:{bad[0]}: utterance {utt_id!r} has inconsistent columns "
            f"(expected 4 or 5 per line, uniformly)"
        )
    labeled = widths == {5}
    tokens: list[AnnotatedToken] = []
    labels: list[int] = []
    for lineno, fields in rows:
        surface, pos, head_s, rel = fields[0], fields[1], fields[2], fields[3]
        if not surface:
            raise CorpusParseError(f"{source}:{lineno}: utterance {utt_id!r}: empty surface")
        try:
            head = int(head_s)
        except ValueError:
            raise CorpusParseError(
                f"{source}:{lineno}: utterance {utt_id!r}: bad head index {head_s!r}"
            ) from None
        if head < -1 or head >= len(rows):
            raise CorpusParseError(
                f"{source}:{lineno}: utterance {utt_id!r}: head {head} outside [-1, {len(rows)})"
            )
        tokens.append(
            AnnotatedToken(
                surface=surface, pos=pos, dep_head=head, dep_rel=rel, is_punct=is_punct_pos(pos)
            )
        )
        if labeled:
            if fields[4] not in ("0", "1"):
                raise CorpusParseError(
                    f"{source}:{lineno}: utterance {utt_id!r}: label {fields[4]!r} is not 0/1"
                )
            labels.append(int(fields[4]))
    try:
        return Utterance(id=utt_id, tokens=tokens, labels=labels if labeled else None)
    except ValueError as exc:
        raise CorpusParseError(f"{source}:{start_line}: {exc}") from exc


def format_corpus(utterances: Sequence[Utterance]) -> str:
    blocks: list[str] = []
    for utt in utterances:
        _check_writable(utt)
        lines = [f"{_ID_PREFIX}{utt.id}"]
        for i, tok in enumerate(utt.tokens):
            fields = [tok.surface, tok.pos, str(tok.dep_head), tok.dep_rel]
            if utt.labels is not None:
                fields.append(str(utt.labels[i]))
            lines.append("\t".join(fields))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def _check_writable(utt: Utterance) -> None:
    if any(c in utt.id for c in "\t\n"):
        raise ValueError(f"utterance id {utt.id!r} contains tab or newline")
    for tok in utt.tokens:
        for value in (tok.surface, tok.pos, tok.dep_rel):
            if "\t" in value or "\n" in value:
                raise ValueError(
                    f"utterance {utt.id!r}: field {value!r} contains tab or newline"
                )


def write_corpus(utterances: Sequence[Utterance], path: str | Path) -> None:
    """Write atomically (temp file + rename); read_corpus round-trips the
    result field-for-field."""
    atomic_write_text(Path(path), format_corpus(utterances))


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_corpus(
    utterances: Sequence[Utterance],
    sizes: tuple[int, int, int],
    seed: int,
) -> CorpusSplit:
    """Seeded random split into disjoint train/validation/test sets that
    together cover the input exactly."""
    train_n, val_n, test_n = sizes
    if min(sizes) < 0:
        raise ValueError(f"split sizes must be non-negative, got {sizes}")
    if train_n + val_n + test_n != len(utterances):
        raise ValueError(
            f"split sizes {sizes} sum to {train_n + val_n + test_n}, "
            f"but the corpus has {len(utterances)} utterances"
        )
    order = list(range(len(utterances)))
    random.Random(seed).shuffle(order)
    picked = [utterances[i] for i in order]
    return CorpusSplit(
        train=picked[:train_n],
        validation=picked[train_n : train_n + val_n],
        test=picked[train_n + val_n :],
    )
