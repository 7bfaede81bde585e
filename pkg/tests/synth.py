"""Synthetic corpus builders shared by the tests.

Break placement is a deterministic function of the token surfaces: every
comma carries a break, and a break precedes each occurrence of one seeded
"breaking" conjunction (roughly a tenth of conjunction slots). A sequence
model can therefore recover the labeling from text alone, while the
punctuation rule misses the conjunction breaks.
"""

from __future__ import annotations

import random

from phrasebreak.corpus import Utterance, WordTiming
from phrasebreak.lexfeat import AnnotatedToken, LexiconAnnotator

NOUNS = [
    "今日", "明日", "昨日", "天気", "晴れ", "雨", "雪", "風", "空", "山",
    "川", "海", "道", "本", "人", "時間", "仕事", "学校", "会社", "朝",
    "夜", "水", "犬", "猫", "家", "町", "駅", "電車", "音楽", "映画",
]
VERBS = ["行く", "見る", "食べる", "読む", "書く", "話す", "聞く", "作る", "思う", "言う"]
ADVERBS = ["とても", "少し", "もう", "まだ", "すぐ", "ゆっくり"]
PARTICLES = ["は", "が", "を", "に", "で", "と", "も", "の"]
CONJUNCTIONS = [
    "しかし", "そして", "だから", "でも", "また",
    "さらに", "ただし", "つまり", "および", "ところが",
]
COMMA = "、"
PERIOD = "。"

ALL_WORDS = NOUNS + VERBS + ADVERBS + PARTICLES + CONJUNCTIONS + [COMMA, PERIOD]


def corpus_characters() -> list[str]:
    return sorted({ch for word in ALL_WORDS for ch in word})


def _clause(rng: random.Random) -> list[str]:
    words = [rng.choice(NOUNS), rng.choice(PARTICLES)]
    if rng.random() < 0.3:
        words.append(rng.choice(ADVERBS))
    words.append(rng.choice(VERBS) if rng.random() < 0.5 else rng.choice(NOUNS))
    return words


def synthetic_corpus(
    size: int, seed: int, annotator: LexiconAnnotator | None = None
) -> tuple[list[Utterance], str]:
    """Returns (utterances, breaking_conjunction). Comma slots occur with
    probability 0.3 per connector, conjunction slots otherwise; exactly one
    of the ten conjunction types triggers a preceding break."""
    rng = random.Random(seed)
    breaking = rng.choice(CONJUNCTIONS)
    annotator = annotator or LexiconAnnotator()
    utterances = []
    for k in range(size):
        words: list[str] = []
        break_after: set[int] = set()
        for c in range(rng.randint(3, 5)):
            if c > 0:
                if rng.random() < 0.3:
                    words.append(COMMA)
                    break_after.add(len(words) - 1)
                else:
                    conj = rng.choice(CONJUNCTIONS)
                    if conj == breaking:
                        break_after.add(len(words) - 1)
                    words.append(conj)
            words.extend(_clause(rng))
        words.append(PERIOD)
        labels = [1 if i in break_after else 0 for i in range(len(words))]
        labels[-1] = 0
        tokens = annotator.annotate_pretokenized(words)
        utterances.append(Utterance(id=f"syn{seed}-{k}", tokens=tokens, labels=labels))
    return utterances, breaking


_POS_CHOICES = ["名詞", "動詞", "助詞", "副詞", "接続詞", "助動詞", "補助記号"]


def random_annotated_tokens(rng: random.Random, count: int | None = None) -> list[AnnotatedToken]:
    """Structurally valid tokens with arbitrary POS/head/relation content,
    for format and metric property tests (not meant to be learnable)."""
    n = count if count is not None else rng.randint(1, 12)
    tokens = []
    for i in range(n):
        pos = rng.choice(_POS_CHOICES)
        head = rng.choice([-1] + [j for j in range(n) if j != i])
        tokens.append(
            AnnotatedToken(
                surface=rng.choice(ALL_WORDS),
                pos=pos,
                dep_head=head,
                dep_rel=rng.choice(["dep", "case", "aux", "punct", "root"]),
                is_punct=pos == "補助記号",
            )
        )
    return tokens


def random_labeled_utterance(rng: random.Random, uid: str) -> Utterance:
    tokens = random_annotated_tokens(rng)
    labels = [rng.randint(0, 1) for _ in tokens]
    labels[-1] = 0
    return Utterance(id=uid, tokens=tokens, labels=labels)


def random_timings(rng: random.Random, count: int) -> list[WordTiming]:
    """Monotone, non-overlapping word timings with gaps straddling the
    break threshold."""
    timings = []
    clock = rng.randint(0, 50)
    for i in range(count):
        duration = rng.randint(80, 400)
        timings.append(WordTiming(surface=f"w{i}", start_ms=clock, end_ms=clock + duration))
        clock += duration + rng.choice([0, 50, 150, 199, 200, 201, 250, 400])
    return timings
