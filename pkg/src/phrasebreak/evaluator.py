"""Break-prediction scoring: outcome counting, precision/recall/F1 with
table-style rounding, punctuation-stratified breakdowns and corpus-level
micro-averaged reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Sequence

from .corpus import Utterance
from .lexfeat import AnnotatedToken

# Stratum rule, recorded in every report so alternative readings can be
# compared: a position is punctuation-adjacent when its own token is
# punctuation or the immediately following token is.
STRATUM_RULE = "position i is in the with-punctuation stratum iff token i is punctuation or token i+1 is punctuation"


@dataclass(frozen=True)
class OutcomeCounts:
    tp: int
    fn: int
    fp: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fn, self.fp) < 0:
            raise ValueError(f"counts must be non-negative: {self}")

    def __add__(self, other: "OutcomeCounts") -> "OutcomeCounts":
        return OutcomeCounts(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp)


def count_outcomes(predicted: Sequence[int], gold: Sequence[int]) -> OutcomeCounts:
    """True negatives are not tracked; they carry no weight in P/R/F1."""
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predictions vs {len(gold)} gold labels")
    tp = fn = fp = 0
    for p, g in zip(predicted, gold):
        if p not in (0, 1) or g not in (0, 1):
            raise ValueError(f"labels must be binary, got predicted={p!r} gold={g!r}")
        if g == 1:
            if p == 1:
                tp += 1
            else:
                fn += 1
        elif p == 1:
            fp += 1
    return OutcomeCounts(tp, fn, fp)


def _percent(numerator: int, denominator: int) -> Decimal:
    if denominator == 0:
        return Decimal(0)
    return Decimal(100) * Decimal(numerator) / Decimal(denominator)


def _round1(value: Decimal) -> float:
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def prf(counts: OutcomeCounts) -> tuple[float, float, float]:
    """Precision, recall and F1 in percent, rounded half-up to one decimal.
    Each 0/0 case is 0 by convention. Rounding happens once, at the end, on
    exactly computed ratios."""
    precision = _percent(counts.tp, counts.tp + counts.fp)
    recall = _percent(counts.tp, counts.tp + counts.fn)
    f1 = _percent(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn)
    return _round1(precision), _round1(recall), _round1(f1)


def prf_unrounded(counts: OutcomeCounts) -> tuple[float, float, float]:
    """Full-precision variant for comparisons too fine for table rounding,
    such as early-stopping improvement checks."""
    precision = _percent(counts.tp, counts.tp + counts.fp)
    recall = _percent(counts.tp, counts.tp + counts.fn)
    f1 = _percent(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn)
    return float(precision), float(recall), float(f1)


@dataclass(frozen=True)
class MetricBlock:
    counts: OutcomeCounts
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, counts: OutcomeCounts) -> "MetricBlock":
        precision, recall, f1 = prf(counts)
        return cls(counts=counts, precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class StratifiedReport:
    overall: MetricBlock
    with_punct: MetricBlock
    without_punct: MetricBlock

    def __post_init__(self) -> None:
        summed = self.with_punct.counts + self.without_punct.counts
        if summed != self.overall.counts:
            raise ValueError(
                f"strata {self.with_punct.counts} + {self.without_punct.counts} "
                f"do not sum to overall {self.overall.counts}"
            )


def punctuation_adjacent(tokens: Sequence[AnnotatedToken]) -> list[bool]:
    flags = []
    for i, token in enumerate(tokens):
        next_is_punct = i + 1 < len(tokens) and tokens[i + 1].is_punct
        flags.append(token.is_punct or next_is_punct)
    return flags


def stratum_counts(
    predicted: Sequence[int], gold: Sequence[int], tokens: Sequence[AnnotatedToken]
) -> tuple[OutcomeCounts, OutcomeCounts]:
    """(with-punctuation, without-punctuation) outcome counts for one
    aligned utterance."""
    if not len(predicted) == len(gold) == len(tokens):
        raise ValueError(
            f"misaligned inputs: {len(predicted)} predictions, {len(gold)} gold, "
            f"{len(tokens)} tokens"
        )
    adjacent = punctuation_adjacent(tokens)
    with_pred = [p for p, a in zip(predicted, adjacent) if a]
    with_gold = [g for g, a in zip(gold, adjacent) if a]
    without_pred = [p for p, a in zip(predicted, adjacent) if not a]
    without_gold = [g for g, a in zip(gold, adjacent) if not a]
    return (
        count_outcomes(with_pred, with_gold),
        count_outcomes(without_pred, without_gold),
    )


def stratify(
    predicted: Sequence[int], gold: Sequence[int], tokens: Sequence[AnnotatedToken]
) -> StratifiedReport:
    with_counts, without_counts = stratum_counts(predicted, gold, tokens)
    return StratifiedReport(
        overall=MetricBlock.from_counts(with_counts + without_counts),
        with_punct=MetricBlock.from_counts(with_counts),
        without_punct=MetricBlock.from_counts(without_counts),
    )


def evaluate_system(
    predict: Callable[[Utterance], Sequence[int]],
    test: Sequence[Utterance],
) -> StratifiedReport:
    """Run ``predict`` over every labeled test utterance, aggregate counts
    per stratum across the whole set, then compute the metrics once on the
    aggregates (micro-averaging)."""
    with_total = OutcomeCounts(0, 0, 0)
    without_total = OutcomeCounts(0, 0, 0)
    for utterance in test:
        if utterance.labels is None:
            raise ValueError(f"test utterance {utterance.id} has no gold labels")
        predicted = list(predict(utterance))
        if len(predicted) != len(utterance.tokens):
            raise ValueError(
                f"utterance {utterance.id}: {len(predicted)} predictions for "
                f"{len(utterance.tokens)} tokens"
            )
        with_counts, without_counts = stratum_counts(
            predicted, utterance.labels, utterance.tokens
        )
        with_total = with_total + with_counts
        without_total = without_total + without_counts
    return StratifiedReport(
        overall=MetricBlock.from_counts(with_total + without_total),
        with_punct=MetricBlock.from_counts(with_total),
        without_punct=MetricBlock.from_counts(without_total),
    )


def _format_row(name: str, block: MetricBlock) -> str:
    c = block.counts
    return (
        f"{name:<20} {c.tp:>8} {c.fn:>8} {c.fp:>8} "
        f"{block.f1:>8.1f} {block.precision:>10.1f} {block.recall:>8.1f}"
    )


def render_report(report: StratifiedReport) -> str:
    """Human-readable summary: an overall block, then the punctuation
    strata. Column order is TP, FN, FP, F1, precision, recall. The stratum
    rule is restated so the numbers are interpretable on their own."""
    header = (
        f"{'':<20} {'tp':>8} {'fn':>8} {'fp':>8} "
        f"{'f1':>8} {'precision':>10} {'recall':>8}"
    )
    lines = [
        f"# {STRATUM_RULE}",
        "== overall ==",
        header,
        _format_row("all positions", report.overall),
        "",
        "== by punctuation ==",
        header,
        _format_row("with punctuation", report.with_punct),
        _format_row("without punctuation", report.without_punct),
    ]
    return "\n".join(lines) + "\n"


def report_to_dict(report: StratifiedReport) -> dict:
    def block(b: MetricBlock) -> dict:
        return {
            "tp": b.counts.tp,
            "fn": b.counts.fn,
            "fp": b.counts.fp,
            "precision": b.precision,
            "recall": b.recall,
            "f1": b.f1,
        }

    return {
        "stratum_rule": STRATUM_RULE,
        "overall": block(report.overall),
        "with_punctuation": block(report.with_punct),
        "without_punctuation": block(report.without_punct),
    }
