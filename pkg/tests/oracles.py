"""Frozen benchmark rows used as metric oracles.

Each row pairs raw outcome counts with the percentages they must produce.
The expected values were verified by hand with exact rational arithmetic
(half-up rounding to one decimal), so they double as a regression pin on
the rounding behaviour. Per-system strata counts sum exactly to the
overall counts; several tests rely on that additivity.
"""

# (tp, fn, fp) -> (f1, precision, recall), grouped per system.
OVERALL_ROWS = [
    ((653, 114, 53), (88.7, 92.5, 85.1)),
    ((676, 91, 56), (90.2, 92.3, 88.1)),
    ((688, 79, 39), (92.1, 94.6, 89.7)),
    ((690, 77, 42), (92.1, 94.3, 90.0)),
    ((709, 58, 43), (93.4, 94.3, 92.4)),
]

WITH_PUNCT_ROWS = [
    ((357, 0, 1), (99.9, 99.7, 100.0)),
    ((357, 0, 1), (99.9, 99.7, 100.0)),
    ((355, 2, 0), (99.7, 100.0, 99.4)),
    ((356, 1, 1), (99.7, 99.7, 99.7)),
    ((357, 0, 1), (99.9, 99.7, 100.0)),
]

WITHOUT_PUNCT_ROWS = [
    ((296, 114, 52), (78.1, 85.1, 72.2)),
    ((319, 91, 55), (81.4, 85.3, 77.8)),
    ((333, 77, 39), (85.2, 89.5, 81.2)),
    ((334, 76, 41), (85.1, 89.1, 81.5)),
    ((352, 58, 42), (87.6, 89.3, 85.9)),
]

ALL_ROWS = OVERALL_ROWS + WITH_PUNCT_ROWS + WITHOUT_PUNCT_ROWS
