"""Quality and diversity measurements.

Distinct-N lexical diversity, embedding-cosine diversity, task-specific
distinct equation chains / distinct answers, @1 and @k accuracy, and
difficulty-level bucketing by correct ratio.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import ResponseRecord, extract_equation_chain
from .embed import mean_pairwise_similarity

__all__ = [
    "MetricsError",
    "NGRAM_MAX",
    "distinct_n",
    "embed_diversity",
    "distinct_equation_chains",
    "distinct_answers",
    "accuracy_at",
    "difficulty_level",
    "AccuracyReport",
    "DifficultyLevel",
    "PoolAggregate",
    "aggregate_pool_metric",
]

NGRAM_MAX = 5


class MetricsError(ValueError):
    """Metric preconditions violated."""


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def distinct_n(texts: Sequence[str], n_max: int = NGRAM_MAX) -> float:
    """Distinct-N ratio averaged over n = 1..n_max.

    Tokens are whitespace-split after lowercasing; for each n the n-grams
    of all texts are pooled and distinct/total is taken; n with no n-grams
    are excluded from the mean.
    """
    if not texts:
        raise MetricsError("distinct_n needs at least one response")
    token_lists = [_tokens(t) for t in texts]
    ratios = []
    for n in range(1, n_max + 1):
        grams: Counter = Counter()
        total = 0
        for toks in token_lists:
            for i in range(len(toks) - n + 1):
                grams[tuple(toks[i : i + n])] += 1
                total += 1
        if total > 0:
            ratios.append(len(grams) / total)
    if not ratios:
        raise MetricsError("distinct_n undefined: all responses are empty")
    return sum(ratios) / len(ratios)


def embed_diversity(vectors: Sequence[np.ndarray]) -> float:
    """1 - mean pairwise cosine similarity; a single vector has diversity 0.

    Zero vectors count as similarity 0 against everything.
    """
    if not len(vectors):
        raise MetricsError("embed_diversity needs at least one vector")
    if len(vectors) == 1:
        return 0.0
    return 1.0 - mean_pairwise_similarity(vectors)


def distinct_equation_chains(texts: Iterable[str]) -> int:
    """Number of unique equation-chain values over the responses (the empty
    chain counts as one value when present)."""
    return len({tuple(extract_equation_chain(t)) for t in texts})


def distinct_answers(answers: Iterable[str | None]) -> int:
    """Number of unique final answers; absent answers collapse into one
    value."""
    return len(set(answers))


@dataclass(frozen=True)
class AccuracyReport:
    at_1: float
    at_k: float
    k: int
    n_questions: int


def accuracy_at(records_by_question: dict[str, Sequence[ResponseRecord]], k: int) -> AccuracyReport:
    """@1 and @k accuracy over judged samples.

    Samples are ordered by sample_index; a question scores at @1 if its
    first sample is correct and at @k if any of its first k samples is.
    Undetermined records count as incorrect. Every question must have at
    least k samples.
    """
    if k < 1:
        raise MetricsError("k must be >= 1")
    if not records_by_question:
        raise MetricsError("accuracy_at needs at least one question")
    hit_1 = 0
    hit_k = 0
    for qid, records in sorted(records_by_question.items()):
        ordered = sorted(records, key=lambda r: r.sample_index)
        if len(ordered) < k:
            raise MetricsError(f"{qid} has {len(ordered)} < {k} samples")
        if ordered[0].correct is True:
            hit_1 += 1
        if any(r.correct is True for r in ordered[:k]):
            hit_k += 1
    n = len(records_by_question)
    return AccuracyReport(at_1=hit_1 / n, at_k=hit_k / n, k=k, n_questions=n)


@dataclass(frozen=True)
class DifficultyLevel:
    level: int
    correct_ratio: float


def difficulty_level(correct_ratio: float) -> DifficultyLevel:
    """Difficulty level 1 (easiest) .. 5 (hardest) from the correct ratio.

    Bins are left-closed: level 5 for R < 0.2, 4 for R < 0.4, 3 for R < 0.6,
    2 for R < 0.8, 1 for 0.8 <= R <= 1.
    """
    if not 0.0 <= correct_ratio <= 1.0:
        raise MetricsError(f"correct ratio must be in [0, 1], got {correct_ratio}")
    if correct_ratio < 0.2:
        level = 5
    elif correct_ratio < 0.4:
        level = 4
    elif correct_ratio < 0.6:
        level = 3
    elif correct_ratio < 0.8:
        level = 2
    else:
        level = 1
    return DifficultyLevel(level=level, correct_ratio=correct_ratio)


@dataclass
class PoolAggregate:
    """Unweighted per-question mean of one metric over one pool sign;
    questions whose relevant pool is empty (or where the metric is
    undefined) are excluded and counted."""

    mean: float | None
    n_questions: int
    n_excluded: int
    per_question: dict[str, float] = field(default_factory=dict)


def aggregate_pool_metric(values_by_question: dict[str, float | None]) -> PoolAggregate:
    """Aggregate per-question metric values, treating None as excluded."""
    per_question = {q: v for q, v in values_by_question.items() if v is not None}
    n_excluded = len(values_by_question) - len(per_question)
    if per_question:
        mean = sum(per_question.values()) / len(per_question)
    else:
        mean = None
    return PoolAggregate(
        mean=mean,
        n_questions=len(per_question),
        n_excluded=n_excluded,
        per_question=per_question,
    )
