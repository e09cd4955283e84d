"""Greedy diversity-maximizing selection and preference-pair construction.

A pool is filtered for outliers, then responses are picked one at a time,
each pick maximizing the diversity of the would-be selection. Selected
correct and incorrect responses are paired by cyclic index into at most P
preference pairs per question.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import QuestionPools, ResponseRecord
from .embed import EmbeddingStore, normalize_rows
from .forest import ForestConfig, filter_pool
from .kernels import greedy_pick
from .metrics import NGRAM_MAX, _tokens
from .seeding import derive_int, derive_rng

__all__ = [
    "SelectionConfig",
    "PreferencePair",
    "SelectionError",
    "greedy_select",
    "vanilla_select",
    "curate_question",
    "build_pairs",
]

OBJECTIVES = ("embed_diversity", "distinct_n")


class SelectionError(ValueError):
    """Invalid selection input."""


@dataclass(frozen=True)
class SelectionConfig:
    pairs_per_question: int = 5
    objective: str = "embed_diversity"
    seed: int = 0
    dedup: bool = True

    def __post_init__(self):
        if self.pairs_per_question < 1:
            raise ValueError("pairs_per_question must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


@dataclass(frozen=True)
class PreferencePair:
    question_id: str
    chosen: ResponseRecord
    rejected: ResponseRecord
    iteration_built: int

    def __post_init__(self):
        if self.chosen.correct is not True:
            raise SelectionError("chosen response must be correct")
        if self.rejected.correct is not False:
            raise SelectionError("rejected response must be incorrect")
        if self.chosen.question_id != self.rejected.question_id:
            raise SelectionError("pair must share a question")


def _dedup_canonical(pool: list) -> list:
    """Sort by record key; optionally collapse exact-duplicate texts keeping
    the lowest (iteration, sample_index)."""
    ordered = sorted(pool, key=lambda rv: rv[0].key)
    seen: set[str] = set()
    out = []
    for rec, vec in ordered:
        if rec.text in seen:
            continue
        seen.add(rec.text)
        out.append((rec, vec))
    return out


def greedy_select(
    pool: list,
    limit: int,
    objective: str = "embed_diversity",
    seed: int = 0,
    dedup: bool = True,
) -> list[ResponseRecord]:
    """Pick up to ``limit`` responses maximizing set diversity.

    ``pool`` is a list of (record, vector) tuples. The first pick is uniform
    under the seed; every later step adds the candidate whose inclusion
    maximizes the objective of the selection, ties broken by lowest
    (iteration, sample_index). Returns records in pick order.
    """
    if not pool:
        raise SelectionError("greedy_select: empty pool")
    if objective not in OBJECTIVES:
        raise SelectionError(f"unknown objective {objective!r}")
    items = _dedup_canonical(pool) if dedup else sorted(pool, key=lambda rv: rv[0].key)
    rng = derive_rng(seed, "greedy-first")
    first = int(rng.integers(len(items)))
    limit = min(limit, len(items))
    if objective == "embed_diversity":
        mat = normalize_rows([vec for _, vec in items])
        picks = greedy_pick(mat, first, limit)
        return [items[i][0] for i in picks]
    return _greedy_distinct_n(items, first, limit)


def _greedy_distinct_n(items: list, first: int, limit: int) -> list[ResponseRecord]:
    """Greedy selection under the Distinct-N objective, with incrementally
    maintained n-gram counts."""
    token_lists = [_tokens(rec.text) for rec, _ in items]
    gram_lists = []
    for toks in token_lists:
        per_n = []
        for n in range(1, NGRAM_MAX + 1):
            per_n.append([tuple(toks[i : i + n]) for i in range(len(toks) - n + 1)])
        gram_lists.append(per_n)

    selected_grams: list[Counter] = [Counter() for _ in range(NGRAM_MAX)]
    totals = [0] * NGRAM_MAX
    picks = [first]
    chosen = {first}

    def add(idx: int) -> None:
        for n_i in range(NGRAM_MAX):
            grams = gram_lists[idx][n_i]
            selected_grams[n_i].update(grams)
            totals[n_i] += len(grams)

    def objective_with(idx: int) -> float:
        ratios = []
        for n_i in range(NGRAM_MAX):
            grams = gram_lists[idx][n_i]
            total = totals[n_i] + len(grams)
            if total == 0:
                continue
            new = len({g for g in grams if g not in selected_grams[n_i]})
            ratios.append((len(selected_grams[n_i]) + new) / total)
        if not ratios:
            return 0.0
        return sum(ratios) / len(ratios)

    add(first)
    while len(picks) < limit:
        best = -1
        best_obj = -np.inf
        for j in range(len(items)):
            if j in chosen:
                continue
            obj = objective_with(j)
            if obj > best_obj:
                best_obj = obj
                best = j
        picks.append(best)
        chosen.add(best)
        add(best)
    return [items[i][0] for i in picks]


def vanilla_select(pool: list, limit: int, seed: int = 0) -> list[ResponseRecord]:
    """Baseline selection: uniform sample without replacement of
    min(limit, |pool|) records."""
    if not pool:
        raise SelectionError("vanilla_select: empty pool")
    ordered = sorted(pool, key=lambda rv: rv[0].key)
    rng = derive_rng(seed, "vanilla")
    take = min(limit, len(ordered))
    idx = rng.choice(len(ordered), size=take, replace=False)
    return [ordered[int(i)][0] for i in idx]


def curate_question(
    question_id: str,
    pools: QuestionPools,
    store: EmbeddingStore,
    forest_config: ForestConfig,
    selection_config: SelectionConfig,
) -> tuple[list[ResponseRecord], list[ResponseRecord]]:
    """Outlier-filter then greedy-select each side of one question's pools.

    Per-question seeds are derived from the config seeds and the question
    id, so results do not depend on question processing order.
    """
    selected: dict[str, list[ResponseRecord]] = {}
    for side, records in (("pos", pools.positives), ("neg", pools.negatives)):
        if not records:
            selected[side] = []
            continue
        pool = [(rec, store.vector_for(question_id, rec.text)) for rec in records]
        side_forest = ForestConfig(
            n_trees=forest_config.n_trees,
            subsample=forest_config.subsample,
            contamination=forest_config.contamination,
            seed=derive_int(forest_config.seed, "filter", question_id, side),
        )
        kept, _ = filter_pool(pool, side_forest)
        if not kept:
            selected[side] = []
            continue
        selected[side] = greedy_select(
            kept,
            selection_config.pairs_per_question,
            objective=selection_config.objective,
            seed=derive_int(selection_config.seed, "select", question_id, side),
            dedup=selection_config.dedup,
        )
    return selected["pos"], selected["neg"]


def build_pairs(
    selected_pos: list[ResponseRecord],
    selected_neg: list[ResponseRecord],
    limit: int,
    iteration_built: int = 1,
) -> list[PreferencePair]:
    """Pair selected positives and negatives by cyclic index.

    Produces min(limit, max(|pos|, |neg|)) pairs, cycling the shorter list;
    a question with an empty side yields no pairs.
    """
    if not selected_pos or not selected_neg:
        return []
    k = min(limit, max(len(selected_pos), len(selected_neg)))
    pairs = []
    for i in range(k):
        pairs.append(
            PreferencePair(
                question_id=selected_pos[0].question_id,
                chosen=selected_pos[i % len(selected_pos)],
                rejected=selected_neg[i % len(selected_neg)],
                iteration_built=iteration_built,
            )
        )
    return pairs
