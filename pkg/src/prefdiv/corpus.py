"""Corpus handling: gold answers, sampled responses, pools.

Responses arrive as JSONL dumps of model samples. This module extracts
final answers and equation chains from solution text, judges correctness
against gold answers, partitions records into correct/incorrect pools and
merges pools across iterations into a global pool.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "GoldItem",
    "ResponseRecord",
    "QuestionPools",
    "PoolSet",
    "CorpusError",
    "canonicalize_answer",
    "extract_final_answer",
    "extract_equation_chain",
    "load_gold",
    "load_responses",
    "write_responses",
    "judge",
    "partition",
    "merge_global",
]


class CorpusError(ValueError):
    """Malformed corpus input."""


@dataclass(frozen=True)
class GoldItem:
    question_id: str
    question: str
    gold_answer: str


@dataclass(frozen=True)
class ResponseRecord:
    """One sampled solution; ``correct`` is None until judged or when
    correctness cannot be determined (no parseable answer or no gold)."""

    question_id: str
    iteration: int
    sample_index: int
    text: str
    final_answer: str | None = None
    correct: bool | None = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.iteration, self.sample_index)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "iteration": self.iteration,
            "sample_index": self.sample_index,
            "text": self.text,
            "final_answer": self.final_answer,
            "correct": self.correct,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ResponseRecord":
        return cls(
            question_id=str(obj["question_id"]),
            iteration=int(obj["iteration"]),
            sample_index=int(obj["sample_index"]),
            text=str(obj["text"]),
            final_answer=obj.get("final_answer"),
            correct=obj.get("correct"),
        )


@dataclass
class QuestionPools:
    positives: list[ResponseRecord] = dataclasses.field(default_factory=list)
    negatives: list[ResponseRecord] = dataclasses.field(default_factory=list)
    undetermined: list[ResponseRecord] = dataclasses.field(default_factory=list)

    def all_records(self) -> list[ResponseRecord]:
        return self.positives + self.negatives + self.undetermined


@dataclass
class PoolSet:
    """Correct/incorrect/undetermined pools per question, tagged with the
    iterations the records came from."""

    questions: dict[str, QuestionPools]
    iterations: frozenset[int]

    def total_counts(self) -> tuple[int, int, int]:
        pos = sum(len(q.positives) for q in self.questions.values())
        neg = sum(len(q.negatives) for q in self.questions.values())
        und = sum(len(q.undetermined) for q in self.questions.values())
        return pos, neg, und


# Number tokens: optional sign, optional $, digits with comma grouping and
# an optional decimal part; must not butt up against letters or more digits.
# A bare trailing period (sentence punctuation) is allowed after the match.
_NUMBER_RE = re.compile(r"(?<![\w.])-?\$?\d(?:[\d,]*\d)?(?:\.\d+)?(?!\w)")
_PURE_NUMERIC_RE = re.compile(r"^-?\d+(?:\.\d+)?$")


def canonicalize_answer(raw: str) -> str:
    """Normalize an answer string for exact comparison.

    Strips whitespace, commas, trailing periods and one leading ``$``;
    on pure numerics removes a trailing ``.0`` run and maps ``-0`` to ``0``.
    """
    s = raw.strip().replace(",", "").rstrip(".")
    if s.startswith("$"):
        s = s[1:]
    s = s.strip()
    if _PURE_NUMERIC_RE.match(s):
        s = re.sub(r"\.0+$", "", s)
        if re.fullmatch(r"-0", s):
            s = "0"
    return s


def extract_final_answer(text: str) -> str | None:
    """Final answer of a solution text, canonicalized; None if absent.

    The tail after the last ``####`` marker wins when present (first number
    in the tail if the tail is not itself numeric); otherwise the last
    standalone number anywhere in the text.
    """
    marker = text.rfind("####")
    if marker != -1:
        tail = text[marker + 4 :]
        answer = canonicalize_answer(tail)
        if _PURE_NUMERIC_RE.match(answer):
            return answer
        m = _NUMBER_RE.search(tail)
        if m:
            return canonicalize_answer(m.group(0))
        return answer if answer else None
    matches = _NUMBER_RE.findall(text)
    if matches:
        return canonicalize_answer(matches[-1])
    return None


def extract_equation_chain(text: str) -> list[str]:
    """Ordered ``<<...>>`` annotations with internal whitespace removed.

    A ``<<`` that meets another ``<<`` before any ``>>`` is unbalanced and
    dropped; parsing resumes at the inner ``<<``.
    """
    chain: list[str] = []
    i = text.find("<<")
    while i != -1:
        close = text.find(">>", i + 2)
        if close == -1:
            break
        nxt = text.find("<<", i + 2)
        if nxt != -1 and nxt < close:
            i = nxt
            continue
        fragment = text[i + 2 : close]
        chain.append("".join(fragment.split()))
        i = text.find("<<", close + 2)
    return chain


def load_gold(path) -> dict[str, GoldItem]:
    """Load a gold JSONL file into a question_id -> GoldItem map."""
    items: dict[str, GoldItem] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                item = GoldItem(
                    question_id=str(obj["question_id"]),
                    question=str(obj["question"]),
                    gold_answer=canonicalize_answer(str(obj["gold_answer"])),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}: malformed gold line {lineno}: {exc}") from exc
            if not item.gold_answer:
                raise CorpusError(f"{path}: empty gold_answer at line {lineno}")
            if item.question_id in items:
                raise CorpusError(
                    f"{path}: duplicate question_id {item.question_id!r} at line {lineno}"
                )
            items[item.question_id] = item
    return items


def load_responses(path) -> list[ResponseRecord]:
    """Load a responses JSONL file; (question_id, iteration, sample_index)
    must be unique within the file."""
    records: list[ResponseRecord] = []
    seen: set[tuple[str, int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = ResponseRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: malformed response line {lineno}: {exc}") from exc
            ident = (rec.question_id, rec.iteration, rec.sample_index)
            if ident in seen:
                raise CorpusError(f"{path}: duplicate record {ident} at line {lineno}")
            seen.add(ident)
            records.append(rec)
    return records


def write_responses(path, records: Iterable[ResponseRecord]) -> None:
    """Write records as JSONL, sorted by (question_id, iteration,
    sample_index) for byte-stable output."""
    ordered = sorted(records, key=lambda r: (r.question_id, r.iteration, r.sample_index))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ordered:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def judge(
    records: Iterable[ResponseRecord], gold: dict[str, GoldItem]
) -> list[ResponseRecord]:
    """Attach final_answer and correctness to each record.

    correct is True/False only when an answer was extractable and a gold
    entry exists; otherwise None (undetermined). Idempotent.
    """
    judged = []
    for rec in records:
        answer = extract_final_answer(rec.text)
        item = gold.get(rec.question_id)
        if answer is None or item is None:
            verdict = None
        else:
            verdict = answer == item.gold_answer
        judged.append(dataclasses.replace(rec, final_answer=answer, correct=verdict))
    return judged


def partition(records: Iterable[ResponseRecord]) -> PoolSet:
    """Split judged records into per-question correct/incorrect/undetermined
    pools."""
    questions: dict[str, QuestionPools] = {}
    iterations: set[int] = set()
    for rec in records:
        pools = questions.setdefault(rec.question_id, QuestionPools())
        if rec.correct is True:
            pools.positives.append(rec)
        elif rec.correct is False:
            pools.negatives.append(rec)
        else:
            pools.undetermined.append(rec)
        iterations.add(rec.iteration)
    return PoolSet(questions=questions, iterations=frozenset(iterations))


def merge_global(pools: Iterable[PoolSet]) -> PoolSet:
    """Union pools across iterations (global sample pool).

    No deduplication; buckets are sorted by (iteration, sample_index).
    Pools sharing an iteration tag are rejected.
    """
    merged: dict[str, QuestionPools] = {}
    iterations: set[int] = set()
    for poolset in pools:
        overlap = iterations & poolset.iterations
        if overlap:
            raise CorpusError(
                f"pools share iteration tags {sorted(overlap)}; refusing to merge"
            )
        iterations |= poolset.iterations
        for qid, qp in poolset.questions.items():
            target = merged.setdefault(qid, QuestionPools())
            target.positives.extend(qp.positives)
            target.negatives.extend(qp.negatives)
            target.undetermined.extend(qp.undetermined)
    for qp in merged.values():
        qp.positives.sort(key=lambda r: r.key)
        qp.negatives.sort(key=lambda r: r.key)
        qp.undetermined.sort(key=lambda r: r.key)
    return PoolSet(questions=merged, iterations=frozenset(iterations))
